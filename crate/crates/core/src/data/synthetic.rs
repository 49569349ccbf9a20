//! Seeded synthetic scenarios resembling a tank-level / analyser sensor trio.
//!
//! The default scenario has one fill/drain level channel (`LIT301`) and two
//! slowly drifting analyser channels (`AIT301`, `AIT302`), each with white
//! measurement noise. Attack scripts offset one channel over a contiguous
//! row range and label those rows as attacks.

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Label, SeriesFrame};
use crate::error::{Error, Result};
use crate::models::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "archetype", rename_all = "snake_case")]
pub enum ChannelArchetype {
    /// Level rising linearly from `low` to `high` over `fill_steps`, then
    /// falling back over `drain_steps`.
    TankLevel {
        name: String,
        low: f64,
        high: f64,
        fill_steps: usize,
        drain_steps: usize,
        #[serde(default)]
        phase: usize,
        noise_sd: f64,
    },
    /// Discrete Ornstein-Uhlenbeck drift around `mean`.
    MeanReverting {
        name: String,
        mean: f64,
        reversion: f64,
        volatility: f64,
        noise_sd: f64,
    },
}

impl ChannelArchetype {
    pub fn name(&self) -> &str {
        match self {
            ChannelArchetype::TankLevel { name, .. }
            | ChannelArchetype::MeanReverting { name, .. } => name,
        }
    }

    fn generate(&self, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let normal = |sd: f64| {
            Normal::new(0.0, sd).map_err(|e| Error::Spec(format!("channel `{}`: {e}", self.name())))
        };
        match *self {
            ChannelArchetype::TankLevel {
                low,
                high,
                fill_steps,
                drain_steps,
                phase,
                noise_sd,
                ..
            } => {
                if fill_steps == 0 || drain_steps == 0 {
                    return Err(Error::Spec(
                        "tank fill and drain steps must be positive".into(),
                    ));
                }
                let noise = normal(noise_sd)?;
                let period = fill_steps + drain_steps;
                Ok((0..length)
                    .map(|t| {
                        let p = (t + phase) % period;
                        let level = if p < fill_steps {
                            low + (high - low) * p as f64 / fill_steps as f64
                        } else {
                            high - (high - low) * (p - fill_steps) as f64 / drain_steps as f64
                        };
                        level + noise.sample(rng)
                    })
                    .collect())
            }
            ChannelArchetype::MeanReverting {
                mean,
                reversion,
                volatility,
                noise_sd,
                ..
            } => {
                let shock = normal(volatility)?;
                let noise = normal(noise_sd)?;
                let mut state = mean;
                Ok((0..length)
                    .map(|_| {
                        state += reversion * (mean - state) + shock.sample(rng);
                        state + noise.sample(rng)
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttackKind {
    /// Constant offset over the segment.
    LevelShift { offset: f64 },
    /// Offset growing by `slope` per row, starting at `slope` on the first row.
    Ramp { slope: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScript {
    pub channel: String,
    /// First attacked row.
    pub start: usize,
    /// One past the last attacked row.
    pub end: usize,
    #[serde(flatten)]
    pub kind: AttackKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub length: usize,
    /// `None` lets the caller supply the seed (the runner uses the run seed).
    pub seed: Option<u64>,
    pub start: DateTime<Utc>,
    pub interval_secs: i64,
    pub channels: Vec<ChannelArchetype>,
    pub attacks: Vec<AttackScript>,
}

impl Default for SyntheticSpec {
    /// 14,996 one-second rows with a 270-row level-shift attack on `LIT301`
    /// over rows 14000..14270, inside the default test segment so training
    /// and validation stay attack-free.
    fn default() -> Self {
        Self {
            length: 14_996,
            seed: None,
            start: DateTime::parse_from_rfc3339("2019-07-20T04:30:00Z")
                .expect("valid literal")
                .with_timezone(&Utc),
            interval_secs: 1,
            channels: vec![
                ChannelArchetype::TankLevel {
                    name: "LIT301".into(),
                    low: 800.0,
                    high: 1000.0,
                    fill_steps: 450,
                    drain_steps: 150,
                    phase: 0,
                    noise_sd: 0.5,
                },
                ChannelArchetype::MeanReverting {
                    name: "AIT301".into(),
                    mean: 8.5,
                    reversion: 0.005,
                    volatility: 0.01,
                    noise_sd: 0.01,
                },
                ChannelArchetype::MeanReverting {
                    name: "AIT302".into(),
                    mean: 300.0,
                    reversion: 0.002,
                    volatility: 0.5,
                    noise_sd: 0.2,
                },
            ],
            attacks: vec![AttackScript {
                channel: "LIT301".into(),
                start: 14_000,
                end: 14_270,
                kind: AttackKind::LevelShift { offset: 400.0 },
            }],
        }
    }
}

impl SyntheticSpec {
    /// The default channels over `length` rows with one level-shift attack on
    /// `LIT301` covering `attack`.
    pub fn with_attack(length: usize, attack: std::ops::Range<usize>, offset: f64) -> Self {
        Self {
            length,
            attacks: vec![AttackScript {
                channel: "LIT301".into(),
                start: attack.start,
                end: attack.end,
                kind: AttackKind::LevelShift { offset },
            }],
            ..Self::default()
        }
    }
}

/// Generates the scenario described by `spec`. Identical specs (including
/// seed) produce bitwise-identical frames.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SeriesFrame> {
    if spec.length == 0 {
        return Err(Error::Spec("length must be positive".into()));
    }
    if spec.channels.is_empty() {
        return Err(Error::Spec("at least one channel is required".into()));
    }
    if spec.interval_secs <= 0 {
        return Err(Error::Spec("sampling interval must be positive".into()));
    }
    let seed = spec.seed.unwrap_or(0);
    let names: Vec<String> = spec.channels.iter().map(|c| c.name().to_string()).collect();

    let mut columns = Vec::with_capacity(spec.channels.len());
    for (i, channel) in spec.channels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, 0));
        columns.push(channel.generate(spec.length, &mut rng)?);
    }

    let mut labels = vec![Label::Normal; spec.length];
    for attack in &spec.attacks {
        if attack.start >= attack.end || attack.end > spec.length {
            return Err(Error::Spec(format!(
                "attack rows {}..{} outside 0..{}",
                attack.start, attack.end, spec.length
            )));
        }
        let idx = names
            .iter()
            .position(|n| *n == attack.channel)
            .ok_or_else(|| {
                Error::Spec(format!(
                    "attack targets unknown channel `{}`",
                    attack.channel
                ))
            })?;
        for (k, row) in (attack.start..attack.end).enumerate() {
            let offset = match attack.kind {
                AttackKind::LevelShift { offset } => offset,
                AttackKind::Ramp { slope } => slope * (k + 1) as f64,
            };
            columns[idx][row] += offset;
            labels[row] = Label::Anomaly;
        }
    }

    let step = Duration::seconds(spec.interval_secs);
    let timestamps = (0..spec.length as i32)
        .map(|t| spec.start + step * t)
        .collect();
    SeriesFrame::new(timestamps, names, columns, Some(labels))
}
