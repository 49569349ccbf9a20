use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use tsad_core::autodiff::Padding;
use tsad_core::data::{make_windows, SeriesFrame};
use tsad_core::models::{ModelParams, Tcn, TcnConfig};
use tsad_core::train::{adam_step, mse, predict, train, AdamState, TrainConfig};
use tsad_core::Tensor;

fn sine_frame(n: usize) -> SeriesFrame {
    let t0 = Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap();
    let ts = (0..n as i64).map(|i| t0 + Duration::seconds(i)).collect();
    let col = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 12.5).sin())
        .collect();
    SeriesFrame::new(ts, vec!["x".into()], vec![col], None).unwrap()
}

fn tiny_tcn() -> Tcn {
    Tcn::new(TcnConfig {
        num_blocks: 1,
        filters: 8,
        kernel_length: 5,
        dilations: vec![1],
        padding: Padding::Causal,
        input_channels: 1,
    })
    .unwrap()
}

/// Full-batch steps (40 windows < 128) so the loss curve reflects the
/// optimizer rather than batch-to-batch noise.
fn smoke_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 200,
        learning_rate: 0.02,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn tiny_tcn_learns_a_sine() {
    let ds = make_windows(&sine_frame(50), 10, "x").unwrap();
    let model = tiny_tcn();
    for seed in 0..5 {
        let out = train(&model, &smoke_config(seed), &ds, &ds).unwrap();
        let preds = predict(&model, &out.params, &ds).unwrap();
        let loss = mse(&preds, ds.targets()).unwrap();
        assert!(loss < 1e-3, "seed {seed}: final train MSE {loss}");
    }
}

#[test]
fn smoothed_training_loss_trends_down() {
    let ds = make_windows(&sine_frame(50), 10, "x").unwrap();
    for seed in 0..5 {
        let out = train(&tiny_tcn(), &smoke_config(seed), &ds, &ds).unwrap();
        let means: Vec<f64> = out
            .history
            .step_losses
            .chunks(10)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for (i, w) in means.windows(2).enumerate() {
            assert!(
                w[1] <= w[0],
                "seed {seed}, window {} rose: {} → {}",
                i + 1,
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn runs_are_bitwise_reproducible() {
    let ds = make_windows(&sine_frame(80), 10, "x").unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 8,
        validate_every_steps: 7,
        seed: 42,
        ..TrainConfig::default()
    };
    let a = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
    let b = train(&tiny_tcn(), &cfg, &ds, &ds).unwrap();
    assert_eq!(a.params, b.params);
    let (mut ha, mut hb) = (Vec::new(), Vec::new());
    a.history.write_csv(&mut ha).unwrap();
    b.history.write_csv(&mut hb).unwrap();
    assert_eq!(ha, hb);
    let steps: Vec<_> = a.history.records.iter().map(|r| r.step).collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]), "{steps:?}");
}

proptest! {
    #[test]
    fn adam_keeps_second_moment_non_negative(grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..20)) {
        let cfg = TrainConfig::default();
        let mut params = ModelParams::new();
        params.insert("w", Tensor::zeros(&[4]));
        let mut state = AdamState::new(&params);
        for g in grads {
            let mut gp = ModelParams::new();
            gp.insert("w", Tensor::vector(g));
            adam_step(&mut params, &gp, &mut state, &cfg).unwrap();
            prop_assert!(state.v.get("w").unwrap().data().iter().all(|v| *v >= 0.0));
            prop_assert_eq!(state.m.get("w").unwrap().shape(), &[4][..]);
        }
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_identity(values in prop::collection::vec(-10f64..10.0, 1..10)) {
        let cfg = TrainConfig::default();
        let mut params = ModelParams::new();
        params.insert("w", Tensor::vector(values.clone()));
        let mut state = AdamState::new(&params);
        let mut zeros = ModelParams::new();
        zeros.insert("w", Tensor::zeros(&[values.len()]));
        adam_step(&mut params, &zeros, &mut state, &cfg).unwrap();
        prop_assert_eq!(params.get("w").unwrap().data(), &values[..]);
    }
}
