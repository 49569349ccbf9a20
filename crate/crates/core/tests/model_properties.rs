use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsad_core::autodiff::{activation, conv1d_dilated, dropout_mask, Activation, Padding, Tape};
use tsad_core::models::{
    lstm_cell, lstm_forward, tcn_forward, Architecture, Forecaster, LstmConfig, LstmGates, Mode,
    ModelParams, Tcn, TcnConfig,
};
use tsad_core::Tensor;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn tcn_config() -> impl Strategy<Value = TcnConfig> {
    (1usize..4, 1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(blocks, filters, k, c)| {
        prop::collection::vec(1usize..5, blocks).prop_map(move |dilations| TcnConfig {
            num_blocks: blocks,
            filters,
            kernel_length: k,
            dilations,
            padding: Padding::Causal,
            input_channels: c,
        })
    })
}

/// Per-element evaluation of the four gate equations.
fn scalar_cell(x: &[f64], h: &[f64], c: &[f64], gates: &LstmGates) -> (Vec<f64>, Vec<f64>) {
    let units = h.len();
    let wi = gates.w_input.data();
    let wr = gates.w_recurrent.data();
    let b = gates.bias.data();
    let pre = |col: usize| {
        let mut a = b[col];
        for (r, xv) in x.iter().enumerate() {
            a += xv * wi[r * 4 * units + col];
        }
        for (r, hv) in h.iter().enumerate() {
            a += hv * wr[r * 4 * units + col];
        }
        a
    };
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h_next = vec![0.0; units];
    let mut c_next = vec![0.0; units];
    for u in 0..units {
        let f = sigmoid(pre(u));
        let i = sigmoid(pre(units + u));
        let g = pre(2 * units + u).tanh();
        let o = sigmoid(pre(3 * units + u));
        c_next[u] = f * c[u] + i * g;
        h_next[u] = o * c_next[u].tanh();
    }
    (h_next, c_next)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tcn_features_ignore_future_rows(cfg in tcn_config(), steps in 1usize..12, seed in any::<u64>(), cut in 0usize..12) {
        let cut = cut % steps;
        let model = Tcn::new(cfg.clone()).unwrap();
        let params = model.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = random(&mut rng, &[1, steps, cfg.input_channels], 2.0);
        let mut perturbed = window.clone();
        for v in &mut perturbed.data_mut()[(cut + 1) * cfg.input_channels..] {
            *v += rng.gen_range(-50.0..50.0);
        }
        let features = |w: &Tensor| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let x = tape.constant(w.clone());
            let out = model.features(&mut tape, &bound, x).unwrap();
            tape.value(out).clone()
        };
        let (a, b) = (features(&window), features(&perturbed));
        let prefix = (cut + 1) * cfg.filters;
        for (x, y) in a.data()[..prefix].iter().zip(&b.data()[..prefix]) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn tcn_forward_is_deterministic(cfg in tcn_config(), steps in 1usize..10, seed in any::<u64>()) {
        let model = Tcn::new(cfg.clone()).unwrap();
        let params = model.init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let window = random(&mut rng, &[steps, cfg.input_channels], 2.0);
        let a = tcn_forward(&window, &cfg, &params).unwrap();
        let b = tcn_forward(&window, &cfg, &params).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn conv_is_causal_and_length_preserving(
        steps in 1usize..15, c_in in 1usize..3, c_out in 1usize..3, k in 1usize..5, d in 1usize..4,
        seed in any::<u64>(), cut in 0usize..15,
    ) {
        let cut = cut % steps;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[steps, c_in], 1.0);
        let w = random(&mut rng, &[k, c_in, c_out], 1.0);
        let b = random(&mut rng, &[c_out], 1.0);
        for padding in [Padding::Causal, Padding::Same] {
            let y = conv1d_dilated(&x, &w, &b, d, padding).unwrap();
            prop_assert_eq!(y.shape(), &[steps, c_out][..]);
        }
        let mut future = x.clone();
        for v in &mut future.data_mut()[(cut + 1) * c_in..] {
            *v = rng.gen_range(-1e3..1e3);
        }
        let y0 = conv1d_dilated(&x, &w, &b, d, Padding::Causal).unwrap();
        let y1 = conv1d_dilated(&future, &w, &b, d, Padding::Causal).unwrap();
        let prefix = (cut + 1) * c_out;
        prop_assert_eq!(&y0.data()[..prefix], &y1.data()[..prefix]);
    }

    #[test]
    fn lstm_cell_matches_scalar_loop(c in 1usize..6, units in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates = LstmGates {
            w_input: random(&mut rng, &[c, 4 * units], 1.5),
            w_recurrent: random(&mut rng, &[units, 4 * units], 1.5),
            bias: random(&mut rng, &[4 * units], 1.0),
        };
        let x = random(&mut rng, &[c], 2.0);
        let h = random(&mut rng, &[units], 1.0);
        let cs = random(&mut rng, &[units], 2.0);
        let (h1, c1) = lstm_cell(&x, &h, &cs, &gates).unwrap();
        let (h2, c2) = scalar_cell(x.data(), h.data(), cs.data(), &gates);
        for (a, b) in h1.data().iter().zip(&h2).chain(c1.data().iter().zip(&c2)) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn lstm_forward_is_deterministic_per_seed(units in prop::collection::vec(1usize..6, 1..4), seed in any::<u64>(), mode_seed in any::<u64>()) {
        let cfg = LstmConfig { layer_units: units, dropout_rate: 0.2, input_channels: 2 };
        let params = Architecture::Lstm(cfg.clone()).build().unwrap().init_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = random(&mut rng, &[5, 2], 1.0);
        let mode = Mode::Train { seed: mode_seed };
        let a = lstm_forward(&window, &cfg, &params, mode).unwrap();
        let b = lstm_forward(&window, &cfg, &params, mode).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn activations_stay_inside_codomain(x in prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL) {
        let t = Tensor::vector(vec![x]);
        let th = activation(&t, Activation::Tanh).data()[0];
        let sg = activation(&t, Activation::Sigmoid).data()[0];
        prop_assert!(th > -1.0 && th < 1.0, "tanh({}) = {}", x, th);
        prop_assert!(sg > 0.0 && sg < 1.0, "sigmoid({}) = {}", x, sg);
    }

    #[test]
    fn inference_dropout_is_bitwise_identity(values in prop::collection::vec(-1e6f64..1e6, 1..50), rate in 0.0f64..0.99, seed in any::<u64>()) {
        let t = Tensor::vector(values);
        let out = dropout_mask(&t, rate, seed, false).unwrap();
        prop_assert_eq!(out.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn seeds_change_values_never_shapes(cfg in tcn_config(), a in any::<u64>(), b in any::<u64>()) {
        let model = Tcn::new(cfg).unwrap();
        let (pa, pb) = (model.init_params(a), model.init_params(b));
        prop_assert_eq!(pa.parameter_count(), pb.parameter_count());
        for ((na, ta), (nb, tb)) in pa.iter().zip(pb.iter()) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(ta.shape(), tb.shape());
        }
        pa.check_layout(&model.param_specs()).unwrap();
    }

    #[test]
    fn checkpoint_round_trip_is_exact(cfg in tcn_config(), seed in any::<u64>()) {
        let model = Tcn::new(cfg).unwrap();
        let params = model.init_params(seed);
        let bytes = params.to_bytes(&model.architecture()).unwrap();
        let (arch, back): (Architecture, ModelParams) = ModelParams::from_bytes(&bytes).unwrap();
        prop_assert_eq!(arch, model.architecture());
        prop_assert_eq!(back, params);
    }
}

#[test]
fn checkpoint_file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.ckpt");
    let arch = Architecture::Lstm(LstmConfig::three_layer(3));
    let params = arch.build().unwrap().init_params(3);
    params.save(&path, &arch).unwrap();
    let (arch2, params2) = ModelParams::load(&path).unwrap();
    assert_eq!((arch2, params2), (arch, params));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(ModelParams::from_bytes(&bytes).is_err());
    assert!(ModelParams::from_bytes(b"not a checkpoint").is_err());
}
