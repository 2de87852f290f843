mod common;

use cfn_learn::experiment::{self, TrainConfig};
use cfn_learn::loss::MaskSize;
use cfn_learn::mlp::{AdamConfig, Checkpoint, MlpConfig, ParamGrad, ParamStore};
use cfn_learn::sudoku;
use common::rng;
use rand::RngCore;

/// 1 -> 1 -> 1 network whose first weight is the parameter under test.
fn scalar_store(w: f64) -> ParamStore {
    let cfg = MlpConfig {
        input_dim: 1,
        hidden_width: 1,
        hidden_layers: 1,
        residual_period: 0,
        output_dim: 1,
    };
    let mut p = ParamStore::zeros(cfg).unwrap();
    p.set_flat(0, w);
    p
}

fn grad_on_first(p: &ParamStore, g: f64) -> ParamGrad {
    let mut grad = ParamGrad::zeros_like(p);
    grad.weights[0][[0, 0]] = g;
    grad
}

#[test]
fn first_step_moves_by_learning_rate() {
    let mut p = scalar_store(1.0);
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    p.adam_step(&grad_on_first(&p, 1.0), &cfg).unwrap();
    let w = p.weights[0][[0, 0]];
    assert!((w - 0.999).abs() < 1e-8, "{w}");
}

/// Reference AdamW on one scalar.
fn reference(w0: f64, grads: &[f64], cfg: &AdamConfig) -> (f64, f64, f64) {
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    for (t, &g0) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        let g = if cfg.decoupled {
            w -= cfg.lr * cfg.weight_decay * w;
            g0
        } else {
            g0 + cfg.weight_decay * w
        };
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
    (w, m, v)
}

#[test]
fn two_steps_match_reference_moments() {
    for decoupled in [true, false] {
        let cfg = AdamConfig {
            lr: 0.01,
            weight_decay: 0.1,
            decoupled,
            ..AdamConfig::default()
        };
        let grads = [0.7, -0.3];
        let mut p = scalar_store(0.5);
        for &g in &grads {
            let grad = grad_on_first(&p, g);
            p.adam_step(&grad, &cfg).unwrap();
        }
        let (w, m, v) = reference(0.5, &grads, &cfg);
        assert!((p.weights[0][[0, 0]] - w).abs() < 1e-15, "decoupled={decoupled}");
        assert!((p.adam.m_weights[0][[0, 0]] - m).abs() < 1e-15);
        assert!((p.adam.v_weights[0][[0, 0]] - v).abs() < 1e-15);
        assert_eq!(p.adam.step, 2);
    }
}

#[test]
fn non_finite_gradient_is_rejected() {
    let mut p = scalar_store(1.0);
    let grad = grad_on_first(&p, f64::NAN);
    assert!(p.adam_step(&grad, &AdamConfig::default()).is_err());
    assert_eq!(p.weights[0][[0, 0]], 1.0);
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        k: Some(MaskSize::Count(3)),
        seed,
        max_epochs: 3,
        hidden_width: Some(16),
        hidden_layers: Some(2),
        deterministic: true,
        ..TrainConfig::for_size(4)
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let train = sudoku::generate_set(4, 20, 4..=6, true, 1).unwrap();
    let valid = sudoku::generate_set(4, 5, 4..=6, true, 2).unwrap();
    let out = experiment::train(&small_config(0), &train, &valid, &mut Vec::new()).unwrap();
    let mut ckpt = out.checkpoint;
    ckpt.params.set_flat(0, 0.1 + 0.2);
    ckpt.params.set_flat(1, 5e-324);
    ckpt.params.set_flat(2, -1.0 / 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    let bits = |p: &ParamStore| p.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.params), bits(&ckpt.params));
    let adam_bits = |c: &Checkpoint| {
        c.params.adam.v_weights.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(adam_bits(&back), adam_bits(&ckpt));
    let (mut a, mut b) = (ckpt.rng.clone(), back.rng.clone());
    assert_eq!(a.next_u64(), b.next_u64());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let train = sudoku::generate_set(4, 20, 4..=6, true, 1).unwrap();
    let valid = sudoku::generate_set(4, 5, 4..=6, true, 2).unwrap();
    let run = |seed| {
        let mut log = Vec::new();
        let out = experiment::train(&small_config(seed), &train, &valid, &mut log).unwrap();
        (log, out.checkpoint)
    };
    let (log_a, ckpt_a) = run(4);
    let (log_b, ckpt_b) = run(4);
    assert_eq!(log_a, log_b);
    assert_eq!(ckpt_a, ckpt_b);
    let (log_c, _) = run(5);
    assert_ne!(log_a, log_c);
    let text = String::from_utf8(log_a).unwrap();
    assert!(!text.contains("wall_clock"));
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["loss"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn init_depends_only_on_seed() {
    let cfg = MlpConfig::new(24, 16);
    let a = ParamStore::init(cfg.clone(), &mut rng(1)).unwrap();
    let b = ParamStore::init(cfg.clone(), &mut rng(1)).unwrap();
    let c = ParamStore::init(cfg, &mut rng(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
