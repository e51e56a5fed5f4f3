use std::f64::consts::PI;

use ksns_core::diagnostics::energy_balance_defect;
use ksns_core::dynamics::{Level, State};
use ksns_core::harness::config::{Axis, ExperimentConfig};
use ksns_core::harness::experiments::{run_convergence, run_ensemble, simulate};
use ksns_core::integrator::{run, Dynamics, Scheme, StepConfig};
use ksns_core::model::{Blob, ModelParams};
use ksns_core::noise::{NoisePath, NoiseSpec};
use ksns_core::spectral::{norm, Grid, NormKind, ScalarField, VectorField};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn blob_run_conserves_mass() {
    let mut c = ExperimentConfig::default();
    c.initial.n_floor = 1e-3;
    let r = simulate(&c).unwrap();
    assert!(r.trajectory.completed());
    let l1 = |s: &State| norm(&s.n, NormKind::L1).unwrap();
    let first = l1(&r.trajectory.checkpoints[0]);
    let last = l1(r.trajectory.final_state());
    assert!(rel(last, first) <= 1e-10, "{first} {last}");
    assert!((r.trajectory.final_state().time - 1.0).abs() < 1e-12);
}

#[test]
fn single_mode_defect_is_first_order_for_forward_euler() {
    let g = Grid::new(16, 1.0).unwrap();
    let p = ModelParams::basic(&g);
    let d = Dynamics::new(p.clone(), Level::Full).unwrap();
    let u = VectorField::new(ScalarField::from_fn(&g, |_, y| (2.0 * PI * y).sin()), ScalarField::zeros(&g));
    let s = State::new(ScalarField::zeros(&g), ScalarField::zeros(&g), u, 0.0).unwrap();
    let defect = |dt: f64| {
        let steps = (0.1 / dt).round() as usize;
        let cfg = StepConfig {
            scheme: Scheme::ExplicitEm,
            diagnostics: false,
            ..StepConfig::new(dt, steps)
        };
        let t = run(&s, &d, &cfg, &NoisePath::empty(steps, dt)).unwrap();
        energy_balance_defect(&t.checkpoints, &p, Level::Full).unwrap()
    };
    let (a, b, c) = (defect(4e-4), defect(2e-4), defect(1e-4));
    for r in [a / b, b / c] {
        assert!((1.6..=2.4).contains(&r), "{a} {b} {c}");
    }
    let zero = State::zeros(&g);
    assert_eq!(energy_balance_defect(&[zero.clone(), zero], &p, Level::Full).unwrap(), 0.0);
}

#[test]
fn noisy_ensemble_regression() {
    let mut c = ExperimentConfig::default();
    c.initial.n_floor = 1e-3;
    c.initial.u0_energy = 0.5;
    c.noise = NoiseSpec::LinearMultiplicative { strength: 0.1 };
    c.integrator.t_final = 0.5;
    c.ensemble.n_members = 16;
    c.ensemble.seed_base = 42;
    let r = run_ensemble(&c).unwrap();
    let s = &r.summary;
    assert_eq!(s.completers, 16);
    let last = r.stats.last().unwrap();
    assert!(rel(s.e_sup_f1[0], 125.67151584083807) <= 1e-9, "{:?}", s.e_sup_f1);
    assert!(rel(last.f1_median, 124.27647595692841) <= 1e-9);
    assert!(s.e_sup_f1.iter().all(|v| v.is_finite()));
    assert!(last.f1_q90 >= last.f1_median && last.f1_median.is_finite());
}

#[test]
fn k_axis_study_regression() {
    let mut c = ExperimentConfig::default();
    c.grid.n = 32;
    c.grid.box_length = 2.0 * PI;
    c.initial.blobs = vec![Blob { center: [PI, PI], width: 0.5, amplitude: 1.0 }];
    c.initial.n_floor = 0.05;
    c.initial.c0_width = 0.8;
    c.initial.u0_energy = 0.2;
    c.dynamics.level = Level::Mod2;
    c.integrator.dt = 1e-3;
    c.integrator.t_final = 0.02;
    c.converge.axis = Axis::K;
    c.converge.levels = vec![2.0, 4.0, 8.0];
    c.converge.samples = 2;
    let r = run_convergence(&c).unwrap();
    let d: Vec<f64> = r.levels.iter().map(|l| l.distance).collect();
    for (x, y) in d.iter().zip([0.01928246212162942, 0.015323009376000327, 1.5891913973667238e-5]) {
        assert!(rel(*x, y) <= 1e-8, "{d:?}");
    }
    assert!(r.monotone && r.pass);
}
