use proptest::prelude::*;
use std::sync::Arc;

use ksns_core::diagnostics::{dissipation_g1, entropy_f2, uniqueness_functional};
use ksns_core::dynamics::{theta_r, CutoffConfig, Level, State};
use ksns_core::harness::config::ExperimentConfig;
use ksns_core::integrator::{step, Dynamics, Scheme};
use ksns_core::model::{ModelParams, Potential, SensitivityModel};
use ksns_core::noise::{NoisePath, NoiseSpec};
use ksns_core::spectral::{
    dealias, divergence, leray_project, norm, read_snapshot, vector_norm, write_snapshot, Grid, NormKind, ScalarField,
    VectorField,
};

fn grid() -> Arc<Grid> {
    Grid::new(16, 2.0 * std::f64::consts::PI).unwrap()
}

/// Band-limited field from a coefficient list on modes `(a, b)` with `|a|, |b| <= 3`.
fn field(g: &Arc<Grid>, coef: &[f64], offset: f64) -> ScalarField {
    let l = g.box_length();
    let w = 2.0 * std::f64::consts::PI / l;
    ScalarField::from_fn(g, |x, y| {
        let mut v = offset;
        for (k, c) in coef.iter().enumerate() {
            let (a, b) = ((k % 7) as f64 - 3.0, (k / 7 % 7) as f64 - 3.0);
            v += c * (w * (a * x + b * y) + k as f64).sin();
        }
        v
    })
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leray_is_idempotent_and_solenoidal(a in coefs(), b in coefs()) {
        let g = grid();
        let u = VectorField::new(field(&g, &a, 0.0), field(&g, &b, 0.0));
        let p = leray_project(&u);
        let scale = vector_norm(&u, NormKind::L2).unwrap().max(1.0);
        prop_assert!(vector_norm(&leray_project(&p).sub(&p), NormKind::L2).unwrap() <= 1e-12 * scale);
        prop_assert!(norm(&divergence(&p), NormKind::L2).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn dealias_is_idempotent(a in coefs()) {
        let g = grid();
        let f = dealias(&field(&g, &a, 0.3));
        let ff = dealias(&f);
        prop_assert!(norm(&ff.sub(&f), NormKind::L2).unwrap() <= 1e-13);
    }

    #[test]
    fn one_step_keeps_mass_and_divergence(a in coefs(), b in coefs(), cc in coefs(), noise in 0.0f64..0.5, dw in -0.3f64..0.3) {
        let g = grid();
        let mut p = ModelParams::basic(&g);
        p.sensitivity = SensitivityModel::prototype(1.0, 10.0).unwrap();
        p.potential = Potential::sine(&g, 0.5);
        p.noise = NoiseSpec::LinearMultiplicative { strength: noise };
        let u = leray_project(&VectorField::new(field(&g, &b, 0.0).scale(0.2), field(&g, &a, 0.0).scale(0.2)));
        let n = field(&g, &a, 3.0).scale(0.5);
        let c = field(&g, &cc, 4.0).scale(0.5);
        let s = State::new(n, c, u, 0.0).unwrap().cleaned();
        let d = Dynamics::new(p, Level::Mod1).unwrap();
        let next = step(&s, &d, &[dw], 1e-3, Scheme::ImexEm).unwrap();
        let m0 = s.n.integral();
        prop_assert!((next.n.integral() - m0).abs() <= 1e-12 * m0.abs());
        prop_assert!(next.divergence_l2() <= 1e-12);
    }

    #[test]
    fn cutoff_is_a_monotone_gate(x in 0.0f64..10.0, y in 0.0f64..10.0, r in 0.1f64..3.0) {
        let cfg = CutoffConfig::new(r).unwrap();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let (a, b) = (theta_r(lo, cfg), theta_r(hi, cfg));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a);
    }

    #[test]
    fn uniqueness_functional_symmetric(a in coefs(), b in coefs()) {
        let g = grid();
        let s1 = State::new(field(&g, &a, 1.0), field(&g, &b, 1.0), VectorField::zeros(&g), 0.0).unwrap();
        let s2 = State::new(field(&g, &b, 1.0), field(&g, &a, 1.0), VectorField::zeros(&g), 0.0).unwrap();
        let d12 = uniqueness_functional(&s1, &s2).unwrap();
        let d21 = uniqueness_functional(&s2, &s1).unwrap();
        prop_assert!(d12 >= 0.0);
        prop_assert!((d12 - d21).abs() <= 1e-12 * d12.max(1e-300));
    }

    #[test]
    fn first_dissipation_nonnegative(a in coefs(), b in coefs(), cc in coefs()) {
        let g = grid();
        let mut p = ModelParams::basic(&g);
        p.sensitivity = SensitivityModel::prototype(1.0, 10.0).unwrap();
        let u = leray_project(&VectorField::new(field(&g, &b, 0.0), field(&g, &a, 0.0)));
        let s = State::new(field(&g, &a, 0.0), field(&g, &cc, 4.0).scale(0.5), u, 0.0).unwrap();
        prop_assert!(dissipation_g1(&s, &p) >= 0.0);
    }

    #[test]
    fn second_entropy_at_least_four(a in coefs(), cc in coefs()) {
        let g = grid();
        let p = ModelParams::basic(&g);
        let n = field(&g, &a, 0.0).map(|v| 1.0 + v.abs());
        let s = State::new(n, field(&g, &cc, 0.0), VectorField::zeros(&g), 0.0).unwrap();
        let f2 = entropy_f2(&s, &p, 1.0);
        prop_assert!(f2.value >= 4.0);
        prop_assert!(f2.certificate_holds());
    }

    #[test]
    fn refined_paths_aggregate_exactly(seed in any::<u64>(), levels in 1usize..4) {
        let fam = NoisePath::refined_family(2, 8, 0.1, levels, seed).unwrap();
        for w in fam.windows(2) {
            let coarse = w[1].aggregate(2).unwrap();
            prop_assert_eq!(coarse.increments(), w[0].increments());
        }
    }

    #[test]
    fn snapshot_roundtrip(a in coefs(), spectral in any::<bool>()) {
        let g = grid();
        let f = field(&g, &a, 0.1);
        let f = if spectral { f.to_spectral() } else { f.to_real() };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f).unwrap();
        let back = read_snapshot(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.representation(), f.representation());
        let (x, y) = (back.real().into_owned(), f.real().into_owned());
        prop_assert_eq!(x, y);
    }

    #[test]
    fn config_roundtrip(d1 in 0.1f64..100.0, n_members in 1usize..50, seed in 0..=i64::MAX as u64, k in 1.0f64..64.0) {
        let mut c = ExperimentConfig::default();
        c.model.d1 = d1;
        c.model.trunc_k = k;
        c.ensemble.n_members = n_members;
        c.ensemble.seed_base = seed;
        let text = c.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, &[]).unwrap();
        prop_assert_eq!(back.to_toml_string().unwrap(), text);
        prop_assert_eq!(back, c);
    }
}
