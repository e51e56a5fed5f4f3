//! Scalar observables: masses, norms, entropy functionals and the
//! uniqueness functional.

use ndarray::{Array2, Zip};
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{Level, State};
use crate::model::ModelParams;
use crate::spectral::{
    dealias, gradient, laplacian, mollify, norm, vector_inner_product, vector_norm, NormKind,
    ScalarField, SpectralError, VectorField,
};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// One row of the per-step diagnostics stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass_n: f64,
    pub min_n: f64,
    pub max_n: f64,
    pub clipped_mass: f64,
    pub linf_c: f64,
    pub min_c: f64,
    pub l2_u: f64,
    pub h1_u: f64,
    pub kinetic_energy: f64,
    pub enstrophy: f64,
    pub buoyancy_work: f64,
    pub entropy_f1: f64,
    pub dissipation_g1: f64,
    pub entropy_f2: f64,
    pub f2_abs_entropy: f64,
    pub f2_density_bound: f64,
    pub dissipation_g2: f64,
    pub energy_balance_defect: f64,
    pub floored_fraction: f64,
    pub grad_c_sq: f64,
    pub lap_c_sq: f64,
    pub g_grad_c_l4: f64,
    pub divergence_u: f64,
    pub blow_up: bool,
}

fn l2_sq(f: &ScalarField) -> f64 {
    norm(f, NormKind::L2).map(|v| v * v).unwrap_or(f64::NAN)
}

fn grad_sq(f: &ScalarField) -> f64 {
    vector_norm(&gradient(f), NormKind::L2).map(|v| v * v).unwrap_or(f64::NAN)
}

fn vec_l2_sq(v: &VectorField) -> f64 {
    l2_sq(&v.x) + l2_sq(&v.y)
}

fn vec_grad_sq(v: &VectorField) -> f64 {
    grad_sq(&v.x) + grad_sq(&v.y)
}

fn quad(a: &Array2<f64>, area: f64) -> f64 {
    a.sum() * area
}

/// `c_floor = 1e-8 ||c0||_inf`.
pub fn c_floor(params: &ModelParams) -> f64 {
    1e-8 * params.diagnostics.c0_inf
}

struct ChemTerms {
    /// `|grad h(c)|^2` pointwise
    grad_h_sq: Array2<f64>,
    /// `Delta h(c)` (dealiased)
    lap_h: ScalarField,
    /// `g(c)^2 |grad h|^4` pointwise
    g_term: Array2<f64>,
    floored: f64,
}

fn chem_terms(state: &State, params: &ModelParams) -> ChemTerms {
    let s = &params.sensitivity;
    let floor = c_floor(params);
    let c = state.c.real();
    let gc = gradient(&state.c);
    let (gx, gy) = (gc.x.real().into_owned(), gc.y.real().into_owned());
    let lap = laplacian(&state.c).real().into_owned();
    let total = c.len() as f64;
    let mut floored = 0usize;
    let cf = c.mapv(|v| {
        if v < floor {
            floored += 1;
            floor
        } else {
            v
        }
    });
    let g2 = &gx * &gx + &gy * &gy;
    let hp = cf.mapv(|v| s.h_prime(v));
    let hpp = cf.mapv(|v| s.h_second(v));
    let gg = cf.mapv(|v| s.g(v).unwrap_or(f64::NAN));
    let grad_h_sq = &hp * &hp * &g2;
    let lap_h = dealias(&ScalarField::from_real(state.grid(), &hp * &lap + &hpp * &g2));
    let g_term = Zip::from(&gg).and(&grad_h_sq).map_collect(|&g, &q| g * g * q * q);
    ChemTerms {
        grad_h_sq,
        lap_h,
        g_term,
        floored: floored as f64 / total,
    }
}

/// `int (n+1) ln(n+1) + 1/2 ||grad h(c)||^2 + C ||u||^2`.
pub fn entropy_f1(state: &State, params: &ModelParams) -> f64 {
    let area = state.grid().cell_area();
    let n = state.n.real();
    let ent = quad(&n.mapv(|v| {
        let p = v.max(0.0) + 1.0;
        p * p.ln()
    }), area);
    let ch = chem_terms(state, params);
    ent + 0.5 * quad(&ch.grad_h_sq, area) + params.diagnostics.c_c0 * vec_l2_sq(&state.u)
}

/// `2 ||grad sqrt(n+1)||^2 + ||Delta h||^2 / 12 + int g^2 |grad h|^4 / 24 + C ||grad u||^2`.
pub fn dissipation_g1(state: &State, params: &ModelParams) -> f64 {
    let area = state.grid().cell_area();
    let root = state.n.map(|v| (v.max(0.0) + 1.0).sqrt());
    let ch = chem_terms(state, params);
    2.0 * grad_sq(&root)
        + l2_sq(&ch.lap_h) / 12.0
        + quad(&ch.g_term, area) / 24.0
        + params.diagnostics.c_c0 * vec_grad_sq(&state.u)
}

/// Distance to the box centre.
pub fn default_weight(grid: &std::sync::Arc<crate::spectral::Grid>) -> ScalarField {
    let h = 0.5 * grid.box_length();
    ScalarField::from_fn(grid, |x, y| ((x - h).powi(2) + (y - h).powi(2)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyF2 {
    pub value: f64,
    /// `int n |ln n|`
    pub abs_entropy: f64,
    /// `int n (ln n + 2 w) + 4`, which must dominate `abs_entropy`
    pub density_bound: f64,
}

impl EntropyF2 {
    pub fn certificate_holds(&self) -> bool {
        self.abs_entropy <= self.density_bound
    }
}

fn theta_coefficient(params: &ModelParams, lambda_gn: f64) -> f64 {
    let c0 = params.diagnostics.c0_inf;
    4.0 * lambda_gn.powi(4) * c0 * c0 / (params.d3 * params.d2)
}

pub fn entropy_f2(state: &State, params: &ModelParams, lambda_gn: f64) -> EntropyF2 {
    let grid = state.grid();
    let area = grid.cell_area();
    let w = match &params.diagnostics.weight {
        Some(w) => w.real().into_owned(),
        None => default_weight(grid).real().into_owned(),
    };
    let n = state.n.real();
    let nlogn = n.mapv(|v| if v > 0.0 { v * v.ln() } else { 0.0 });
    let abs = n.mapv(|v| if v > 0.0 { (v * v.ln()).abs() } else { 0.0 });
    let npos = n.mapv(|v| v.max(0.0));
    let density = quad(&nlogn, area) + 2.0 * quad(&(&npos * &w), area);
    let value = density
        + 4.0
        + grad_sq(&state.c)
        + theta_coefficient(params, lambda_gn) * (1.0 + vec_l2_sq(&state.u));
    EntropyF2 {
        value,
        abs_entropy: quad(&abs, area),
        density_bound: density + 4.0,
    }
}

/// `d1/2 ||grad sqrt n||^2 + d2/2 ||Delta c||^2 + (2 L^4 c0^2 / d2) ||grad u||^2`.
pub fn dissipation_g2(state: &State, params: &ModelParams, lambda_gn: f64) -> f64 {
    let root = state.n.map(|v| v.max(0.0).sqrt());
    let c0 = params.diagnostics.c0_inf;
    0.5 * params.d1 * grad_sq(&root)
        + 0.5 * params.d2 * l2_sq(&laplacian(&state.c))
        + 2.0 * lambda_gn.powi(4) * c0 * c0 / params.d2 * vec_grad_sq(&state.u)
}

/// `(Theta_1, Theta_2, Theta_3)` of the second entropy inequality.
pub fn entropy_thetas(params: &ModelParams, n0_l1: f64, lambda_gn: f64, rho: f64) -> [f64; 3] {
    let (_, m_chi) = params.sensitivity.maxima(params.diagnostics.c0_inf);
    let l2 = lambda_gn * lambda_gn;
    let c0 = params.diagnostics.c0_inf;
    let phi = params.potential.w1_inf;
    let dd = params.d3 * params.d2;
    [
        2.0 * l2 * n0_l1 * m_chi * m_chi / params.d1,
        2.0 * l2 * n0_l1 / params.d1 + 4.0 * l2 * l2 * c0 * c0 * (phi * phi + rho + 1.0) / dd,
        8.0 * l2 * l2 * c0 * c0 / dd,
    ]
}

/// `int u . M[n grad phi]` for the level's mollifier.
pub fn buoyancy_work(state: &State, params: &ModelParams, level: Level) -> f64 {
    let g = &params.potential.grad;
    let n = state.n.real();
    let mut bx = dealias(&ScalarField::from_real(state.grid(), &*n * &*g.x.real()));
    let mut by = dealias(&ScalarField::from_real(state.grid(), &*n * &*g.y.real()));
    if level != Level::Full {
        if let (Ok(a), Ok(b)) = (mollify(&bx, params.epsilon), mollify(&by, params.epsilon)) {
            bx = a;
            by = b;
        }
    }
    vector_inner_product(&state.u, &VectorField::new(bx, by))
}

pub fn compute_record(state: &State, params: &ModelParams, level: Level) -> DiagnosticsRecord {
    let grid = state.grid();
    let area = grid.cell_area();
    let n = state.n.real();
    let lam = params.diagnostics.lambda_gn;
    let ch = chem_terms(state, params);
    let f2 = entropy_f2(state, params, lam);
    let u_l2 = vec_l2_sq(&state.u);
    let enst = vec_grad_sq(&state.u);
    let h1 = (norm(&state.u.x, NormKind::Hs(1.0)).unwrap_or(f64::NAN).powi(2)
        + norm(&state.u.y, NormKind::Hs(1.0)).unwrap_or(f64::NAN).powi(2))
    .sqrt();
    let blow = state.has_non_finite();
    DiagnosticsRecord {
        time: state.time,
        mass_n: state.n.integral(),
        min_n: state.n.min(),
        max_n: state.n.max(),
        clipped_mass: quad(&n.mapv(|v| (-v).max(0.0)), area),
        linf_c: state.c.max_abs(),
        min_c: state.c.min(),
        l2_u: u_l2.sqrt(),
        h1_u: h1,
        kinetic_energy: 0.5 * u_l2,
        enstrophy: enst,
        buoyancy_work: buoyancy_work(state, params, level),
        entropy_f1: entropy_f1(state, params),
        dissipation_g1: dissipation_g1(state, params),
        entropy_f2: f2.value,
        f2_abs_entropy: f2.abs_entropy,
        f2_density_bound: f2.density_bound,
        dissipation_g2: dissipation_g2(state, params, lam),
        energy_balance_defect: 0.0,
        floored_fraction: ch.floored,
        grad_c_sq: grad_sq(&state.c),
        lap_c_sq: l2_sq(&laplacian(&state.c)),
        g_grad_c_l4: quad(&ch.g_term, area),
        divergence_u: state.divergence_l2(),
        blow_up: blow,
    }
}

/// Noise-free kinetic energy balance defect over a segment of states,
/// trapezoidal in time.
pub fn energy_balance_defect(segment: &[State], params: &ModelParams, level: Level) -> Result<f64, DiagnosticsError> {
    if !params.noise.is_off() {
        return Err(DiagnosticsError::InvalidContext("energy balance is only closed without noise".into()));
    }
    if segment.len() < 2 {
        return Ok(0.0);
    }
    let rate = |s: &State| params.d3 * vec_grad_sq(&s.u) - buoyancy_work(s, params, level);
    let mut integral = 0.0;
    let mut prev = rate(&segment[0]);
    for w in segment.windows(2) {
        let next = rate(&w[1]);
        integral += 0.5 * (w[1].time - w[0].time) * (prev + next);
        prev = next;
    }
    let e = |s: &State| 0.5 * vec_l2_sq(&s.u);
    Ok((e(segment.last().unwrap()) - e(&segment[0]) + integral).abs())
}

/// `||n*||^2 + ||c*||^2 + ||grad c*||^2 + ||u*||^2`.
pub fn uniqueness_functional(a: &State, b: &State) -> Result<f64, DiagnosticsError> {
    if !a.grid().same_as(b.grid()) {
        return Err(SpectralError::GridMismatch.into());
    }
    let dn = a.n.sub(&b.n);
    let dc = a.c.sub(&b.c);
    let du = a.u.sub(&b.u);
    Ok(l2_sq(&dn) + l2_sq(&dc) + grad_sq(&dc) + vec_l2_sq(&du))
}

/// Growth factor multiplying the uniqueness functional in its Gronwall bound.
pub fn gronwall_factor(a: &State, b: &State) -> Result<f64, DiagnosticsError> {
    if !a.grid().same_as(b.grid()) {
        return Err(SpectralError::GridMismatch.into());
    }
    let h2 = |c: &ScalarField| norm(c, NormKind::Hs(2.0)).map(|v| v * v).unwrap_or(f64::NAN);
    Ok(l2_sq(&b.n) * grad_sq(&b.n)
        + grad_sq(&b.c) * h2(&b.c)
        + l2_sq(&a.n) * grad_sq(&a.n)
        + vec_l2_sq(&b.u) * vec_grad_sq(&b.u)
        + l2_sq(&a.c) * grad_sq(&a.c)
        + vec_l2_sq(&a.u) * vec_grad_sq(&a.u)
        + l2_sq(&a.n)
        + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SensitivityModel;
    use crate::spectral::Grid;
    use std::f64::consts::{E, PI};

    fn state(n: ScalarField, c: ScalarField, u: VectorField) -> State {
        State::new(n, c, u, 0.0).unwrap()
    }

    #[test]
    fn f1_examples() {
        let g = Grid::new(16, 1.0).unwrap();
        let mut p = ModelParams::basic(&g);
        p.sensitivity = SensitivityModel::prototype(1.0, 2.0).unwrap();
        let s = state(ScalarField::constant(&g, E - 1.0), ScalarField::constant(&g, 1.0), VectorField::zeros(&g));
        assert!((entropy_f1(&s, &p) - E).abs() < 1e-12);
        let z = State::zeros(&g);
        assert_eq!(entropy_f1(&z, &p), 0.0);
        let u = VectorField::new(ScalarField::from_fn(&g, |_, y| (2.0 * PI * y).sin()), ScalarField::zeros(&g));
        let a = entropy_f1(&state(ScalarField::zeros(&g), ScalarField::zeros(&g), u.clone()), &p);
        let b = entropy_f1(&state(ScalarField::zeros(&g), ScalarField::zeros(&g), u.scale(2.0)), &p);
        assert!((b - 4.0 * a).abs() < 1e-12);
    }

    #[test]
    fn g1_examples() {
        let g = Grid::new(16, 1.0).unwrap();
        let p = ModelParams::basic(&g);
        let c = state(ScalarField::constant(&g, 0.3), ScalarField::constant(&g, 0.7), VectorField::zeros(&g));
        assert!(dissipation_g1(&c, &p).abs() < 1e-20);
        let u = VectorField::new(ScalarField::from_fn(&g, |_, y| (2.0 * PI * y).sin()), ScalarField::zeros(&g));
        let s = state(ScalarField::zeros(&g), ScalarField::constant(&g, 0.5), u);
        assert!((dissipation_g1(&s, &p) - (2.0 * PI).powi(2) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn f2_examples() {
        let g = Grid::new(16, 1.0).unwrap();
        let mut p = ModelParams::basic(&g);
        p.diagnostics.weight = Some(ScalarField::zeros(&g));
        let s = state(ScalarField::constant(&g, 1.0), ScalarField::zeros(&g), VectorField::zeros(&g));
        let f = entropy_f2(&s, &p, 1.0);
        assert!((f.value - 8.0).abs() < 1e-12);
        assert!(f.certificate_holds());
        let z = State::zeros(&g);
        assert!((entropy_f2(&z, &p, 1.0).value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn g2_examples() {
        let g = Grid::new(16, 1.0).unwrap();
        let mut p = ModelParams::basic(&g);
        p.d2 = 3.0;
        let a = 0.4;
        let c = ScalarField::from_fn(&g, |x, _| a * (2.0 * PI * x).cos());
        let s = state(ScalarField::constant(&g, 2.0), c, VectorField::zeros(&g));
        let expected = 0.5 * p.d2 * a * a * (2.0 * PI).powi(4) / 2.0;
        assert!((dissipation_g2(&s, &p, 1.0) - expected).abs() < 1e-9 * expected);
        let u = VectorField::new(ScalarField::from_fn(&g, |_, y| (2.0 * PI * y).sin()), ScalarField::zeros(&g));
        let s1 = state(ScalarField::zeros(&g), ScalarField::zeros(&g), u.clone());
        let s3 = state(ScalarField::zeros(&g), ScalarField::zeros(&g), u.scale(3.0));
        assert!((dissipation_g2(&s3, &p, 1.0) - 9.0 * dissipation_g2(&s1, &p, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn uniqueness_examples() {
        let g = Grid::new(16, 1.0).unwrap();
        let a = state(
            ScalarField::from_fn(&g, |x, y| (2.0 * PI * x).sin() + y),
            ScalarField::from_fn(&g, |x, _| (2.0 * PI * x).cos()),
            VectorField::zeros(&g),
        );
        assert_eq!(uniqueness_functional(&a, &a).unwrap(), 0.0);
        let b = State { n: a.n.add(&ScalarField::constant(&g, 0.25)), ..a.clone() };
        assert!((uniqueness_functional(&a, &b).unwrap() - 0.0625).abs() < 1e-14);
        assert_eq!(uniqueness_functional(&a, &b).unwrap(), uniqueness_functional(&b, &a).unwrap());
        let h = Grid::new(8, 1.0).unwrap();
        assert!(uniqueness_functional(&a, &State::zeros(&h)).is_err());
    }

    #[test]
    fn defect_contexts() {
        let g = Grid::new(16, 1.0).unwrap();
        let mut p = ModelParams::basic(&g);
        let seg: Vec<State> = (0..3).map(|i| State { time: i as f64, ..State::zeros(&g) }).collect();
        assert_eq!(energy_balance_defect(&seg, &p, Level::Mod1).unwrap(), 0.0);
        p.noise = crate::noise::NoiseSpec::LinearMultiplicative { strength: 0.1 };
        assert!(energy_balance_defect(&seg, &p, Level::Mod1).is_err());
    }
}
