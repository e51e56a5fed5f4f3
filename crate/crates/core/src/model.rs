//! Physical parameters, chemotactic sensitivity models and initial data.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::NoiseSpec;
use crate::spectral::{
    dealias, gradient, leray_project, norm, vector_norm, Grid, NormKind, ScalarField,
    SpectralError, VectorField,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("c = {c} lies outside the sensitivity range [0, {c_max}]")]
    OutOfRange { c: f64, c_max: f64 },
    #[error("g is singular at c = {0}; floor c before evaluating")]
    Singular(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid initial data: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Value with first and second derivative, for exact product/quotient rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, d1, d2 }
    }

    pub fn constant(v: f64) -> Self {
        Jet::new(v, 0.0, 0.0)
    }

    pub fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }

    pub fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        let q1 = (self.d1 - q * o.d1) / o.v;
        let q2 = (self.d2 - 2.0 * q1 * o.d1 - q * o.d2) / o.v;
        Jet::new(q, q1, q2)
    }

    pub fn sqrt(self) -> Jet {
        let r = self.v.sqrt();
        let r1 = self.d1 / (2.0 * r);
        let r2 = (self.d2 - 2.0 * r1 * r1) / (2.0 * r);
        Jet::new(r, r1, r2)
    }
}

/// Clamped cubic spline; outside the knots the end cubic is continued.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// End slopes come from one-sided three-point quadratic fits.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ModelError> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(ModelError::InvalidParameter(
                "spline table needs at least 3 points of matching length".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "spline abscissae must be finite and strictly increasing".into(),
            ));
        }
        let s0 = three_point_slope(x[0], x[1], x[2], y[0], y[1], y[2], x[0]);
        let sn = three_point_slope(
            x[n - 3], x[n - 2], x[n - 1], y[n - 3], y[n - 2], y[n - 1], x[n - 1],
        );
        // tridiagonal system for second derivatives m_i
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        b[0] = 2.0 * h[0];
        c[0] = h[0];
        r[0] = 6.0 * ((y[1] - y[0]) / h[0] - s0);
        for i in 1..n - 1 {
            a[i] = h[i - 1];
            b[i] = 2.0 * (h[i - 1] + h[i]);
            c[i] = h[i];
            r[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        a[n - 1] = h[n - 2];
        b[n - 1] = 2.0 * h[n - 2];
        r[n - 1] = 6.0 * (sn - (y[n - 1] - y[n - 2]) / h[n - 2]);
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            r[i] -= w * r[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = r[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
        }
        Ok(CubicSpline { x, y, m })
    }

    pub fn eval(&self, t: f64) -> Jet {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let d2 = a * m0 + b * m1;
        Jet::new(v, d1, d2)
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }
}

fn three_point_slope(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, at: f64) -> f64 {
    // derivative of the Lagrange quadratic through the three points
    let l0 = ((at - x1) + (at - x2)) / ((x0 - x1) * (x0 - x2));
    let l1 = ((at - x0) + (at - x2)) / ((x1 - x0) * (x1 - x2));
    let l2 = ((at - x0) + (at - x1)) / ((x2 - x0) * (x2 - x1));
    y0 * l0 + y1 * l1 + y2 * l2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Chi,
    Kappa,
    H,
    G,
}

#[derive(Debug, Clone)]
pub enum SensitivityKind {
    PrototypeLinear { chi0: f64 },
    Tabulated { chi: CubicSpline, kappa: CubicSpline },
}

#[derive(Debug, Clone)]
pub struct SensitivityModel {
    kind: SensitivityKind,
    c_max: f64,
}

const H_TOL: f64 = 1e-12;

impl SensitivityModel {
    /// `chi = chi0`, `kappa(s) = s`.
    pub fn prototype(chi0: f64, c_max: f64) -> Result<Self, ModelError> {
        if !(chi0 > 0.0 && chi0.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("chi0 must be positive, got {chi0}")));
        }
        if !(c_max > 0.0) {
            return Err(ModelError::InvalidParameter(format!("c_max must be positive, got {c_max}")));
        }
        Ok(SensitivityModel {
            kind: SensitivityKind::PrototypeLinear { chi0 },
            c_max,
        })
    }

    /// Tables of `chi` and `kappa` sampled at the abscissae `c`, which must
    /// cover `[0, c_max]`.
    pub fn tabulated(c: Vec<f64>, chi: Vec<f64>, kappa: Vec<f64>) -> Result<Self, ModelError> {
        if c.first().copied() != Some(0.0) {
            return Err(ModelError::InvalidParameter("sensitivity table must start at c = 0".into()));
        }
        let c_max = *c.last().unwrap();
        Ok(SensitivityModel {
            kind: SensitivityKind::Tabulated {
                chi: CubicSpline::new(c.clone(), chi)?,
                kappa: CubicSpline::new(c, kappa)?,
            },
            c_max,
        })
    }

    /// Samples closures on `samples` uniform points of `[0, c_max]`.
    pub fn tabulate_fn(
        c_max: f64,
        samples: usize,
        chi: impl Fn(f64) -> f64,
        kappa: impl Fn(f64) -> f64,
    ) -> Result<Self, ModelError> {
        let c: Vec<f64> = (0..samples).map(|i| c_max * i as f64 / (samples - 1) as f64).collect();
        let x = c.iter().map(|&s| chi(s)).collect();
        let k = c.iter().map(|&s| kappa(s)).collect();
        Self::tabulated(c, x, k)
    }

    pub fn kind(&self) -> &SensitivityKind {
        &self.kind
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn with_c_max(mut self, c_max: f64) -> Self {
        if let SensitivityKind::PrototypeLinear { .. } = self.kind {
            self.c_max = c_max;
        }
        self
    }

    /// `Some(chi0)` when chi is constant.
    pub fn constant_chi(&self) -> Option<f64> {
        match self.kind {
            SensitivityKind::PrototypeLinear { chi0 } => Some(chi0),
            SensitivityKind::Tabulated { .. } => None,
        }
    }

    pub fn is_prototype(&self) -> bool {
        matches!(self.kind, SensitivityKind::PrototypeLinear { .. })
    }

    fn checked(&self, c: f64) -> Result<f64, ModelError> {
        if c.is_nan() || c > self.c_max * (1.0 + 1e-6) || c < -1e-8 * self.c_max {
            return Err(ModelError::OutOfRange { c, c_max: self.c_max });
        }
        Ok(c.max(0.0))
    }

    /// Range-checked evaluation.
    pub fn eval(&self, c: f64, which: Which) -> Result<f64, ModelError> {
        let c = self.checked(c)?;
        self.eval_extended(c, which)
    }

    /// Evaluation without the range check; tables are continued by their end
    /// cubics.
    pub fn eval_extended(&self, c: f64, which: Which) -> Result<f64, ModelError> {
        match which {
            Which::Chi => Ok(self.chi_jet(c).v),
            Which::Kappa => Ok(self.kappa_jet(c).v),
            Which::H => self.h(c),
            Which::G => self.g(c),
        }
    }

    pub fn chi_jet(&self, c: f64) -> Jet {
        match &self.kind {
            SensitivityKind::PrototypeLinear { chi0 } => Jet::constant(*chi0),
            SensitivityKind::Tabulated { chi, .. } => chi.eval(c),
        }
    }

    pub fn kappa_jet(&self, c: f64) -> Jet {
        match &self.kind {
            SensitivityKind::PrototypeLinear { .. } => Jet::new(c, 1.0, 0.0),
            SensitivityKind::Tabulated { kappa, .. } => kappa.eval(c),
        }
    }

    pub fn chi(&self, c: f64) -> f64 {
        self.chi_jet(c).v
    }

    pub fn kappa(&self, c: f64) -> f64 {
        self.kappa_jet(c).v
    }

    /// `h(c) = int_1^c sqrt(chi/kappa)`.
    pub fn h(&self, c: f64) -> Result<f64, ModelError> {
        match self.kind {
            SensitivityKind::PrototypeLinear { chi0 } => {
                if c < 0.0 {
                    return Err(ModelError::OutOfRange { c, c_max: self.c_max });
                }
                Ok(2.0 * chi0.sqrt() * (c.sqrt() - 1.0))
            }
            SensitivityKind::Tabulated { .. } => {
                if c < 0.0 {
                    return Err(ModelError::OutOfRange { c, c_max: self.c_max });
                }
                // s = tau^2 removes the 1/sqrt(s) endpoint behaviour
                let f = |tau: f64| {
                    let s = tau * tau;
                    let q = self.chi(s) / self.kappa(s).max(f64::MIN_POSITIVE);
                    2.0 * tau * q.sqrt()
                };
                Ok(adaptive_gauss(&f, 1.0, c.sqrt(), H_TOL))
            }
        }
    }

    /// `h'(c) = sqrt(chi/kappa)(c)`.
    pub fn h_prime(&self, c: f64) -> f64 {
        (self.chi(c) / self.kappa(c)).sqrt()
    }

    pub fn h_second(&self, c: f64) -> f64 {
        match self.kind {
            SensitivityKind::PrototypeLinear { chi0 } => -0.5 * chi0.sqrt() * c.powf(-1.5),
            SensitivityKind::Tabulated { .. } => self.chi_jet(c).div(self.kappa_jet(c)).sqrt().d1,
        }
    }

    /// `g(c) = (sqrt(kappa/chi))'(c)`.
    pub fn g(&self, c: f64) -> Result<f64, ModelError> {
        if c <= 0.0 {
            return Err(ModelError::Singular(c));
        }
        match self.kind {
            SensitivityKind::PrototypeLinear { chi0 } => Ok(1.0 / (2.0 * (chi0 * c).sqrt())),
            SensitivityKind::Tabulated { .. } => {
                let d = 1e-4 * c;
                let r = |s: f64| (self.kappa(s) / self.chi(s)).sqrt();
                Ok((r(c + d) - r(c - d)) / (2.0 * d))
            }
        }
    }

    /// `(kappa/chi)` as a jet.
    pub fn ratio_jet(&self, c: f64) -> Jet {
        self.kappa_jet(c).div(self.chi_jet(c))
    }

    /// `(kappa chi)` as a jet.
    pub fn product_jet(&self, c: f64) -> Jet {
        self.kappa_jet(c).mul(self.chi_jet(c))
    }

    /// `(max |kappa|, max |chi|)` over `[0, upper]`.
    pub fn maxima(&self, upper: f64) -> (f64, f64) {
        let samples = 2001;
        let mut mk: f64 = 0.0;
        let mut mc: f64 = 0.0;
        for i in 0..samples {
            let c = upper * i as f64 / (samples - 1) as f64;
            mk = mk.max(self.kappa(c).abs());
            mc = mc.max(self.chi(c).abs());
        }
        (mk, mc)
    }
}

fn gauss5(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let m = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    X.iter().zip(W.iter()).map(|(&x, &w)| w * f(m + r * x)).sum::<f64>() * r
}

fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss5(f, a, m);
        let right = gauss5(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol * (1.0 + (left + right).abs()) {
            left + right
        } else {
            rec(f, a, m, left, tol, depth - 1) + rec(f, m, b, right, tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, gauss5(f, a, b), tol, 40)
}

/// Gravitational potential with cached gradient and Sobolev sup-norms.
#[derive(Debug, Clone)]
pub struct Potential {
    pub phi: ScalarField,
    pub grad: VectorField,
    pub w1_inf: f64,
    pub w2_inf: f64,
}

impl Potential {
    pub fn new(phi: ScalarField) -> Self {
        let phi = phi.to_spectral();
        let grad = gradient(&phi);
        let hxx = gradient(&grad.x);
        let hyy = gradient(&grad.y);
        let mut g_inf: f64 = 0.0;
        let mut h_inf: f64 = 0.0;
        let (gx, gy) = (grad.x.real(), grad.y.real());
        let (a, b, c, d) = (hxx.x.real(), hxx.y.real(), hyy.x.real(), hyy.y.real());
        for (idx, v) in gx.iter().enumerate() {
            let (i, j) = (idx / gx.ncols(), idx % gx.ncols());
            g_inf = g_inf.max((v * v + gy[[i, j]].powi(2)).sqrt());
            let hs = a[[i, j]].powi(2) + b[[i, j]].powi(2) + c[[i, j]].powi(2) + d[[i, j]].powi(2);
            h_inf = h_inf.max(hs.sqrt());
        }
        let p_inf = phi.max_abs();
        Potential {
            phi,
            grad,
            w1_inf: p_inf + g_inf,
            w2_inf: p_inf + g_inf + h_inf,
        }
    }

    /// `A sin(2 pi x2 / L)`.
    pub fn sine(grid: &Arc<Grid>, amplitude: f64) -> Self {
        let l = grid.box_length();
        Potential::new(ScalarField::from_fn(grid, |_, y| amplitude * (2.0 * PI * y / l).sin()))
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        Potential::new(ScalarField::zeros(grid))
    }
}

/// Constants used only by the diagnostic functionals.
#[derive(Debug, Clone)]
pub struct DiagnosticsParams {
    /// weight of the velocity terms in the first entropy functional
    pub c_c0: f64,
    /// Gagliardo-Nirenberg constant
    pub lambda_gn: f64,
    /// `||c0||_inf`
    pub c0_inf: f64,
    /// confinement weight override; `None` means distance to the box centre
    pub weight: Option<ScalarField>,
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        DiagnosticsParams {
            c_c0: 1.0,
            lambda_gn: 1.0,
            c0_inf: 1.0,
            weight: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub sensitivity: SensitivityModel,
    pub potential: Potential,
    pub noise: NoiseSpec,
    pub epsilon: f64,
    pub cutoff_r: f64,
    pub trunc_k: f64,
    pub diagnostics: DiagnosticsParams,
}

impl ModelParams {
    /// Unit diffusions, prototype sensitivity, zero potential, no noise.
    pub fn basic(grid: &Arc<Grid>) -> Self {
        ModelParams {
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            sensitivity: SensitivityModel::prototype(1.0, 1.0).expect("valid prototype"),
            potential: Potential::zero(grid),
            noise: NoiseSpec::Off,
            epsilon: 0.1,
            cutoff_r: f64::INFINITY,
            trunc_k: f64::INFINITY,
            diagnostics: DiagnosticsParams::default(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.potential.phi.grid()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, d) in [("d1", self.d1), ("d2", self.d2), ("d3", self.d3)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ModelError::InvalidParameter(format!("{name} must be positive, got {d}")));
            }
        }
        if !self.potential.w2_inf.is_finite() {
            return Err(ModelError::InvalidParameter("potential is not W^{2,inf}".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(ModelError::InvalidParameter(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub blobs: Vec<Blob>,
    pub n_floor: f64,
    /// prescribed maximum of c0
    pub c0_max: f64,
    /// c0 = c0_max (b + (1 - b) bump) before rescaling; b in (0, 1]
    pub c0_background: f64,
    pub c0_center: Option<[f64; 2]>,
    pub c0_width: f64,
    /// kinetic energy 1/2 ||u0||^2
    pub u0_energy: f64,
    /// largest mode index populated in u0
    pub u0_band: usize,
    pub seed: u64,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            blobs: Vec::new(),
            n_floor: 0.0,
            c0_max: 1.0,
            c0_background: 0.5,
            c0_center: None,
            c0_width: 8.0,
            u0_energy: 0.0,
            u0_band: 4,
            seed: 0,
        }
    }
}

/// Periodic sum of Gaussians over the 3x3 neighbouring images.
fn periodic_gaussian(grid: &Arc<Grid>, center: [f64; 2], width: f64) -> Array2<f64> {
    let l = grid.box_length();
    let n = grid.n_points();
    let s2 = 2.0 * width * width;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = (grid.coordinate(i), grid.coordinate(j));
        let mut acc = 0.0;
        for a in -1..=1 {
            for b in -1..=1 {
                let dx = x - center[0] - a as f64 * l;
                let dy = y - center[1] - b as f64 * l;
                acc += (-(dx * dx + dy * dy) / s2).exp();
            }
        }
        acc
    })
}

pub fn build_initial_state(
    data: &InitialData,
    grid: &Arc<Grid>,
) -> Result<(ScalarField, ScalarField, VectorField), ModelError> {
    let n = grid.n_points();
    let l = grid.box_length();
    for b in &data.blobs {
        if !(b.width > 0.0) {
            return Err(ModelError::InvalidSpec(format!("blob width must be positive, got {}", b.width)));
        }
    }
    if !(data.c0_max > 0.0) || !(data.c0_background > 0.0 && data.c0_background <= 1.0) {
        return Err(ModelError::InvalidSpec("c0 needs c0_max > 0 and background in (0, 1]".into()));
    }
    let mut n0 = Array2::from_elem((n, n), data.n_floor);
    for b in &data.blobs {
        n0 = n0 + periodic_gaussian(grid, b.center, b.width) * b.amplitude;
    }
    let n0 = dealias(&ScalarField::from_real(grid, n0));

    let center = data.c0_center.unwrap_or([0.5 * l, 0.5 * l]);
    let bump = periodic_gaussian(grid, center, data.c0_width.max(grid.dx()));
    let b = data.c0_background;
    let c0 = dealias(&ScalarField::from_real(grid, bump.mapv(|v| b + (1.0 - b) * v)));
    let c0 = c0.scale(data.c0_max / c0.max());

    let u0 = if data.u0_energy > 0.0 {
        random_velocity(grid, data.u0_band, data.seed, data.u0_energy)?
    } else if data.u0_energy == 0.0 {
        VectorField::zeros(grid)
    } else {
        return Err(ModelError::InvalidSpec(format!("u0 energy must be >= 0, got {}", data.u0_energy)));
    };
    Ok((n0, c0, u0))
}

fn random_velocity(grid: &Arc<Grid>, band: usize, seed: u64, energy: f64) -> Result<VectorField, ModelError> {
    let n = grid.n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comp = || {
        let vals = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        let f = ScalarField::from_real(grid, vals);
        let mut c = f.spectral().into_owned();
        for ((i, j), z) in c.indexed_iter_mut() {
            let m = grid.mode_index(i).abs().max(grid.mode_index(j).abs()) as usize;
            if m == 0 || m > band || !grid.dealias_mask()[[i, j]] {
                *z = Default::default();
            }
        }
        ScalarField::from_spectral(grid, c)
    };
    let raw = VectorField::new(comp(), comp());
    let u = leray_project(&raw);
    let e = 0.5 * vector_norm(&u, NormKind::L2)?.powi(2);
    if !(e > 0.0) {
        return Err(ModelError::InvalidSpec("requested u0 energy but no velocity modes are available".into()));
    }
    Ok(u.scale((energy / e).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionSet {
    A,
    B,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub which: AssumptionSet,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, witness: Option<f64>, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed: witness.is_none(),
        witness,
        detail: detail.into(),
    }
}

fn first_failure(c_max: f64, samples: usize, include_zero: bool, bad: impl Fn(f64) -> bool) -> Option<f64> {
    (0..samples)
        .map(|i| c_max * i as f64 / (samples - 1) as f64)
        .filter(|&c| include_zero || c > 0.0)
        .find(|&c| bad(c))
}

const SAMPLES: usize = 2001;

fn data_checks(data: &InitialData, grid: &Arc<Grid>, label: &str) -> Vec<Check> {
    let mut out = Vec::new();
    let bad = data
        .blobs
        .iter()
        .position(|b| !(b.amplitude > 0.0) || !(b.width > 0.0))
        .map(|i| i as f64)
        .or(if data.n_floor < 0.0 { Some(data.n_floor) } else { None })
        .or(if data.blobs.is_empty() && data.n_floor <= 0.0 { Some(0.0) } else { None });
    out.push(check(
        &format!("{label}1-1 n0 positive and integrable"),
        bad,
        "blob amplitudes and widths positive, floor >= 0",
    ));
    let c_bad = if data.c0_max > 0.0 && data.c0_background > 0.0 && data.c0_background <= 1.0 {
        None
    } else {
        Some(data.c0_max)
    };
    out.push(check(&format!("{label}1-2 c0 positive and bounded"), c_bad, "c0_max > 0, background in (0, 1]"));
    let u_bad = match build_initial_state(data, grid) {
        Ok((_, _, u)) => {
            let div = norm(&crate::spectral::divergence(&u), NormKind::L2).unwrap_or(f64::NAN);
            let size = vector_norm(&u, NormKind::L2).unwrap_or(0.0);
            if div <= 1e-12 * size.max(f64::MIN_POSITIVE) || size == 0.0 {
                None
            } else {
                Some(div)
            }
        }
        Err(_) => Some(data.u0_energy),
    };
    out.push(check(&format!("{label}1-3 u0 divergence-free"), u_bad, "||div u0|| <= 1e-12 ||u0||"));
    out
}

/// Audits the hypotheses on data and coefficients by sampling `[0, c_max]`.
pub fn validate_assumptions(params: &ModelParams, data: &InitialData, which: AssumptionSet) -> ValidationReport {
    let s = &params.sensitivity;
    let c_max = data.c0_max;
    let grid = params.grid();
    let mut checks = Vec::new();
    match which {
        AssumptionSet::A => {
            checks.extend(data_checks(data, grid, "A"));
            let w = params.potential.w2_inf;
            checks.push(check("A2-1 phi in W2,inf", if w.is_finite() { None } else { Some(w) }, format!("||phi||_W2,inf = {w:.6e}")));
            checks.push(check(
                "A2-2 chi > 0",
                first_failure(c_max, SAMPLES, true, |c| !(s.chi(c) > 0.0)),
                "sampled on [0, c_max]",
            ));
            let k0 = s.kappa(0.0);
            checks.push(check("A2-2 kappa(0) = 0", if k0.abs() <= 1e-12 { None } else { Some(0.0) }, format!("kappa(0) = {k0:e}")));
            checks.push(check(
                "A2-2 kappa > 0 on (0, c_max]",
                first_failure(c_max, SAMPLES, false, |c| !(s.kappa(c) > 0.0)),
                "sampled on (0, c_max]",
            ));
            checks.push(check(
                "A2-3 (kappa/chi)' > 0",
                first_failure(c_max, SAMPLES, true, |c| !(s.ratio_jet(c).d1 > 0.0)),
                "sampled on [0, c_max]",
            ));
            checks.push(check(
                "A2-3 (kappa/chi)'' <= 0",
                first_failure(c_max, SAMPLES, true, |c| !(s.ratio_jet(c).d2 <= 1e-10)),
                "sampled on [0, c_max]",
            ));
            checks.push(check(
                "A2-3 (kappa chi)' >= 0",
                first_failure(c_max, SAMPLES, true, |c| !(s.product_jet(c).d1 >= -1e-10)),
                "sampled on [0, c_max]",
            ));
            let rho = params.noise.growth_constant(grid);
            checks.push(check(
                "A3-1 noise linear growth",
                if rho.is_finite() { None } else { Some(rho) },
                format!("empirical rho = {rho:.6e}"),
            ));
        }
        AssumptionSet::B => {
            checks.extend(data_checks(data, grid, "B"));
            let lam = params.diagnostics.lambda_gn;
            let b2 = build_initial_state(data, grid)
                .map_err(|e| e.to_string())
                .and_then(|(n0, _, _)| {
                    let l1 = norm(&n0, NormKind::L1).map_err(|e| e.to_string())?;
                    check_b2(params, l1, data.c0_max, lam).map_err(|e| e.to_string())
                });
            match b2 {
                Ok(r) => checks.push(check(
                    "B2 diffusion condition",
                    if r.pass { None } else { Some(r.lhs) },
                    format!("lhs = {:.12e} with Lambda = {lam}", r.lhs),
                )),
                Err(e) => checks.push(check("B2 diffusion condition", Some(f64::NAN), e)),
            }
            let w = params.potential.w1_inf;
            checks.push(check("B3 phi in W1,inf", if w.is_finite() { None } else { Some(w) }, format!("||phi||_W1,inf = {w:.6e}")));
            checks.push(check(
                "B3 chi and kappa bounded",
                first_failure(c_max, SAMPLES, true, |c| !(s.chi(c).is_finite() && s.kappa(c).is_finite())),
                "sampled on [0, c_max]",
            ));
            let k0 = s.kappa(0.0);
            checks.push(check(
                "B3 kappa >= 0 with kappa(0) = 0",
                if k0.abs() > 1e-12 {
                    Some(0.0)
                } else {
                    first_failure(c_max, SAMPLES, true, |c| !(s.kappa(c) >= -1e-12))
                },
                "sampled on [0, c_max]",
            ));
        }
    }
    ValidationReport { which, checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct B2Check {
    pub lhs: f64,
    pub pass: bool,
}

/// Left side of the diffusion-dominance condition and its verdict.
pub fn check_b2(params: &ModelParams, n0_l1: f64, c0_inf: f64, lambda_gn: f64) -> Result<B2Check, ModelError> {
    let (d1, d2, d3) = (params.d1, params.d2, params.d3);
    for (name, v) in [
        ("n0_l1", n0_l1),
        ("c0_inf", c0_inf),
        ("lambda_gn", lambda_gn),
        ("d1", d1),
        ("d2", d2),
        ("d3", d3),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let (mk, mc) = params.sensitivity.maxima(c0_inf);
    let l2 = lambda_gn * lambda_gn;
    let lhs = (2.0 * l2 * n0_l1 / (d1 * d2))
        * (mk * mk + l2 * l2 * c0_inf * c0_inf * (mc.powi(4) / (8.0 * d1 * d1) + 4.0 / d3));
    Ok(B2Check { lhs, pass: lhs <= 1.0 })
}

/// Empirical lower bound on the torus Gagliardo-Nirenberg constant.
///
/// Test densities are `n = v^2` with `v` a sum of one to three Gaussian
/// bumps; the returned value is the largest observed
/// `||n|| / (||sqrt n|| ||grad sqrt n||)`.
pub fn estimate_gn_constant(grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<f64, ModelError> {
    if trials < 100 {
        return Err(ModelError::InvalidParameter(format!("need at least 100 trials, got {trials}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.box_length();
    let (w_lo, w_hi) = (3.0 * grid.dx(), (l / 8.0).max(3.0 * grid.dx()));
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let bumps = rng.random_range(1..=3);
        let mut v = Array2::zeros((grid.n_points(), grid.n_points()));
        for _ in 0..bumps {
            let c = [rng.random::<f64>() * l, rng.random::<f64>() * l];
            let w = w_lo + rng.random::<f64>() * (w_hi - w_lo);
            let a = 0.2 + 0.8 * rng.random::<f64>();
            v = v + periodic_gaussian(grid, c, w) * a;
        }
        if let Some(r) = gn_ratio(&ScalarField::from_real(grid, v)) {
            best = best.max(r);
        }
    }
    Ok(best)
}

/// `||v^2|| / (||v|| ||grad v||)`, or `None` when the gradient vanishes.
pub fn gn_ratio(v: &ScalarField) -> Option<f64> {
    let grad = vector_norm(&gradient(v), NormKind::L2).ok()?;
    let vn = norm(v, NormKind::L2).ok()?;
    let scale = v.max_abs();
    if !(grad > 1e-12 * scale.max(f64::MIN_POSITIVE) * (1.0 / v.grid().box_length())) || vn == 0.0 {
        return None;
    }
    let sq = v.mul(v);
    let sq_norm = (sq.real().iter().map(|x| x * x).sum::<f64>() * v.grid().cell_area()).sqrt();
    Some(sq_norm / (vn * grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototype_closed_forms() {
        let m = SensitivityModel::prototype(1.0, 10.0).unwrap();
        assert_eq!(m.eval(1.0, Which::H).unwrap(), 0.0);
        assert!((m.eval(4.0, Which::H).unwrap() - 2.0).abs() < 1e-15);
        assert!((m.eval(4.0, Which::G).unwrap() - 0.25).abs() < 1e-15);
        assert!((m.eval(1.0, Which::G).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(m.eval(11.0, Which::Chi), Err(ModelError::OutOfRange { .. })));
        assert!(matches!(m.eval(0.0, Which::G), Err(ModelError::Singular(_))));
        assert_eq!(m.eval(-1e-9, Which::Kappa).unwrap(), 0.0);
        assert!(m.eval(-1e-3, Which::Kappa).is_err());
    }

    #[test]
    fn tabulated_matches_prototype() {
        let proto = SensitivityModel::prototype(1.0, 5.0).unwrap();
        let tab = SensitivityModel::tabulate_fn(5.0, 101, |_| 1.0, |s| s).unwrap();
        for i in 0..=200 {
            let c = 0.01 + (5.0 - 0.01) * i as f64 / 200.0;
            for w in [Which::Chi, Which::Kappa, Which::H, Which::G] {
                let a = proto.eval(c, w).unwrap();
                let b = tab.eval(c, w).unwrap();
                assert!((a - b).abs() <= 1e-6, "{w:?} at {c}: {a} vs {b}");
            }
            assert!((proto.h_second(c) - tab.h_second(c)).abs() <= 1e-6 * (1.0 + proto.h_second(c).abs()));
        }
    }

    #[test]
    fn spline_reproduces_cubics_inside_and_out() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let f = |t: f64| t * t - 0.5 * t + 2.0;
        let s = CubicSpline::new(x.clone(), x.iter().map(|&t| f(t)).collect()).unwrap();
        for t in [-0.3, 0.1, 1.7, 3.4, 3.9] {
            let j = s.eval(t);
            assert!((j.v - f(t)).abs() < 1e-12);
            assert!((j.d1 - (2.0 * t - 0.5)).abs() < 1e-11);
            assert!((j.d2 - 2.0).abs() < 1e-10);
        }
        assert!(CubicSpline::new(vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn jet_rules() {
        let a = Jet::new(2.0, 3.0, 1.0);
        let b = Jet::new(5.0, -1.0, 0.5);
        let q = a.div(b).mul(b);
        assert!((q.v - a.v).abs() < 1e-14 && (q.d1 - a.d1).abs() < 1e-14 && (q.d2 - a.d2).abs() < 1e-13);
        let r = a.sqrt().mul(a.sqrt());
        assert!((r.d2 - a.d2).abs() < 1e-13);
    }

    #[test]
    fn assumption_reports() {
        let g = Grid::new(32, 50.0).unwrap();
        let mut p = ModelParams::basic(&g);
        let data = InitialData {
            blobs: vec![Blob { center: [25.0, 25.0], width: 4.0, amplitude: 1.0 }],
            ..Default::default()
        };
        let rep = validate_assumptions(&p, &data, AssumptionSet::A);
        assert!(rep.all_passed(), "{rep:?}");

        p.sensitivity = SensitivityModel::tabulate_fn(1.0, 51, |_| 1.0, |s| s * s).unwrap();
        let rep = validate_assumptions(&p, &data, AssumptionSet::A);
        let c = rep.get("A2-3 (kappa/chi)'' <= 0").unwrap();
        assert!(!c.passed && c.witness.is_some());

        p.sensitivity = SensitivityModel::prototype(1.0, 1.0).unwrap();
        let mut bad = data.clone();
        bad.blobs.push(Blob { center: [10.0, 10.0], width: 2.0, amplitude: -0.5 });
        let rep = validate_assumptions(&p, &bad, AssumptionSet::A);
        assert!(!rep.get("A1-1 n0 positive and integrable").unwrap().passed);
    }

    #[test]
    fn b2_examples() {
        let g = Grid::new(8, 1.0).unwrap();
        let mut p = ModelParams::basic(&g);
        let r = check_b2(&p, 1.0, 1.0, 1.0).unwrap();
        assert!((r.lhs - 10.25).abs() < 1e-12 && !r.pass);
        p.d1 = 10.0;
        p.d2 = 10.0;
        let r = check_b2(&p, 1.0, 1.0, 1.0).unwrap();
        assert!((r.lhs - 0.100025).abs() < 1e-12 && r.pass);
        assert!(check_b2(&p, 1e-12, 1.0, 1.0).unwrap().lhs < 1e-12);
        assert!(check_b2(&p, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn initial_state_properties() {
        let g = Grid::new(64, 2.0 * PI * 8.0).unwrap();
        let (a, s) = (1.3, 3.0);
        let data = InitialData {
            blobs: vec![Blob { center: [25.0, 25.0], width: s, amplitude: a }],
            c0_max: 2.0,
            u0_energy: 0.7,
            seed: 9,
            ..Default::default()
        };
        let (n0, c0, u0) = build_initial_state(&data, &g).unwrap();
        let l1 = norm(&n0, NormKind::L1).unwrap();
        assert!((l1 / (2.0 * PI * s * s * a) - 1.0).abs() < 1e-6);
        assert!((c0.max() - 2.0).abs() < 1e-14 && c0.min() > 0.0);
        assert!((0.5 * vector_norm(&u0, NormKind::L2).unwrap().powi(2) - 0.7).abs() < 1e-12);
        let (_, _, u1) = build_initial_state(&data, &g).unwrap();
        assert_eq!(u0.x.real().as_ref(), u1.x.real().as_ref());
        let zero = InitialData { u0_energy: 0.0, ..data.clone() };
        assert_eq!(build_initial_state(&zero, &g).unwrap().2.max_abs(), 0.0);
        let none = InitialData { u0_band: 0, ..data };
        assert!(build_initial_state(&none, &g).is_err());
    }

    #[test]
    fn gn_single_gaussian_ratio() {
        let g = Grid::new(64, 50.0).unwrap();
        let v = ScalarField::from_real(&g, periodic_gaussian(&g, [25.0, 25.0], 4.0));
        let r = gn_ratio(&v).unwrap();
        assert!((r - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-6, "{r}");
        assert!(gn_ratio(&ScalarField::constant(&g, 2.0)).is_none());
        assert!(estimate_gn_constant(&g, 10, 0).is_err());
    }
}
