//! Truncated cylindrical Wiener forcing for the velocity equation.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{dealias, leray_project, norm, Grid, NormKind, ScalarField, SpectralError, VectorField};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("noise mode {mode} out of range (n_modes = {n_modes})")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Constant,
    /// `cos(2 pi (k . x) / L)`
    Cos { k: [i64; 2] },
    Sin { k: [i64; 2] },
}

impl Shape {
    pub fn field(&self, grid: &Arc<Grid>) -> ScalarField {
        let l = grid.box_length();
        match *self {
            Shape::Constant => ScalarField::constant(grid, 1.0),
            Shape::Cos { k } => ScalarField::from_fn(grid, |x, y| {
                (2.0 * PI * (k[0] as f64 * x + k[1] as f64 * y) / l).cos()
            }),
            Shape::Sin { k } => ScalarField::from_fn(grid, |x, y| {
                (2.0 * PI * (k[0] as f64 * x + k[1] as f64 * y) / l).sin()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMode {
    pub sigma: f64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    Off,
    /// `f(u) = c u` on a single Wiener mode.
    LinearMultiplicative { strength: f64 },
    /// `f_j(u) = sigma_j q_j(x) u`.
    Diagonal { modes: Vec<DiagonalMode> },
}

impl NoiseSpec {
    pub fn n_modes(&self) -> usize {
        match self {
            NoiseSpec::Off => 0,
            NoiseSpec::LinearMultiplicative { .. } => 1,
            NoiseSpec::Diagonal { modes } => modes.len(),
        }
    }

    pub fn is_off(&self) -> bool {
        match self {
            NoiseSpec::Off => true,
            NoiseSpec::LinearMultiplicative { strength } => *strength == 0.0,
            NoiseSpec::Diagonal { modes } => modes.iter().all(|m| m.sigma == 0.0),
        }
    }

    /// `sum_j sigma_j^2` over the truncated list.
    pub fn trace(&self) -> f64 {
        match self {
            NoiseSpec::Off => 0.0,
            NoiseSpec::LinearMultiplicative { strength } => strength * strength,
            NoiseSpec::Diagonal { modes } => modes.iter().map(|m| m.sigma * m.sigma).sum(),
        }
    }

    /// Constant in `sum_j ||f_j(u)||^2 <= rho (1 + ||u||^2)` at `s = 0`.
    pub fn growth_constant(&self, grid: &Arc<Grid>) -> f64 {
        match self {
            NoiseSpec::Off => 0.0,
            NoiseSpec::LinearMultiplicative { strength } => strength * strength,
            NoiseSpec::Diagonal { modes } => modes
                .iter()
                .map(|m| m.sigma * m.sigma * m.shape.field(grid).max_abs().powi(2))
                .sum(),
        }
    }
}

/// Wiener increments `dW[step, mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub dt: f64,
    increments: Array2<f64>,
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Standard normal sample for `(mode, step)`, independent of draw order.
pub fn standard_normal(seed: u64, mode: usize, step: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mode as u64);
    rng.set_word_pos(4 * step as u128);
    box_muller(&mut rng)
}

fn generate(n_modes: usize, n_steps: usize, dt: f64, seed: u64) -> Array2<f64> {
    let sq = dt.sqrt();
    let mut inc = Array2::zeros((n_steps, n_modes));
    for j in 0..n_modes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for i in 0..n_steps {
            inc[[i, j]] = sq * box_muller(&mut rng);
        }
    }
    inc
}

pub fn sample_path(spec: &NoiseSpec, n_steps: usize, dt: f64, seed: u64) -> Result<NoisePath, NoiseError> {
    NoisePath::new(spec.n_modes(), n_steps, dt, seed)
}

impl NoisePath {
    pub fn new(n_modes: usize, n_steps: usize, dt: f64, seed: u64) -> Result<Self, NoiseError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NoiseError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(NoisePath {
            seed,
            dt,
            increments: generate(n_modes, n_steps, dt, seed),
        })
    }

    /// Path with no modes (deterministic runs).
    pub fn empty(n_steps: usize, dt: f64) -> Self {
        NoisePath {
            seed: 0,
            dt,
            increments: Array2::zeros((n_steps, 0)),
        }
    }

    pub fn from_increments(increments: Array2<f64>, dt: f64, seed: u64) -> Self {
        NoisePath { seed, dt, increments }
    }

    /// Paths at `dt_coarse / 2^l` for `l = 0..=levels` on one Brownian motion.
    ///
    /// The finest path is drawn first; every coarser path is formed by summing
    /// adjacent pairs, so coarse increments equal fine pair sums exactly.
    pub fn refined_family(
        n_modes: usize,
        n_steps_coarse: usize,
        dt_coarse: f64,
        levels: usize,
        seed: u64,
    ) -> Result<Vec<NoisePath>, NoiseError> {
        let factor = 1usize << levels;
        let finest = NoisePath::new(n_modes, n_steps_coarse * factor, dt_coarse / factor as f64, seed)?;
        let mut out = vec![finest];
        for _ in 0..levels {
            let next = out.last().unwrap().aggregate(2)?;
            out.push(next);
        }
        out.reverse();
        Ok(out)
    }

    /// Sums consecutive blocks of `stride` increments.
    pub fn aggregate(&self, stride: usize) -> Result<NoisePath, NoiseError> {
        if stride == 0 || self.n_steps() % stride != 0 {
            return Err(NoiseError::InvalidParameter(format!(
                "stride {stride} does not divide {} steps",
                self.n_steps()
            )));
        }
        let (ns, nm) = (self.n_steps() / stride, self.n_modes());
        let mut inc = Array2::zeros((ns, nm));
        for i in 0..ns {
            for j in 0..nm {
                let mut s = 0.0;
                for r in 0..stride {
                    s += self.increments[[i * stride + r, j]];
                }
                inc[[i, j]] = s;
            }
        }
        Ok(NoisePath {
            seed: self.seed,
            dt: self.dt * stride as f64,
            increments: inc,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.increments.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.increments.ncols()
    }

    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    pub fn step(&self, i: usize) -> Vec<f64> {
        self.increments.row(i).to_vec()
    }

    pub fn quadratic_variation(&self, mode: usize) -> f64 {
        self.increments.column(mode).iter().map(|x| x * x).sum()
    }
}

/// `f_j(u)`, Leray-projected.
pub fn eval_noise_operator(u: &VectorField, spec: &NoiseSpec, mode_j: usize) -> Result<VectorField, NoiseError> {
    let n_modes = spec.n_modes();
    if mode_j >= n_modes {
        return Err(NoiseError::ModeOutOfRange { mode: mode_j, n_modes });
    }
    let f = match spec {
        NoiseSpec::Off => unreachable!(),
        NoiseSpec::LinearMultiplicative { strength } => u.scale(*strength),
        NoiseSpec::Diagonal { modes } => {
            let m = &modes[mode_j];
            match m.shape {
                Shape::Constant => u.scale(m.sigma),
                shape => {
                    let q = shape.field(u.grid()).scale(m.sigma);
                    u.map_components(|c| dealias(&c.mul(&q)))
                }
            }
        }
    };
    Ok(leray_project(&f))
}

/// `sum_j ||f_j(u)||_{H^s}^2`.
pub fn hilbert_schmidt_norm(u: &VectorField, spec: &NoiseSpec, s: f64) -> Result<f64, NoiseError> {
    let mut total = 0.0;
    for j in 0..spec.n_modes() {
        let f = eval_noise_operator(u, spec, j)?;
        total += norm(&f.x, NormKind::Hs(s))?.powi(2) + norm(&f.y, NormKind::Hs(s))?.powi(2);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear(grid: &Arc<Grid>) -> VectorField {
        let l = grid.box_length();
        VectorField::new(
            ScalarField::from_fn(grid, |_, y| (2.0 * PI * y / l).sin()),
            ScalarField::from_fn(grid, |x, _| 0.3 * (4.0 * PI * x / l).cos()),
        )
    }

    #[test]
    fn increments_are_order_independent() {
        let p = NoisePath::new(3, 50, 0.01, 7).unwrap();
        for (j, i) in [(0, 0), (2, 17), (1, 49)] {
            let z = standard_normal(7, j, i);
            assert_eq!(p.increments()[[i, j]], 0.1 * z);
        }
        assert_eq!(p, NoisePath::new(3, 50, 0.01, 7).unwrap());
        assert_ne!(p, NoisePath::new(3, 50, 0.01, 8).unwrap());
    }

    #[test]
    fn refinement_is_exact() {
        let fam = NoisePath::refined_family(2, 10, 0.1, 3, 5).unwrap();
        assert_eq!(fam.len(), 4);
        for w in fam.windows(2) {
            let (c, f) = (&w[0], &w[1]);
            assert_eq!(c.n_steps() * 2, f.n_steps());
            for i in 0..c.n_steps() {
                for j in 0..2 {
                    assert_eq!(c.increments()[[i, j]], f.increments()[[2 * i, j]] + f.increments()[[2 * i + 1, j]]);
                }
            }
        }
        assert!(fam[0].aggregate(3).is_err());
    }

    #[test]
    fn operator_examples() {
        let g = Grid::new(16, 4.0).unwrap();
        let u = shear(&g);
        let lin = NoiseSpec::LinearMultiplicative { strength: 2.0 };
        let f = eval_noise_operator(&u, &lin, 0).unwrap();
        assert!(f.sub(&u.scale(2.0)).max_abs() <= 1e-14);
        assert!(eval_noise_operator(&u, &lin, 1).is_err());
        let diag = NoiseSpec::Diagonal {
            modes: vec![DiagonalMode { sigma: 1.0, shape: Shape::Constant }],
        };
        assert!(eval_noise_operator(&u, &diag, 0).unwrap().sub(&u).max_abs() <= 1e-14);
        let z = VectorField::zeros(&g);
        assert_eq!(eval_noise_operator(&z, &lin, 0).unwrap().max_abs(), 0.0);
        assert_eq!(hilbert_schmidt_norm(&z, &lin, 1.0).unwrap(), 0.0);
        assert_eq!(hilbert_schmidt_norm(&u, &NoiseSpec::Off, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hs_norm_of_linear_noise() {
        let g = Grid::new(16, 4.0).unwrap();
        let u = shear(&g);
        let c = 0.7;
        let spec = NoiseSpec::LinearMultiplicative { strength: c };
        for s in [0.0, 1.0, 2.5] {
            let hs = hilbert_schmidt_norm(&u, &spec, s).unwrap();
            let un = norm(&u.x, NormKind::Hs(s)).unwrap().powi(2) + norm(&u.y, NormKind::Hs(s)).unwrap().powi(2);
            assert!((hs - c * c * un).abs() <= 1e-12 * hs);
            assert!(hs <= spec.growth_constant(&g) * (1.0 + un));
        }
    }
}
