//! Periodic torus geometry and Fourier machinery.
//!
//! Everything downstream works on the square torus `[0, L)^2` sampled on an
//! `N x N` grid. Arrays are indexed `[[i1, i2]]` with `x1 = i1 * dx` and
//! `x2 = i2 * dx`; spectral arrays use the same layout with signed indices
//! `0, 1, .., N/2 - 1, -N/2, .., -1` along each axis.
//!
//! Normalization: the forward transform is unnormalized and the inverse divides
//! by `N^2`, so the mean of a field is `f_hat[[0, 0]] / N^2`.

mod field;
mod ops;
mod snapshot;

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub use field::{Representation, ScalarField, Values, VectorField};
pub use ops::{
    dealias, divergence, gradient, inner_product, jk_mask, laplacian, leray_project,
    mollifier_symbol, mollify, norm, partial, resample, truncate_jk, vector_inner_product,
    vector_norm, velocity_from_vorticity, vorticity, w1_inf_norm, w1_inf_norm_vector, Direction,
    NormKind,
};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_HEADER_LEN, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid size must be a power of two >= 4, got {0}")]
    InvalidGridSize(usize),
    #[error("box length must be positive and finite, got {0}")]
    InvalidBoxLength(f64),
    #[error("field is in {found:?} representation, expected {expected:?}")]
    Representation {
        expected: Representation,
        found: Representation,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("vorticity has nonzero mean {mean:e}; Biot-Savart inversion needs a mean-free field")]
    NonzeroMean { mean: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Square periodic grid with cached wavenumber tables and FFT plans.
pub struct Grid {
    n: usize,
    length: f64,
    index: Vec<i64>,
    xi1: Array2<f64>,
    xi2: Array2<f64>,
    /// derivative symbols: same as `xi*` but zero on the Nyquist row/column
    dxi1: Array2<f64>,
    dxi2: Array2<f64>,
    xi_sq: Array2<f64>,
    keep: Array2<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n)
            .field("box_length", &self.length)
            .finish()
    }
}

impl Grid {
    pub fn new(n_points: usize, box_length: f64) -> Result<Arc<Grid>, SpectralError> {
        if n_points < 4 || !n_points.is_power_of_two() {
            return Err(SpectralError::InvalidGridSize(n_points));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(SpectralError::InvalidBoxLength(box_length));
        }
        let n = n_points;
        let half = (n / 2) as i64;
        let index: Vec<i64> = (0..n as i64)
            .map(|i| if i < half { i } else { i - n as i64 })
            .collect();
        let k0 = 2.0 * std::f64::consts::PI / box_length;
        let xi1 = Array2::from_shape_fn((n, n), |(i, _)| k0 * index[i] as f64);
        let xi2 = Array2::from_shape_fn((n, n), |(_, j)| k0 * index[j] as f64);
        let dxi1 = Array2::from_shape_fn((n, n), |(i, _)| {
            if index[i] == -half {
                0.0
            } else {
                k0 * index[i] as f64
            }
        });
        let dxi2 = Array2::from_shape_fn((n, n), |(_, j)| {
            if index[j] == -half {
                0.0
            } else {
                k0 * index[j] as f64
            }
        });
        let xi_sq = &xi1 * &xi1 + &xi2 * &xi2;
        // two-thirds rule: drop max(|i1|, |i2|) > N/3
        let cutoff = n as f64 / 3.0;
        let keep = Array2::from_shape_fn((n, n), |(i, j)| {
            (index[i].abs().max(index[j].abs()) as f64) <= cutoff
        });
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            n,
            length: box_length,
            index,
            xi1,
            xi2,
            dxi1,
            dxi2,
            xi_sq,
            keep,
            fwd,
            inv,
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Signed mode index along one axis for array position `i`.
    pub fn mode_index(&self, i: usize) -> i64 {
        self.index[i]
    }

    /// Wavenumber vector of mode `[[i1, i2]]`.
    pub fn wavenumber(&self, i1: usize, i2: usize) -> [f64; 2] {
        [self.xi1[[i1, i2]], self.xi2[[i1, i2]]]
    }

    pub fn xi1(&self) -> &Array2<f64> {
        &self.xi1
    }

    pub fn xi2(&self) -> &Array2<f64> {
        &self.xi2
    }

    /// Symbols used for first derivatives (Nyquist rows zeroed).
    pub fn derivative_symbols(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.dxi1, &self.dxi2)
    }

    pub fn xi_sq(&self) -> &Array2<f64> {
        &self.xi_sq
    }

    /// `true` for modes retained by the two-thirds rule.
    pub fn dealias_mask(&self) -> &Array2<bool> {
        &self.keep
    }

    /// Largest |xi| of a mode that survives dealiasing.
    pub fn max_retained_wavenumber(&self) -> f64 {
        let mut m: f64 = 0.0;
        ndarray::Zip::from(&self.xi_sq).and(&self.keep).for_each(|&k2, &keep| {
            if keep {
                m = m.max(k2.sqrt());
            }
        });
        m
    }

    /// Physical coordinate of grid index `i` along either axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.length == other.length
    }

    pub fn total_points(&self) -> f64 {
        (self.n * self.n) as f64
    }

    /// Unnormalized forward 2D DFT of a real array.
    pub fn forward(&self, values: &Array2<f64>) -> Array2<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, &self.fwd);
        Array2::from_shape_vec((self.n, self.n), buf).expect("shape")
    }

    /// Inverse 2D DFT (divides by N^2), keeping the real part.
    pub fn inverse(&self, coeffs: &Array2<Complex64>) -> Array2<f64> {
        let mut buf: Vec<Complex64> = coeffs.iter().copied().collect();
        self.fft2(&mut buf, &self.inv);
        let scale = 1.0 / self.total_points();
        Array2::from_shape_vec((self.n, self.n), buf.into_iter().map(|z| z.re * scale).collect())
            .expect("shape")
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, n);
        plan.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, n);
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(Grid::new(12, 1.0), Err(SpectralError::InvalidGridSize(12))));
        assert!(matches!(Grid::new(2, 1.0), Err(SpectralError::InvalidGridSize(2))));
        assert!(Grid::new(16, 0.0).is_err());
        assert!(Grid::new(16, f64::NAN).is_err());
    }

    #[test]
    fn wavenumber_tables() {
        let g = Grid::new(16, 2.0 * std::f64::consts::PI).unwrap();
        assert_eq!(g.wavenumber(0, 0), [0.0, 0.0]);
        for i in 1..16 {
            let j = (16 - i) % 16;
            let a = g.wavenumber(i, 3);
            let b = g.wavenumber(j, 3);
            if g.mode_index(i) != -8 {
                assert_eq!(a[0], -b[0]);
            }
            assert_eq!(g.xi_sq()[[i, 5]], g.xi_sq()[[j, 5]]);
        }
        let total: f64 = (0..256).map(|_| g.cell_area()).sum();
        assert!((total - g.box_length().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn dealias_mask_matches_two_thirds_rule() {
        let g = Grid::new(64, 1.0).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let m = g.mode_index(i).abs().max(g.mode_index(j).abs());
                assert_eq!(g.dealias_mask()[[i, j]], !(m as f64 > 64.0 / 3.0));
            }
        }
        assert!(g.dealias_mask()[[21, 0]]);
        assert!(!g.dealias_mask()[[22, 0]]);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let n = 8;
        let g = Grid::new(n, 1.0).unwrap();
        let vals = Array2::from_shape_fn((n, n), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.3 * j as f64);
        let fast = g.forward(&vals);
        for k1 in 0..n {
            for k2 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((k1 * i + k2 * j) as f64) / n as f64;
                        acc += vals[[i, j]] * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                assert!((acc - fast[[k1, k2]]).norm() < 1e-11);
            }
        }
    }
}
