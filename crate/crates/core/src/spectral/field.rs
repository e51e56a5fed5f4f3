use std::borrow::Cow;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use super::{Direction, Grid, SpectralError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Real,
    Spectral,
}

#[derive(Debug, Clone)]
pub enum Values {
    Real(Array2<f64>),
    Spectral(Array2<Complex64>),
}

/// A real-valued field on a [`Grid`], held either as grid samples or as
/// Fourier coefficients.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Values,
}

impl ScalarField {
    pub fn from_real(grid: &Arc<Grid>, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), (grid.n_points(), grid.n_points()), "field shape");
        ScalarField {
            grid: grid.clone(),
            values: Values::Real(values),
        }
    }

    pub fn from_spectral(grid: &Arc<Grid>, coeffs: Array2<Complex64>) -> Self {
        assert_eq!(coeffs.dim(), (grid.n_points(), grid.n_points()), "field shape");
        ScalarField {
            grid: grid.clone(),
            values: Values::Spectral(coeffs),
        }
    }

    /// Samples `f(x1, x2)` at the grid points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let dx = grid.dx();
        let n = grid.n_points();
        let vals = Array2::from_shape_fn((n, n), |(i, j)| f(i as f64 * dx, j as f64 * dx));
        Self::from_real(grid, vals)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        let n = grid.n_points();
        Self::from_real(grid, Array2::from_elem((n, n), value))
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = grid.n_points();
        Self::from_spectral(grid, Array2::zeros((n, n)))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.values {
            Values::Real(_) => Representation::Real,
            Values::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    /// Strict transform: the field must currently be in the direction's
    /// source representation.
    pub fn transform(&self, direction: Direction) -> Result<ScalarField, SpectralError> {
        match (direction, &self.values) {
            (Direction::Forward, Values::Real(v)) => Ok(ScalarField {
                grid: self.grid.clone(),
                values: Values::Spectral(self.grid.forward(v)),
            }),
            (Direction::Inverse, Values::Spectral(v)) => Ok(ScalarField {
                grid: self.grid.clone(),
                values: Values::Real(self.grid.inverse(v)),
            }),
            (Direction::Forward, _) => Err(SpectralError::Representation {
                expected: Representation::Real,
                found: Representation::Spectral,
            }),
            (Direction::Inverse, _) => Err(SpectralError::Representation {
                expected: Representation::Spectral,
                found: Representation::Real,
            }),
        }
    }

    /// Grid samples, transforming if needed.
    pub fn real(&self) -> Cow<'_, Array2<f64>> {
        match &self.values {
            Values::Real(v) => Cow::Borrowed(v),
            Values::Spectral(v) => Cow::Owned(self.grid.inverse(v)),
        }
    }

    /// Fourier coefficients, transforming if needed.
    pub fn spectral(&self) -> Cow<'_, Array2<Complex64>> {
        match &self.values {
            Values::Spectral(v) => Cow::Borrowed(v),
            Values::Real(v) => Cow::Owned(self.grid.forward(v)),
        }
    }

    pub fn to_real(&self) -> ScalarField {
        ScalarField::from_real(&self.grid, self.real().into_owned())
    }

    pub fn to_spectral(&self) -> ScalarField {
        ScalarField::from_spectral(&self.grid, self.spectral().into_owned())
    }

    pub fn into_spectral_values(self) -> Array2<Complex64> {
        match self.values {
            Values::Spectral(v) => v,
            Values::Real(v) => self.grid.forward(&v),
        }
    }

    pub fn into_real_values(self) -> Array2<f64> {
        match self.values {
            Values::Real(v) => v,
            Values::Spectral(v) => self.grid.inverse(&v),
        }
    }

    /// Spatial mean (mode zero divided by N^2).
    pub fn mean(&self) -> f64 {
        match &self.values {
            Values::Real(v) => v.mean().unwrap_or(0.0),
            Values::Spectral(v) => v[[0, 0]].re / self.grid.total_points(),
        }
    }

    /// Integral over the torus by grid quadrature.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.box_length().powi(2)
    }

    pub fn max_abs(&self) -> f64 {
        self.real().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.real().iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.real().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn has_non_finite(&self) -> bool {
        match &self.values {
            Values::Real(v) => v.iter().any(|x| !x.is_finite()),
            Values::Spectral(v) => v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())),
        }
    }

    pub fn scale(&self, a: f64) -> ScalarField {
        match &self.values {
            Values::Real(v) => ScalarField::from_real(&self.grid, v * a),
            Values::Spectral(v) => ScalarField::from_spectral(&self.grid, v.mapv(|z| z * a)),
        }
    }

    /// `self + a * other`, in the representation of `self`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> ScalarField {
        match &self.values {
            Values::Real(v) => {
                let o = other.real();
                ScalarField::from_real(&self.grid, v + &(&*o * a))
            }
            Values::Spectral(v) => {
                let o = other.spectral();
                let mut out = v.clone();
                Zip::from(&mut out).and(&*o).for_each(|x, &y| *x += y * a);
                ScalarField::from_spectral(&self.grid, out)
            }
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.axpy(-1.0, other)
    }

    /// Pointwise product in real space (no dealiasing).
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        ScalarField::from_real(&self.grid, &*self.real() * &*other.real())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_real(&self.grid, self.real().mapv(f))
    }

    /// Applies a real symbol mode by mode.
    pub fn apply_symbol(&self, symbol: &Array2<f64>) -> ScalarField {
        let mut c = self.spectral().into_owned();
        Zip::from(&mut c).and(symbol).for_each(|z, &s| *z *= s);
        ScalarField::from_spectral(&self.grid, c)
    }
}

#[derive(Debug, Clone)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert!(x.grid().same_as(y.grid()), "vector components on different grids");
        VectorField { x, y }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField::new(ScalarField::zeros(grid), ScalarField::zeros(grid))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.x.grid()
    }

    pub fn scale(&self, a: f64) -> VectorField {
        VectorField::new(self.x.scale(a), self.y.scale(a))
    }

    pub fn axpy(&self, a: f64, other: &VectorField) -> VectorField {
        VectorField::new(self.x.axpy(a, &other.x), self.y.axpy(a, &other.y))
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.axpy(-1.0, other)
    }

    pub fn to_spectral(&self) -> VectorField {
        VectorField::new(self.x.to_spectral(), self.y.to_spectral())
    }

    pub fn to_real(&self) -> VectorField {
        VectorField::new(self.x.to_real(), self.y.to_real())
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField::new(f(&self.x), f(&self.y))
    }

    /// Pointwise Euclidean magnitude maximum.
    pub fn max_abs(&self) -> f64 {
        let a = self.x.real();
        let b = self.y.real();
        Zip::from(&*a)
            .and(&*b)
            .fold(0.0_f64, |m, &p, &q| m.max((p * p + q * q).sqrt()))
    }

    pub fn has_non_finite(&self) -> bool {
        self.x.has_non_finite() || self.y.has_non_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_spectrum() {
        let g = Grid::new(8, 1.0).unwrap();
        let f = ScalarField::constant(&g, 3.0);
        let s = f.transform(Direction::Forward).unwrap();
        assert_eq!(s.representation(), Representation::Spectral);
        let c = s.spectral();
        assert!((c[[0, 0]].re - 3.0 * 64.0).abs() < 1e-12);
        let others: f64 = c.iter().skip(1).map(|z| z.norm()).sum();
        assert!(others < 1e-12);
        assert!(s.transform(Direction::Forward).is_err());
        assert!(f.transform(Direction::Inverse).is_err());
    }

    #[test]
    fn single_cosine_has_two_coefficients() {
        let l = 3.0;
        let g = Grid::new(16, l).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| (2.0 * std::f64::consts::PI * x / l).cos());
        let c = f.spectral();
        let nonzero: Vec<(usize, usize)> = c
            .indexed_iter()
            .filter(|(_, z)| z.norm() > 1e-9)
            .map(|(ix, _)| ix)
            .collect();
        assert_eq!(nonzero, vec![(1, 0), (15, 0)]);
        assert!((c[[1, 0]] - c[[15, 0]].conj()).norm() < 1e-12);
    }

    #[test]
    fn mean_and_integral() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = ScalarField::constant(&g, 1.5);
        assert!((f.integral() - 6.0).abs() < 1e-14);
        assert!((f.to_spectral().mean() - 1.5).abs() < 1e-14);
    }
}
