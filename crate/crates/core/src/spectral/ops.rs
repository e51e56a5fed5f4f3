//! Diagonal Fourier operators: derivatives, projections, truncation and norms.

use std::sync::Arc;

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;

use super::{Grid, ScalarField, SpectralError, VectorField};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    Lp(f64),
    Hs(f64),
}

fn multiply_i(f: &ScalarField, symbol: &Array2<f64>) -> ScalarField {
    let mut c = f.spectral().into_owned();
    Zip::from(&mut c).and(symbol).for_each(|z, &s| *z *= I * s);
    ScalarField::from_spectral(f.grid(), c)
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let (d1, d2) = f.grid().derivative_symbols();
    let c = f.spectral();
    let grid = f.grid();
    let gx = Zip::from(&*c).and(d1).map_collect(|&z, &s| z * I * s);
    let gy = Zip::from(&*c).and(d2).map_collect(|&z, &s| z * I * s);
    VectorField::new(
        ScalarField::from_spectral(grid, gx),
        ScalarField::from_spectral(grid, gy),
    )
}

/// Derivative along one axis (0 or 1).
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let (d1, d2) = f.grid().derivative_symbols();
    multiply_i(f, if axis == 0 { d1 } else { d2 })
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let (d1, d2) = v.grid().derivative_symbols();
    let a = v.x.spectral();
    let b = v.y.spectral();
    let mut out = Array2::zeros(a.dim());
    Zip::from(&mut out)
        .and(&*a)
        .and(&*b)
        .and(d1)
        .and(d2)
        .for_each(|o, &p, &q, &s1, &s2| *o = I * (p * s1 + q * s2));
    ScalarField::from_spectral(v.grid(), out)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let k2 = f.grid().xi_sq();
    let mut c = f.spectral().into_owned();
    Zip::from(&mut c).and(k2).for_each(|z, &s| *z *= -s);
    ScalarField::from_spectral(f.grid(), c)
}

/// Two-thirds rule filter.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mask = f.grid().dealias_mask();
    let mut c = f.spectral().into_owned();
    Zip::from(&mut c).and(mask).for_each(|z, &keep| {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    });
    ScalarField::from_spectral(f.grid(), c)
}

/// Indicator of the annulus `1/k <= |xi| <= k` (mean mode excluded).
pub fn jk_mask(grid: &Grid, k: f64) -> Result<Array2<bool>, SpectralError> {
    if k.is_nan() || k < 1.0 {
        return Err(SpectralError::InvalidParameter(format!(
            "truncation parameter k must be >= 1, got {k}"
        )));
    }
    let tol = 1e-12;
    Ok(grid.xi_sq().mapv(|k2| {
        let r = k2.sqrt();
        r > 0.0 && r * (1.0 + tol) >= 1.0 / k && r <= k * (1.0 + tol)
    }))
}

pub fn truncate_jk(f: &ScalarField, k: f64) -> Result<ScalarField, SpectralError> {
    let mask = jk_mask(f.grid(), k)?;
    let mut c = f.spectral().into_owned();
    Zip::from(&mut c).and(&mask).for_each(|z, &keep| {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    });
    Ok(ScalarField::from_spectral(f.grid(), c))
}

/// Gaussian symbol `exp(-eps^2 |xi|^2 / 2)`.
pub fn mollifier_symbol(grid: &Grid, epsilon: f64) -> Result<Array2<f64>, SpectralError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SpectralError::InvalidParameter(format!(
            "mollifier scale must be positive, got {epsilon}"
        )));
    }
    let e2 = epsilon * epsilon;
    Ok(grid.xi_sq().mapv(|k2| (-0.5 * e2 * k2).exp()))
}

pub fn mollify(f: &ScalarField, epsilon: f64) -> Result<ScalarField, SpectralError> {
    let sym = mollifier_symbol(f.grid(), epsilon)?;
    Ok(f.apply_symbol(&sym))
}

/// Helmholtz projection onto divergence-free fields.
///
/// Uses the same Nyquist-free symbols as [`divergence`], so the projected
/// field has zero discrete divergence mode by mode.
pub fn leray_project(v: &VectorField) -> VectorField {
    let (d1, d2) = v.grid().derivative_symbols();
    let mut a = v.x.spectral().into_owned();
    let mut b = v.y.spectral().into_owned();
    Zip::from(&mut a)
        .and(&mut b)
        .and(d1)
        .and(d2)
        .for_each(|p, q, &s1, &s2| {
            let k2 = s1 * s1 + s2 * s2;
            if k2 > 0.0 {
                let dot = (*p * s1 + *q * s2) / k2;
                *p -= dot * s1;
                *q -= dot * s2;
            }
        });
    VectorField::new(
        ScalarField::from_spectral(v.grid(), a),
        ScalarField::from_spectral(v.grid(), b),
    )
}

/// `omega = d1 u2 - d2 u1`.
pub fn vorticity(u: &VectorField) -> ScalarField {
    partial(&u.y, 0).sub(&partial(&u.x, 1))
}

/// Biot-Savart inversion `u_hat = i (xi2, -xi1) omega_hat / |xi|^2`.
pub fn velocity_from_vorticity(w: &ScalarField) -> Result<VectorField, SpectralError> {
    let mean = w.mean();
    let scale = w.max_abs().max(f64::MIN_POSITIVE);
    if mean.abs() > 1e-12 * scale {
        return Err(SpectralError::NonzeroMean { mean });
    }
    let (d1, d2) = w.grid().derivative_symbols();
    let c = w.spectral();
    let n = w.grid().n_points();
    let mut a = Array2::zeros((n, n));
    let mut b = Array2::zeros((n, n));
    Zip::from(&mut a)
        .and(&mut b)
        .and(&*c)
        .and(d1)
        .and(d2)
        .for_each(|p, q, &z, &s1, &s2| {
            let k2 = s1 * s1 + s2 * s2;
            if k2 > 0.0 {
                *p = I * s2 * z / k2;
                *q = -I * s1 * z / k2;
            }
        });
    Ok(VectorField::new(
        ScalarField::from_spectral(w.grid(), a),
        ScalarField::from_spectral(w.grid(), b),
    ))
}

fn parseval_sq(f: &ScalarField, weight: Option<&Array2<f64>>) -> f64 {
    let g = f.grid();
    let c = f.spectral();
    let sum = match weight {
        None => c.iter().map(|z| z.norm_sqr()).sum::<f64>(),
        Some(w) => Zip::from(&*c).and(w).fold(0.0, |acc, z, &wt| acc + wt * z.norm_sqr()),
    };
    sum * g.box_length().powi(2) / g.total_points().powi(2)
}

pub fn norm(f: &ScalarField, kind: NormKind) -> Result<f64, SpectralError> {
    let g = f.grid();
    match kind {
        NormKind::L1 => Ok(f.real().iter().map(|v| v.abs()).sum::<f64>() * g.cell_area()),
        NormKind::Linf => Ok(f.max_abs()),
        NormKind::L2 => Ok(parseval_sq(f, None).sqrt()),
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(SpectralError::InvalidParameter(format!("Lp exponent must be >= 1, got {p}")));
            }
            if p.is_infinite() {
                return Ok(f.max_abs());
            }
            let s: f64 = f.real().iter().map(|v| v.abs().powf(p)).sum();
            Ok((s * g.cell_area()).powf(1.0 / p))
        }
        NormKind::Hs(s) => {
            if !s.is_finite() {
                return Err(SpectralError::InvalidParameter(format!("Sobolev index must be finite, got {s}")));
            }
            let w = g.xi_sq().mapv(|k2| (1.0 + k2).powf(s));
            Ok(parseval_sq(f, Some(&w)).sqrt())
        }
    }
}

pub fn vector_norm(v: &VectorField, kind: NormKind) -> Result<f64, SpectralError> {
    match kind {
        NormKind::Linf => Ok(v.max_abs()),
        NormKind::L2 | NormKind::Hs(_) => {
            let a = norm(&v.x, kind)?;
            let b = norm(&v.y, kind)?;
            Ok((a * a + b * b).sqrt())
        }
        NormKind::L1 | NormKind::Lp(_) => {
            let p = match kind {
                NormKind::Lp(p) => p,
                _ => 1.0,
            };
            if !(p >= 1.0) {
                return Err(SpectralError::InvalidParameter(format!("Lp exponent must be >= 1, got {p}")));
            }
            let a = v.x.real();
            let b = v.y.real();
            let s = Zip::from(&*a)
                .and(&*b)
                .fold(0.0, |acc, &x, &y| acc + (x * x + y * y).sqrt().powf(p));
            Ok((s * v.grid().cell_area()).powf(1.0 / p))
        }
    }
}

/// `int f g dx` via Parseval.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> f64 {
    let grid = f.grid();
    let a = f.spectral();
    let b = g.spectral();
    let s = Zip::from(&*a).and(&*b).fold(0.0, |acc, p, q| acc + (p * q.conj()).re);
    s * grid.box_length().powi(2) / grid.total_points().powi(2)
}

pub fn vector_inner_product(u: &VectorField, v: &VectorField) -> f64 {
    inner_product(&u.x, &v.x) + inner_product(&u.y, &v.y)
}

/// `max_x (|f| + |grad f|)`.
pub fn w1_inf_norm(f: &ScalarField) -> f64 {
    let gr = gradient(f);
    let v = f.real();
    let gx = gr.x.real();
    let gy = gr.y.real();
    Zip::from(&*v)
        .and(&*gx)
        .and(&*gy)
        .fold(0.0_f64, |m, &a, &p, &q| m.max(a.abs() + (p * p + q * q).sqrt()))
}

/// `max_x (|u| + |grad u|)` with the Frobenius norm of the gradient.
pub fn w1_inf_norm_vector(u: &VectorField) -> f64 {
    let g1 = gradient(&u.x);
    let g2 = gradient(&u.y);
    let (a, b) = (u.x.real(), u.y.real());
    let (p, q, r, s) = (g1.x.real(), g1.y.real(), g2.x.real(), g2.y.real());
    let mut m: f64 = 0.0;
    for idx in 0..a.len() {
        let (i, j) = (idx / a.ncols(), idx % a.ncols());
        let val = (a[[i, j]].powi(2) + b[[i, j]].powi(2)).sqrt()
            + (p[[i, j]].powi(2) + q[[i, j]].powi(2) + r[[i, j]].powi(2) + s[[i, j]].powi(2)).sqrt();
        m = m.max(val);
    }
    m
}

/// Spectral resampling onto another grid of the same box length.
pub fn resample(f: &ScalarField, target: &Arc<Grid>) -> Result<ScalarField, SpectralError> {
    let src = f.grid();
    if src.box_length() != target.box_length() {
        return Err(SpectralError::GridMismatch);
    }
    let (ns, nt) = (src.n_points(), target.n_points());
    let c = f.spectral();
    let scale = (nt * nt) as f64 / (ns * ns) as f64;
    let half = (ns.min(nt) / 2) as i64;
    let mut out = Array2::zeros((nt, nt));
    let pos = |m: i64, n: usize| -> usize { if m >= 0 { m as usize } else { (n as i64 + m) as usize } };
    for i in 0..ns {
        let mi = src.mode_index(i);
        if mi.abs() >= half {
            continue;
        }
        for j in 0..ns {
            let mj = src.mode_index(j);
            if mj.abs() >= half {
                continue;
            }
            out[[pos(mi, nt), pos(mj, nt)]] = c[[i, j]] * scale;
        }
    }
    Ok(ScalarField::from_spectral(target, out))
}
