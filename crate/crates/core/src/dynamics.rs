//! Drift assembly for the full, mollified and truncated systems.

use std::sync::Arc;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelParams};
use crate::noise::{eval_noise_operator, NoiseError, NoisePath};
use crate::spectral::{
    dealias, divergence, gradient, inner_product, jk_mask, leray_project, mollifier_symbol, norm,
    vector_inner_product, vector_norm, w1_inf_norm, w1_inf_norm_vector, Grid, NormKind,
    ScalarField, SpectralError, VectorField,
};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("non-finite value in term `{term}`")]
    BlowUp { term: String },
    #[error("c = {value} at grid point {location:?} exceeds the sensitivity ceiling {c_max}")]
    MaxPrinciple {
        value: f64,
        c_max: f64,
        location: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid test function: {0}")]
    InvalidTest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Full,
    #[default]
    Mod1,
    Mod2,
}

/// The unknown triple `(n, c, u)` at one time.
#[derive(Debug, Clone)]
pub struct State {
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    pub time: f64,
}

impl State {
    pub fn new(n: ScalarField, c: ScalarField, u: VectorField, time: f64) -> Result<Self, DynamicsError> {
        if !(n.grid().same_as(c.grid()) && n.grid().same_as(u.grid())) {
            return Err(SpectralError::GridMismatch.into());
        }
        Ok(State { n, c, u, time })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        State {
            n: ScalarField::zeros(grid),
            c: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.n.grid()
    }

    pub fn to_spectral(&self) -> State {
        State {
            n: self.n.to_spectral(),
            c: self.c.to_spectral(),
            u: self.u.to_spectral(),
            time: self.time,
        }
    }

    /// Dealiases every field and re-projects `u`.
    pub fn cleaned(&self) -> State {
        State {
            n: dealias(&self.n),
            c: dealias(&self.c),
            u: leray_project(&self.u.map_components(dealias)),
            time: self.time,
        }
    }

    pub fn divergence_l2(&self) -> f64 {
        norm(&divergence(&self.u), NormKind::L2).unwrap_or(f64::NAN)
    }

    pub fn has_non_finite(&self) -> bool {
        self.n.has_non_finite() || self.c.has_non_finite() || self.u.has_non_finite()
    }
}

/// Smooth gate: 1 below R, 0 above 2R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffConfig {
    pub r: f64,
}

impl CutoffConfig {
    pub fn new(r: f64) -> Result<Self, DynamicsError> {
        if !(r > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!("cutoff R must be positive, got {r}")));
        }
        Ok(CutoffConfig { r })
    }
}

/// Quintic smoothstep transition on `(R, 2R)`.
pub fn theta_r(x: f64, cfg: CutoffConfig) -> f64 {
    if cfg.r.is_infinite() || x <= cfg.r {
        return 1.0;
    }
    if x >= 2.0 * cfg.r {
        return 0.0;
    }
    let s = (x - cfg.r) / cfg.r;
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// One drift split into its parts for a single field triple.
#[derive(Debug, Clone)]
pub struct Components {
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
}

impl Components {
    pub fn add(&self, o: &Components) -> Components {
        Components {
            n: self.n.add(&o.n),
            c: self.c.add(&o.c),
            u: self.u.add(&o.u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tendency {
    pub stiff: Components,
    pub nonstiff: Components,
}

impl Tendency {
    pub fn total(&self) -> Components {
        self.stiff.add(&self.nonstiff)
    }
}

/// Per-mode linear rates of the stiff part.
#[derive(Debug, Clone)]
pub struct StiffRates {
    pub n: Array2<f64>,
    pub c: Array2<f64>,
    pub u: Array2<f64>,
}

pub fn stiff_rates(params: &ModelParams, level: Level) -> Result<StiffRates, DynamicsError> {
    let grid = params.grid();
    let k2 = grid.xi_sq();
    let mask = match level {
        Level::Mod2 => Some(jk_mask(grid, params.trunc_k)?),
        _ => None,
    };
    let rate = |d: f64| match &mask {
        None => k2.mapv(|s| -d * s),
        Some(m) => Zip::from(k2).and(m).map_collect(|&s, &keep| if keep { -d * s } else { 0.0 }),
    };
    Ok(StiffRates {
        n: rate(params.d1),
        c: rate(params.d2),
        u: rate(params.d3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub dealias_products: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { dealias_products: true }
    }
}

struct Ctx<'a> {
    grid: &'a Arc<Grid>,
    dealias: bool,
}

impl Ctx<'_> {
    fn product(&self, a: &Array2<f64>, b: &Array2<f64>, term: &str) -> Result<ScalarField, DynamicsError> {
        let p = ScalarField::from_real(self.grid, a * b);
        if p.has_non_finite() {
            return Err(DynamicsError::BlowUp { term: term.into() });
        }
        let p = p.to_spectral();
        Ok(if self.dealias { dealias(&p) } else { p })
    }

    fn field(&self, a: Array2<f64>, term: &str) -> Result<ScalarField, DynamicsError> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::BlowUp { term: term.into() });
        }
        let p = ScalarField::from_real(self.grid, a).to_spectral();
        Ok(if self.dealias { dealias(&p) } else { p })
    }

    /// `(a . grad) f` with `a` real components.
    fn advect(&self, ax: &Array2<f64>, ay: &Array2<f64>, f: &ScalarField, term: &str) -> Result<ScalarField, DynamicsError> {
        let g = gradient(f);
        let v = ax * &*g.x.real() + ay * &*g.y.real();
        self.field(v, term)
    }
}

fn check_ceiling(c: &Array2<f64>, c_max: f64) -> Result<(), DynamicsError> {
    if !c_max.is_finite() {
        return Ok(());
    }
    let limit = c_max * (1.0 + 1e-6);
    for ((i, j), &v) in c.indexed_iter() {
        if v > limit {
            return Err(DynamicsError::MaxPrinciple {
                value: v,
                c_max,
                location: (i, j),
            });
        }
    }
    Ok(())
}

fn mollifier(params: &ModelParams, level: Level) -> Result<Option<Array2<f64>>, DynamicsError> {
    match level {
        Level::Full => Ok(None),
        _ => Ok(Some(mollifier_symbol(params.grid(), params.epsilon)?)),
    }
}

fn apply(sym: &Option<Array2<f64>>, f: ScalarField) -> ScalarField {
    match sym {
        Some(s) => f.apply_symbol(s),
        None => f,
    }
}

/// `chi(c) grad c` for the level's `c`.
fn chemotactic_vector(ctx: &Ctx, params: &ModelParams, c: &ScalarField, c_real: &Array2<f64>) -> Result<VectorField, DynamicsError> {
    let grad = gradient(c);
    match params.sensitivity.constant_chi() {
        Some(chi0) => Ok(grad.scale(chi0)),
        None => {
            let chi = c_real.mapv(|v| params.sensitivity.chi(v));
            Ok(VectorField::new(
                ctx.product(&chi, &grad.x.real(), "chi(c) grad c")?,
                ctx.product(&chi, &grad.y.real(), "chi(c) grad c")?,
            ))
        }
    }
}

pub fn assemble_tendency(state: &State, params: &ModelParams, level: Level) -> Result<Tendency, DynamicsError> {
    assemble_tendency_with(state, params, level, AssemblyOptions::default())
}

pub fn assemble_tendency_with(
    state: &State,
    params: &ModelParams,
    level: Level,
    opts: AssemblyOptions,
) -> Result<Tendency, DynamicsError> {
    let grid = params.grid();
    if !state.grid().same_as(grid) {
        return Err(SpectralError::GridMismatch.into());
    }
    if level != Level::Full && !(params.epsilon > 0.0) {
        return Err(DynamicsError::InvalidParameter("mollified levels need epsilon > 0".into()));
    }
    let rates = stiff_rates(params, level)?;
    let s = state.to_spectral();
    let stiff = Components {
        n: s.n.apply_symbol(&rates.n),
        c: s.c.apply_symbol(&rates.c),
        u: s.u.map_components(|f| f.apply_symbol(&rates.u)),
    };
    let ctx = Ctx { grid, dealias: opts.dealias_products };
    let nonstiff = match level {
        Level::Full | Level::Mod1 => nonstiff_mod1(&ctx, &s, params, level)?,
        Level::Mod2 => nonstiff_mod2(&ctx, &s, params)?,
    };
    Ok(Tendency { stiff, nonstiff })
}

fn nonstiff_mod1(ctx: &Ctx, s: &State, params: &ModelParams, level: Level) -> Result<Components, DynamicsError> {
    let m = mollifier(params, level)?;
    let n_r = s.n.real().into_owned();
    let c_r = s.c.real().into_owned();
    let ux = s.u.x.real().into_owned();
    let uy = s.u.y.real().into_owned();
    check_ceiling(&c_r, params.sensitivity.c_max())?;

    // n: -div(u n) - div(n M[chi grad c])
    let flux_u = VectorField::new(ctx.product(&ux, &n_r, "u n")?, ctx.product(&uy, &n_r, "u n")?);
    let chem = chemotactic_vector(ctx, params, &s.c, &c_r)?.map_components(|f| apply(&m, f.clone()));
    let flux_c = VectorField::new(
        ctx.product(&n_r, &chem.x.real(), "n chi grad c")?,
        ctx.product(&n_r, &chem.y.real(), "n chi grad c")?,
    );
    let dn = divergence(&flux_u.add(&flux_c)).scale(-1.0);

    // c: -u.grad c - kappa(c) M[n]
    let adv_c = ctx.advect(&ux, &uy, &s.c, "u grad c")?;
    let kappa = c_r.mapv(|v| params.sensitivity.kappa(v));
    let mn = apply(&m, s.n.clone());
    let cons = ctx.product(&kappa, &mn.real(), "kappa(c) n")?;
    let dc = adv_c.add(&cons).scale(-1.0);

    // u: P(-(u.grad)u + M[n grad phi])
    let adv_x = ctx.advect(&ux, &uy, &s.u.x, "u grad u")?;
    let adv_y = ctx.advect(&ux, &uy, &s.u.y, "u grad u")?;
    let phi = &params.potential.grad;
    let bx = apply(&m, ctx.product(&n_r, &phi.x.real(), "n grad phi")?);
    let by = apply(&m, ctx.product(&n_r, &phi.y.real(), "n grad phi")?);
    let du = leray_project(&VectorField::new(bx.sub(&adv_x), by.sub(&adv_y)));
    Ok(Components { n: dn, c: dc, u: du })
}

fn mask_field(f: &ScalarField, mask: &Array2<bool>) -> ScalarField {
    let mut c = f.spectral().into_owned();
    Zip::from(&mut c).and(mask).for_each(|z, &keep| {
        if !keep {
            *z = Default::default();
        }
    });
    ScalarField::from_spectral(f.grid(), c)
}

/// Gates `(theta(u,n), theta(u,c), theta(n,c), theta(u))` of the truncated drift.
pub fn mod2_gates(state: &State, params: &ModelParams) -> Result<[f64; 4], DynamicsError> {
    if params.cutoff_r.is_infinite() {
        return Ok([1.0; 4]);
    }
    let cfg = CutoffConfig::new(params.cutoff_r)?;
    let wu = w1_inf_norm_vector(&state.u);
    let wn = w1_inf_norm(&state.n);
    let wc = w1_inf_norm(&state.c);
    Ok([
        theta_r(wu + wn, cfg),
        theta_r(wu + wc, cfg),
        theta_r(wn + wc, cfg),
        theta_r(wu, cfg),
    ])
}

/// Prefactor on the noise term: `theta_R(||u||_W1,inf)` for the truncated
/// system, 1 otherwise.
pub fn noise_gate(state: &State, params: &ModelParams, level: Level) -> Result<f64, DynamicsError> {
    match level {
        Level::Mod2 => Ok(mod2_gates(state, params)?[3]),
        _ => Ok(1.0),
    }
}

fn nonstiff_mod2(ctx: &Ctx, s: &State, params: &ModelParams) -> Result<Components, DynamicsError> {
    let grid = ctx.grid;
    let mask = jk_mask(grid, params.trunc_k)?;
    let m = mollifier(params, Level::Mod2)?;
    let [t_un, t_uc, t_nc, t_u] = mod2_gates(s, params)?;
    let jn = mask_field(&s.n, &mask);
    let jc = mask_field(&s.c, &mask);
    let ju = s.u.map_components(|f| mask_field(f, &mask));
    let jn_r = jn.real().into_owned();
    let jc_r = jc.real().into_owned();
    let ux = ju.x.real().into_owned();
    let uy = ju.y.real().into_owned();
    let zero = ScalarField::zeros(grid);

    let mut dn = zero.clone();
    if t_un > 0.0 {
        dn = dn.axpy(-t_un, &mask_field(&ctx.advect(&ux, &uy, &jn, "Ju grad Jn")?, &mask));
    }
    if t_nc > 0.0 {
        let chem = chemotactic_vector(ctx, params, &jc, &jc_r)?.map_components(|f| apply(&m, f.clone()));
        let flux = VectorField::new(
            mask_field(&ctx.product(&jn_r, &chem.x.real(), "Jn chi grad Jc")?, &mask),
            mask_field(&ctx.product(&jn_r, &chem.y.real(), "Jn chi grad Jc")?, &mask),
        );
        dn = dn.axpy(-t_nc, &divergence(&flux));
    }

    let mut dc = zero.clone();
    if t_uc > 0.0 {
        dc = dc.axpy(-t_uc, &mask_field(&ctx.advect(&ux, &uy, &jc, "Ju grad Jc")?, &mask));
    }
    if t_nc > 0.0 {
        let kappa = jc_r.mapv(|v| params.sensitivity.kappa(v));
        let cons = apply(&m, ctx.product(&jn_r, &kappa, "Jn kappa(Jc)")?);
        dc = dc.axpy(-t_nc, &mask_field(&cons, &mask));
    }

    let phi = &params.potential.grad;
    let bx = mask_field(&apply(&m, ctx.product(&jn_r, &phi.x.real(), "Jn grad phi")?), &mask);
    let by = mask_field(&apply(&m, ctx.product(&jn_r, &phi.y.real(), "Jn grad phi")?), &mask);
    let mut du = VectorField::new(bx, by);
    if t_u > 0.0 {
        let ax = mask_field(&ctx.advect(&ux, &uy, &ju.x, "Ju grad Ju")?, &mask);
        let ay = mask_field(&ctx.advect(&ux, &uy, &ju.y, "Ju grad Ju")?, &mask);
        du = du.axpy(-t_u, &VectorField::new(ax, ay));
    }
    Ok(Components {
        n: dn,
        c: dc,
        u: leray_project(&du),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    N,
    C,
    U,
}

/// Weak-form flux density `int (...) dx` at one state, for the tested component.
fn weak_flux(
    s: &State,
    params: &ModelParams,
    level: Level,
    phi: &ScalarField,
    grad_phi: &VectorField,
    psi: &VectorField,
    which: Component,
) -> Result<f64, DynamicsError> {
    let grid = params.grid();
    let ctx = Ctx { grid, dealias: true };
    let m = mollifier(params, level)?;
    let s = s.to_spectral();
    let n_r = s.n.real().into_owned();
    let c_r = s.c.real().into_owned();
    let ux = s.u.x.real().into_owned();
    let uy = s.u.y.real().into_owned();
    match which {
        Component::N => {
            // int (u n - d1 grad n + n M[chi grad c]) . grad phi
            let chem = chemotactic_vector(&ctx, params, &s.c, &c_r)?.map_components(|f| apply(&m, f.clone()));
            let gn = gradient(&s.n).scale(params.d1);
            let fx = ctx.product(&ux, &n_r, "u n")?.add(&ctx.product(&n_r, &chem.x.real(), "n chi grad c")?);
            let fy = ctx.product(&uy, &n_r, "u n")?.add(&ctx.product(&n_r, &chem.y.real(), "n chi grad c")?);
            let flux = VectorField::new(fx, fy).sub(&gn);
            Ok(vector_inner_product(&flux, grad_phi))
        }
        Component::C => {
            // int (u c - d2 grad c) . grad phi - int kappa(c) M[n] phi
            let gc = gradient(&s.c).scale(params.d2);
            let flux = VectorField::new(ctx.product(&ux, &c_r, "u c")?, ctx.product(&uy, &c_r, "u c")?).sub(&gc);
            let kappa = c_r.mapv(|v| params.sensitivity.kappa(v));
            let mn = apply(&m, s.n.clone());
            let cons = ctx.product(&kappa, &mn.real(), "kappa(c) n")?;
            Ok(vector_inner_product(&flux, grad_phi) - inner_product(&cons, phi))
        }
        Component::U => {
            // int (u (x) u) : grad psi - d3 int grad u : grad psi + int M[n grad phi] . psi
            let gpx = gradient(&psi.x);
            let gpy = gradient(&psi.y);
            let uxux = ctx.product(&ux, &ux, "u u")?;
            let uxuy = ctx.product(&ux, &uy, "u u")?;
            let uyuy = ctx.product(&uy, &uy, "u u")?;
            let conv = inner_product(&uxux, &gpx.x)
                + inner_product(&uxuy, &gpx.y)
                + inner_product(&uxuy, &gpy.x)
                + inner_product(&uyuy, &gpy.y);
            let visc = vector_inner_product(&gradient(&s.u.x), &gpx) + vector_inner_product(&gradient(&s.u.y), &gpy);
            let pg = &params.potential.grad;
            let bx = apply(&m, ctx.product(&n_r, &pg.x.real(), "n grad phi")?);
            let by = apply(&m, ctx.product(&n_r, &pg.y.real(), "n grad phi")?);
            let buoy = vector_inner_product(&VectorField::new(bx, by), psi);
            Ok(conv - params.d3 * visc + buoy)
        }
    }
}

/// Residual of the weak formulation at every supplied state.
///
/// Time integrals use the trapezoid rule over the states' own times; the
/// stochastic integral for `u` uses left-point sums against `noise`, whose
/// increments must align with consecutive states.
pub fn weak_residual(
    states: &[State],
    params: &ModelParams,
    level: Level,
    test_scalar: &ScalarField,
    test_vector: &VectorField,
    which: Component,
    noise: Option<&NoisePath>,
) -> Result<Vec<f64>, DynamicsError> {
    if level == Level::Mod2 {
        return Err(DynamicsError::InvalidParameter("weak residual is defined for full and mod1 only".into()));
    }
    if states.is_empty() {
        return Ok(Vec::new());
    }
    if which == Component::U {
        let dv = norm(&divergence(test_vector), NormKind::L2)?;
        let size = vector_norm(test_vector, NormKind::L2)?;
        if dv > 1e-12 * size.max(f64::MIN_POSITIVE) {
            return Err(DynamicsError::InvalidTest(format!("test vector has divergence {dv:e}")));
        }
    }
    if let Some(p) = noise {
        if p.n_steps() + 1 < states.len() {
            return Err(DynamicsError::InvalidParameter("noise path shorter than the state sequence".into()));
        }
    }
    let grad_phi = gradient(test_scalar);
    let pairing = |s: &State| match which {
        Component::N => inner_product(&s.n, test_scalar),
        Component::C => inner_product(&s.c, test_scalar),
        Component::U => vector_inner_product(&s.u, test_vector),
    };
    let fluxes: Vec<f64> = states
        .iter()
        .map(|s| weak_flux(s, params, level, test_scalar, &grad_phi, test_vector, which))
        .collect::<Result<_, _>>()?;
    let p0 = pairing(&states[0]);
    let mut out = vec![0.0; states.len()];
    let mut integral = 0.0;
    let mut stoch = 0.0;
    for i in 1..states.len() {
        let dt = states[i].time - states[i - 1].time;
        integral += 0.5 * dt * (fluxes[i - 1] + fluxes[i]);
        if let (Component::U, Some(p)) = (which, noise) {
            for (j, dw) in p.step(i - 1).into_iter().enumerate() {
                let f = eval_noise_operator(&states[i - 1].u, &params.noise, j)?;
                stoch += vector_inner_product(&f, test_vector) * dw;
            }
        }
        out[i] = pairing(&states[i]) - p0 - integral - stoch;
    }
    Ok(out)
}
