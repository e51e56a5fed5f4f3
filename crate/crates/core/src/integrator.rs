//! IMEX Euler-Maruyama time stepping.

use ndarray::Zip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{compute_record, DiagnosticsRecord};
use crate::dynamics::{
    assemble_tendency_with, noise_gate, stiff_rates, AssemblyOptions, DynamicsError, Level,
    StiffRates, State, Tendency,
};
use crate::model::ModelParams;
use crate::noise::{eval_noise_operator, NoiseError, NoisePath};
use crate::spectral::{gradient, leray_project, vector_inner_product, vector_norm, NormKind, ScalarField, VectorField};

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dt = {dt:e} exceeds the stability suggestion {suggested:e}")]
    Cfl { dt: f64, suggested: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImexEm,
    /// forward Euler on the stiff part too; for validation only
    ExplicitEm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub checkpoint_stride: usize,
    pub max_steps: usize,
    pub cfl_override: bool,
    /// upper bound reported by [`cfl_suggest`]
    pub dt_cap: f64,
    pub blowup_threshold: f64,
    /// compute a diagnostics record after every step
    pub diagnostics: bool,
}

impl StepConfig {
    pub fn new(dt: f64, max_steps: usize) -> Self {
        StepConfig {
            dt,
            scheme: Scheme::ImexEm,
            checkpoint_stride: 1,
            max_steps,
            cfl_override: false,
            dt_cap: dt,
            blowup_threshold: 1e12,
            diagnostics: true,
        }
    }
}

/// Source of drift for the stepper.
pub trait TendencyProvider {
    fn params(&self) -> &ModelParams;
    fn level(&self) -> Level;
    fn rates(&self) -> &StiffRates;
    fn tendency(&self, state: &State) -> Result<Tendency, DynamicsError>;
    fn noise_gate(&self, state: &State) -> Result<f64, DynamicsError> {
        noise_gate(state, self.params(), self.level())
    }
}

/// The model drift at a fixed level.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub params: ModelParams,
    pub level: Level,
    pub options: AssemblyOptions,
    rates: StiffRates,
}

impl Dynamics {
    pub fn new(params: ModelParams, level: Level) -> Result<Self, DynamicsError> {
        let rates = stiff_rates(&params, level)?;
        Ok(Dynamics {
            params,
            level,
            options: AssemblyOptions::default(),
            rates,
        })
    }
}

impl TendencyProvider for Dynamics {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn level(&self) -> Level {
        self.level
    }

    fn rates(&self) -> &StiffRates {
        &self.rates
    }

    fn tendency(&self, state: &State) -> Result<Tendency, DynamicsError> {
        assemble_tendency_with(state, &self.params, self.level, self.options)
    }
}

fn advance(
    x: &ScalarField,
    nonstiff: &ScalarField,
    extra: Option<&ScalarField>,
    rate: &ndarray::Array2<f64>,
    dt: f64,
    scheme: Scheme,
) -> ScalarField {
    let mut out = x.spectral().into_owned();
    let ns = nonstiff.spectral();
    let ex = extra.map(|e| e.spectral());
    match scheme {
        Scheme::ImexEm => {
            Zip::from(&mut out).and(&*ns).for_each(|z, &f| *z += f * dt);
            if let Some(e) = &ex {
                Zip::from(&mut out).and(&**e).for_each(|z, &w| *z += w);
            }
            Zip::from(&mut out).and(rate).for_each(|z, &r| *z *= (r * dt).exp());
        }
        Scheme::ExplicitEm => {
            Zip::from(&mut out).and(&*ns).and(rate).for_each(|z, &f, &r| *z += (*z * r + f) * dt);
            if let Some(e) = &ex {
                Zip::from(&mut out).and(&**e).for_each(|z, &w| *z += w);
            }
        }
    }
    ScalarField::from_spectral(x.grid(), out)
}

/// `sum_j gate P f_j(u) dW_j`.
pub fn noise_increment(
    state: &State,
    provider: &dyn TendencyProvider,
    increments: &[f64],
) -> Result<Option<VectorField>, IntegratorError> {
    let spec = &provider.params().noise;
    if increments.len() != spec.n_modes() {
        return Err(IntegratorError::Contract(format!(
            "{} noise increments supplied for {} modes",
            increments.len(),
            spec.n_modes()
        )));
    }
    if spec.is_off() || increments.is_empty() {
        return Ok(None);
    }
    let gate = provider.noise_gate(state)?;
    if gate == 0.0 {
        return Ok(None);
    }
    let mut acc = VectorField::zeros(state.grid());
    for (j, &dw) in increments.iter().enumerate() {
        let f = eval_noise_operator(&state.u, spec, j)?;
        acc = acc.axpy(gate * dw, &f);
    }
    Ok(Some(acc))
}

/// One Euler-Maruyama step with exact integrating factor for the diffusion.
pub fn step(
    state: &State,
    provider: &dyn TendencyProvider,
    increments: &[f64],
    dt: f64,
    scheme: Scheme,
) -> Result<State, IntegratorError> {
    if !(dt > 0.0) {
        return Err(IntegratorError::Contract(format!("dt must be positive, got {dt}")));
    }
    let t = provider.tendency(state)?;
    let noise = noise_increment(state, provider, increments)?;
    let r = provider.rates();
    let s = state.to_spectral();
    let n = advance(&s.n, &t.nonstiff.n, None, &r.n, dt, scheme);
    let c = advance(&s.c, &t.nonstiff.c, None, &r.c, dt, scheme);
    let ux = advance(&s.u.x, &t.nonstiff.u.x, noise.as_ref().map(|v| &v.x), &r.u, dt, scheme);
    let uy = advance(&s.u.y, &t.nonstiff.u.y, noise.as_ref().map(|v| &v.y), &r.u, dt, scheme);
    let next = State {
        n,
        c,
        u: leray_project(&VectorField::new(ux, uy)),
        time: state.time + dt,
    };
    Ok(next.cleaned())
}

/// Largest stable explicit step, `0.4 * min(advective, chemotactic, reaction)`,
/// capped at `dt_cap`.
pub fn cfl_suggest(state: &State, params: &ModelParams, dt_cap: f64) -> f64 {
    let dx = state.grid().dx();
    let u_inf = state.u.max_abs();
    let c_top = if params.sensitivity.c_max().is_finite() {
        params.sensitivity.c_max()
    } else {
        state.c.max_abs()
    };
    let (m_kappa, m_chi) = params.sensitivity.maxima(c_top);
    let grad_c = gradient(&state.c).max_abs();
    let n_inf = state.n.max_abs();
    let advective = if u_inf > 0.0 { dx / u_inf } else { f64::INFINITY };
    let chemotactic = if m_chi * grad_c > 0.0 { dx / (m_chi * grad_c) } else { f64::INFINITY };
    let reaction = 1.0 / (m_kappa * n_inf + 1e-12);
    (0.4 * advective.min(chemotactic).min(reaction)).min(dt_cap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Completed,
    BlowUp { step: usize, time: f64, reason: String },
    Error { step: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
    pub status: Status,
    pub dt: f64,
    pub noise_seed: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.checkpoints.last().expect("trajectory has at least the initial state")
    }

    pub fn completed(&self) -> bool {
        self.status == Status::Completed
    }
}

struct EnergyLedger {
    e0: f64,
    integral: f64,
    martingale: f64,
    prev_rate: f64,
    ito_prev: f64,
}

fn is_blowup(e: &IntegratorError) -> Option<String> {
    match e {
        IntegratorError::Dynamics(DynamicsError::BlowUp { term }) => Some(format!("non-finite {term}")),
        _ => None,
    }
}

/// Iterates [`step`] for `cfg.max_steps` steps along `path`.
pub fn run(initial: &State, provider: &dyn TendencyProvider, cfg: &StepConfig, path: &NoisePath) -> Result<Trajectory, IntegratorError> {
    let params = provider.params();
    let level = provider.level();
    let n_modes = params.noise.n_modes();
    let noisy = !params.noise.is_off();
    if noisy {
        if path.n_steps() < cfg.max_steps || path.n_modes() != n_modes {
            return Err(IntegratorError::Contract(format!(
                "noise path has {} steps x {} modes, need {} x {}",
                path.n_steps(),
                path.n_modes(),
                cfg.max_steps,
                n_modes
            )));
        }
        if (path.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
            return Err(IntegratorError::Contract(format!("path dt {} differs from step dt {}", path.dt, cfg.dt)));
        }
    }
    let stride = cfg.checkpoint_stride.max(1);
    let mut state = initial.to_spectral();
    let mut checkpoints = vec![state.clone()];
    let mut records = Vec::new();
    let mut ledger = None;
    let zero_inc = vec![0.0; n_modes];
    if cfg.diagnostics {
        let rec = compute_record(&state, params, level);
        let (ito, _) = ito_terms(&state, provider, &zero_inc, noisy)?;
        ledger = Some(EnergyLedger {
            e0: rec.kinetic_energy,
            integral: 0.0,
            martingale: 0.0,
            prev_rate: params.d3 * rec.enstrophy - rec.buoyancy_work,
            ito_prev: ito,
        });
        records.push(rec);
    }
    let mut status = Status::Completed;
    for k in 0..cfg.max_steps {
        if !cfg.cfl_override {
            let suggested = cfl_suggest(&state, params, f64::INFINITY);
            if cfg.dt > suggested {
                status = Status::Error {
                    step: k,
                    message: IntegratorError::Cfl { dt: cfg.dt, suggested }.to_string(),
                };
                break;
            }
        }
        let inc = if noisy { path.step(k) } else { zero_inc.clone() };
        let next = match step(&state, provider, &inc, cfg.dt, cfg.scheme) {
            Ok(s) => s,
            Err(e) => {
                status = match is_blowup(&e) {
                    Some(reason) => Status::BlowUp { step: k, time: state.time, reason },
                    None => Status::Error { step: k, message: e.to_string() },
                };
                break;
            }
        };
        let n_inf = next.n.max_abs();
        if next.has_non_finite() || !(n_inf <= cfg.blowup_threshold) {
            status = Status::BlowUp {
                step: k + 1,
                time: next.time,
                reason: format!("||n||_inf = {n_inf:e}"),
            };
            if cfg.diagnostics {
                let mut rec = compute_record(&next, params, level);
                rec.blow_up = true;
                records.push(rec);
            }
            break;
        }
        if let Some(l) = ledger.as_mut() {
            let (_, mart) = ito_terms(&state, provider, &inc, noisy)?;
            let mut rec = compute_record(&next, params, level);
            let (ito_next, _) = ito_terms(&next, provider, &zero_inc, noisy)?;
            let rate = params.d3 * rec.enstrophy - rec.buoyancy_work;
            l.integral += 0.5 * cfg.dt * (l.prev_rate + rate) - 0.5 * cfg.dt * (l.ito_prev + ito_next);
            l.martingale += mart;
            l.prev_rate = rate;
            l.ito_prev = ito_next;
            rec.energy_balance_defect = (rec.kinetic_energy - l.e0 + l.integral - l.martingale).abs();
            records.push(rec);
        }
        state = next;
        if (k + 1) % stride == 0 {
            checkpoints.push(state.clone());
        }
    }
    if checkpoints.last().map(|s| s.time) != Some(state.time) {
        checkpoints.push(state);
    }
    Ok(Trajectory {
        checkpoints,
        records,
        status,
        dt: cfg.dt,
        noise_seed: path.seed,
    })
}

/// `(1/2 sum_j ||gate P f_j||^2, sum_j gate (u, P f_j) dW_j)` at a state.
fn ito_terms(state: &State, provider: &dyn TendencyProvider, inc: &[f64], noisy: bool) -> Result<(f64, f64), IntegratorError> {
    if !noisy {
        return Ok((0.0, 0.0));
    }
    let spec = &provider.params().noise;
    let gate = provider.noise_gate(state)?;
    let mut drift = 0.0;
    let mut mart = 0.0;
    for j in 0..spec.n_modes() {
        let f = eval_noise_operator(&state.u, spec, j)?.scale(gate);
        drift += 0.5 * vector_norm(&f, NormKind::L2)?.powi(2);
        mart += vector_inner_product(&state.u, &f) * inc.get(j).copied().unwrap_or(0.0);
    }
    Ok((drift, mart))
}
