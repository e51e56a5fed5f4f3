//! Experiment kinds behind the command-line interface.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{steps_for, Axis, ExperimentConfig, Metric, Quantity};
use super::fit::{cumulative_trapezoid, envelope_fit, linear_fit, quantile, EnvelopeFit};
use super::HarnessError;
use crate::diagnostics::{gronwall_factor, uniqueness_functional, DiagnosticsRecord};
use crate::dynamics::{Components, Level, State};
use crate::integrator::{run, Dynamics, Status, TendencyProvider, Trajectory};
use crate::model::{check_b2, validate_assumptions, AssumptionSet, ModelParams, ValidationReport};
use crate::noise::{sample_path, NoisePath};
use crate::spectral::{norm, resample, vector_norm, NormKind, ScalarField, VectorField};

struct Prepared {
    params: ModelParams,
    state: State,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let grid = cfg.build_grid()?;
    let params = cfg.build_params(&grid)?;
    let state = cfg.build_state(&grid)?;
    Ok(Prepared { params, state })
}

fn path_for(params: &ModelParams, n_steps: usize, dt: f64, seed: u64) -> Result<NoisePath, HarnessError> {
    Ok(if params.noise.is_off() {
        NoisePath::empty(n_steps, dt)
    } else {
        sample_path(&params.noise, n_steps, dt, seed)?
    })
}

fn run_from(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    state: &State,
    path: &NoisePath,
    stride: Option<usize>,
    diagnostics: bool,
) -> Result<Trajectory, HarnessError> {
    let dynamics = Dynamics::new(params.clone(), cfg.dynamics.level)?;
    let mut step_cfg = cfg.integrator.step_config()?;
    step_cfg.diagnostics = diagnostics;
    if let Some(s) = stride {
        step_cfg.checkpoint_stride = s;
    }
    Ok(run(state, &dynamics, &step_cfg, path)?)
}

fn max_of(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records.iter().map(f).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub run_id: String,
    pub status: Status,
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub noise_seed: u64,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub mass_drift_rel: f64,
    pub c0_inf: f64,
    pub max_c: f64,
    pub min_c: f64,
    pub min_n: f64,
    pub max_divergence: f64,
    pub max_energy_defect: f64,
    /// entropy F1 + int G1 envelope
    pub envelope_f1: Option<EnvelopeFit>,
    /// entropy F2 + int G2 envelope
    pub envelope_f2: Option<EnvelopeFit>,
    pub f2_certificate_every_step: bool,
    pub assumptions_a: ValidationReport,
    pub final_record: Option<DiagnosticsRecord>,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    pub summary: SimulationSummary,
}

/// `F(t) + int_0^t G` along a record stream.
pub fn entropy_series(
    records: &[DiagnosticsRecord],
    f: impl Fn(&DiagnosticsRecord) -> f64,
    g: impl Fn(&DiagnosticsRecord) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let t: Vec<f64> = records.iter().map(|r| r.time).collect();
    let gs: Vec<f64> = records.iter().map(g).collect();
    let ig = cumulative_trapezoid(&t, &gs);
    let y = records.iter().zip(&ig).map(|(r, i)| f(r) + i).collect();
    (t, y)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulationResult, HarnessError> {
    let p = prepare(cfg)?;
    let steps = cfg.integrator.n_steps()?;
    let path = path_for(&p.params, steps, cfg.integrator.dt, cfg.integrator.seed)?;
    let trajectory = run_from(cfg, &p.params, &p.state, &path, None, true)?;
    let recs = &trajectory.records;
    let m0 = recs.first().map(|r| r.mass_n).unwrap_or(0.0);
    let m1 = recs.last().map(|r| r.mass_n).unwrap_or(0.0);
    let envelope = |f: fn(&DiagnosticsRecord) -> f64, g: fn(&DiagnosticsRecord) -> f64| {
        if recs.len() < 2 {
            return None;
        }
        let (t, y) = entropy_series(recs, f, g);
        envelope_fit(&t, &y)
    };
    let summary = SimulationSummary {
        run_id: cfg.run_id.clone(),
        status: trajectory.status.clone(),
        steps: recs.len().saturating_sub(1),
        dt: cfg.integrator.dt,
        t_final: cfg.integrator.t_final,
        noise_seed: cfg.integrator.seed,
        mass_initial: m0,
        mass_final: m1,
        mass_drift_rel: if m0 != 0.0 { ((m1 - m0) / m0).abs() } else { (m1 - m0).abs() },
        c0_inf: recs.first().map(|r| r.linf_c).unwrap_or(0.0),
        max_c: max_of(recs, |r| r.linf_c),
        min_c: min_of(recs, |r| r.min_c),
        min_n: min_of(recs, |r| r.min_n),
        max_divergence: max_of(recs, |r| r.divergence_u),
        max_energy_defect: max_of(recs, |r| r.energy_balance_defect),
        envelope_f1: envelope(|r| r.entropy_f1, |r| r.dissipation_g1),
        envelope_f2: envelope(|r| r.entropy_f2, |r| r.dissipation_g2),
        f2_certificate_every_step: recs.iter().all(|r| r.f2_abs_entropy <= r.f2_density_bound + 4.0),
        assumptions_a: validate_assumptions(&p.params, &cfg.initial, AssumptionSet::A),
        final_record: recs.last().cloned(),
    };
    Ok(SimulationResult { trajectory, summary })
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberSummary {
    pub index: usize,
    pub seed: u64,
    pub status: Status,
    pub sup_f1: f64,
    /// first Brownian increment of mode 0, if any
    pub first_increment: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StatRow {
    pub time: f64,
    pub f1_mean: f64,
    pub f1_median: f64,
    pub f1_q90: f64,
    pub f1_variance: f64,
    pub g1_integral_mean: f64,
    pub g1_integral_median: f64,
    pub g1_integral_q90: f64,
    pub u_sq_mean: f64,
    pub u_sq_median: f64,
    pub u_sq_q90: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub run_id: String,
    pub n_members: usize,
    pub completers: usize,
    pub members: Vec<MemberSummary>,
    /// `E sup_t F1^p` for p = 1, 2 over completers
    pub e_sup_f1: [f64; 2],
    pub max_f1_variance: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub summary: EnsembleSummary,
    pub stats: Vec<StatRow>,
    pub member_records: Vec<Vec<DiagnosticsRecord>>,
}

/// Seed of ensemble member `i`.
pub fn member_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

fn stats_of(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, quantile(values, 0.5), quantile(values, 0.9), var)
}

pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleResult, HarnessError> {
    let n_members = cfg.ensemble.n_members;
    if n_members == 0 {
        return Err(HarnessError::Config("ensemble needs at least one member".into()));
    }
    let p = prepare(cfg)?;
    let steps = cfg.integrator.n_steps()?;
    let runs: Vec<Result<(MemberSummary, Vec<DiagnosticsRecord>), HarnessError>> = (0..n_members)
        .into_par_iter()
        .map(|i| {
            let seed = member_seed(cfg.ensemble.seed_base, i);
            let path = path_for(&p.params, steps, cfg.integrator.dt, seed)?;
            let first_increment = (path.n_steps() > 0 && path.n_modes() > 0).then(|| path.increments()[[0, 0]]);
            let traj = run_from(cfg, &p.params, &p.state, &path, Some(usize::MAX), true)?;
            let summary = MemberSummary {
                index: i,
                seed,
                status: traj.status.clone(),
                sup_f1: max_of(&traj.records, |r| r.entropy_f1),
                first_increment,
            };
            Ok((summary, traj.records))
        })
        .collect();
    let mut members = Vec::new();
    let mut member_records = Vec::new();
    for r in runs {
        let (m, recs) = r?;
        members.push(m);
        member_records.push(recs);
    }
    let done: Vec<usize> = members.iter().filter(|m| m.status == Status::Completed).map(|m| m.index).collect();
    let mut stats = Vec::new();
    if let Some(&first) = done.first() {
        let series: Vec<(Vec<f64>, Vec<f64>)> = done
            .iter()
            .map(|&i| {
                let recs = &member_records[i];
                let t: Vec<f64> = recs.iter().map(|r| r.time).collect();
                let g: Vec<f64> = recs.iter().map(|r| r.dissipation_g1).collect();
                (t.clone(), cumulative_trapezoid(&t, &g))
            })
            .collect();
        for (k, rec) in member_records[first].iter().enumerate() {
            let f1: Vec<f64> = done.iter().map(|&i| member_records[i][k].entropy_f1).collect();
            let gi: Vec<f64> = series.iter().map(|s| s.1[k]).collect();
            let us: Vec<f64> = done.iter().map(|&i| member_records[i][k].l2_u.powi(2)).collect();
            let (a, b, c, v) = stats_of(&f1);
            let (ga, gb, gc, _) = stats_of(&gi);
            let (ua, ub, uc, _) = stats_of(&us);
            stats.push(StatRow {
                time: rec.time,
                f1_mean: a,
                f1_median: b,
                f1_q90: c,
                f1_variance: v,
                g1_integral_mean: ga,
                g1_integral_median: gb,
                g1_integral_q90: gc,
                u_sq_mean: ua,
                u_sq_median: ub,
                u_sq_q90: uc,
            });
        }
    }
    let sups: Vec<f64> = done.iter().map(|&i| members[i].sup_f1).collect();
    let e_sup = |p: i32| if sups.is_empty() { f64::NAN } else { sups.iter().map(|s| s.powi(p)).sum::<f64>() / sups.len() as f64 };
    let summary = EnsembleSummary {
        run_id: cfg.run_id.clone(),
        n_members,
        completers: done.len(),
        e_sup_f1: [e_sup(1), e_sup(2)],
        max_f1_variance: stats.iter().map(|s| s.f1_variance).fold(0.0, f64::max),
        members,
    };
    Ok(EnsembleResult {
        summary,
        stats,
        member_records,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelResult {
    pub level: f64,
    pub distance_n: f64,
    pub distance_c: f64,
    pub distance_u: f64,
    /// distance of the selected quantity
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub run_id: String,
    pub axis: Axis,
    pub reference: String,
    pub levels: Vec<LevelResult>,
    /// decay rate as the level is refined; `None` when undefined
    pub rate: Option<f64>,
    pub window: [f64; 2],
    pub exact_agreement: bool,
    /// distances decrease strictly under refinement
    pub monotone: bool,
    pub aborted: Option<String>,
    pub pass: bool,
    pub note: String,
}

fn variant(cfg: &ExperimentConfig, axis: Axis, level: f64) -> ExperimentConfig {
    let mut v = cfg.clone();
    match axis {
        Axis::Dt => v.integrator.dt = level,
        Axis::Epsilon => {
            v.model.epsilon = level;
            // no mollification at all is the unregularized system
            if level == 0.0 {
                v.dynamics.level = Level::Full;
            }
        }
        Axis::K => v.model.trunc_k = level,
        Axis::Grid => v.grid.n = level as usize,
    }
    v
}

fn default_reference(axis: Axis, levels: &[f64]) -> f64 {
    match axis {
        Axis::Dt => levels.iter().copied().fold(f64::INFINITY, f64::min) / 16.0,
        Axis::Epsilon => 0.0,
        Axis::K => f64::INFINITY,
        Axis::Grid => 2.0 * levels.iter().copied().fold(0.0, f64::max),
    }
}

fn scalar_dist(a: &ScalarField, b: &ScalarField) -> Result<f64, HarnessError> {
    let a = if a.grid().same_as(b.grid()) { a.clone() } else { resample(a, b.grid())? };
    Ok(norm(&a.sub(b), NormKind::L2)?)
}

fn components_dist(a: &Components, b: &Components) -> Result<[f64; 3], HarnessError> {
    let (ux, uy) = (scalar_dist(&a.u.x, &b.u.x)?, scalar_dist(&a.u.y, &b.u.y)?);
    Ok([scalar_dist(&a.n, &b.n)?, scalar_dist(&a.c, &b.c)?, (ux * ux + uy * uy).sqrt()])
}

fn state_components(s: &State) -> Components {
    Components {
        n: s.n.clone(),
        c: s.c.clone(),
        u: s.u.clone(),
    }
}

fn select(d: [f64; 3], q: Quantity) -> f64 {
    match q {
        Quantity::All => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(),
        Quantity::N => d[0],
        Quantity::C => d[1],
        Quantity::U => d[2],
    }
}

fn expected_window(axis: Axis, noisy: bool) -> [f64; 2] {
    match axis {
        Axis::Dt if noisy => [0.4, f64::INFINITY],
        Axis::Dt => [0.85, 1.15],
        Axis::Epsilon => [1.8, f64::INFINITY],
        Axis::K | Axis::Grid => [0.8, f64::INFINITY],
    }
}

/// `exp(t L) y0` with the stiff rates of `provider`.
fn linear_flow(y0: &State, provider: &dyn TendencyProvider, t: f64) -> State {
    let r = provider.rates();
    let f = |a: &ndarray::Array2<f64>| a.mapv(|v| (v * t).exp());
    let (en, ec, eu) = (f(&r.n), f(&r.c), f(&r.u));
    State {
        n: y0.n.apply_symbol(&en),
        c: y0.c.apply_symbol(&ec),
        u: VectorField::new(y0.u.x.apply_symbol(&eu), y0.u.y.apply_symbol(&eu)),
        time: t,
    }
}

type Samples = Vec<State>;

fn sampled_run(v: &ExperimentConfig, path: &NoisePath, samples: usize) -> Result<(Samples, Status), HarnessError> {
    let steps_per_sample = steps_for(v.integrator.t_final / samples as f64, v.integrator.dt)?;
    let p = prepare(v)?;
    let traj = run_from(v, &p.params, &p.state, path, Some(steps_per_sample.max(1)), false)?;
    Ok((traj.checkpoints, traj.status))
}

/// Refinement study along one parameter axis against a pinned reference.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let cc = &cfg.converge;
    if cc.levels.len() < 3 {
        return Err(HarnessError::Config(format!("convergence needs at least 3 levels, got {}", cc.levels.len())));
    }
    let samples = cc.samples.max(1);
    let reference = cc.reference.unwrap_or_else(|| default_reference(cc.axis, &cc.levels));
    let noisy = !cfg.noise.is_off();
    let window = expected_window(cc.axis, noisy);
    if cc.exact_linear && noisy {
        return Err(HarnessError::Precondition("exact linear reference needs noise off".into()));
    }

    let mut aborted = None;
    let mut raw: Vec<[f64; 3]> = Vec::new();
    if cc.tendency_only {
        let mut base = cfg.clone();
        base.dynamics.mollify_initial = false;
        let tend = |v: &ExperimentConfig| -> Result<Components, HarnessError> {
            let mut b = base.clone();
            b.grid = v.grid.clone();
            let grid = b.build_grid()?;
            let state = b.build_state(&grid)?;
            let d = Dynamics::new(v.build_params(&grid)?, v.dynamics.level)?;
            Ok(d.tendency(&state)?.total())
        };
        let r = tend(&variant(cfg, cc.axis, reference))?;
        let levels: Vec<Result<Components, HarnessError>> =
            cc.levels.par_iter().map(|&l| tend(&variant(cfg, cc.axis, l))).collect();
        for t in levels {
            raw.push(components_dist(&t?, &r)?);
        }
    } else {
        let t_final = cfg.integrator.t_final;
        if !(t_final > 0.0) {
            return Err(HarnessError::Config("convergence needs t_final > 0".into()));
        }
        let n_paths = if noisy { cc.paths.max(1) } else { 1 };
        let mut sq = vec![[0.0; 3]; cc.levels.len()];
        for p in 0..n_paths {
            let seed = cfg.integrator.seed.wrapping_add(p as u64);
            match trajectory_distances(cfg, reference, samples, seed)? {
                Ok(d) => {
                    for (acc, d) in sq.iter_mut().zip(d) {
                        for i in 0..3 {
                            acc[i] += d[i] * d[i] / n_paths as f64;
                        }
                    }
                }
                Err(msg) => {
                    aborted = Some(msg);
                    sq.clear();
                    break;
                }
            }
        }
        raw = sq.into_iter().map(|a| a.map(f64::sqrt)).collect();
    }

    let levels: Vec<LevelResult> = raw
        .iter()
        .zip(&cc.levels)
        .map(|(d, &l)| LevelResult {
            level: l,
            distance_n: d[0],
            distance_c: d[1],
            distance_u: d[2],
            distance: select(*d, cc.quantity),
        })
        .collect();
    Ok(assemble_report(cfg, reference, levels, window, aborted))
}

/// Per-level distances to the reference along one noise path; `Err` carries
/// the abort reason of a run that did not complete.
fn trajectory_distances(
    cfg: &ExperimentConfig,
    reference: f64,
    samples: usize,
    seed: u64,
) -> Result<Result<Vec<[f64; 3]>, String>, HarnessError> {
    let cc = &cfg.converge;
    let t_final = cfg.integrator.t_final;
    let noisy = !cfg.noise.is_off();
    let grid_ref = variant(cfg, cc.axis, reference).build_grid()?;
    let base_params = cfg.build_params(&grid_ref)?;
    // along dt the level paths are aggregates of the reference path
    let ref_dt = if cc.axis == Axis::Dt { reference } else { cfg.integrator.dt };
    let ref_path = path_for(&base_params, steps_for(t_final, ref_dt)?, ref_dt, seed)?;
    let level_path = |l: f64| -> Result<NoisePath, HarnessError> {
        if cc.axis != Axis::Dt {
            return Ok(ref_path.clone());
        }
        let stride = (l / ref_dt).round();
        if (stride * ref_dt - l).abs() > 1e-9 * l || stride < 1.0 {
            return Err(HarnessError::Config(format!("dt level {l} is not a multiple of the reference {ref_dt}")));
        }
        if noisy {
            Ok(ref_path.aggregate(stride as usize)?)
        } else {
            Ok(NoisePath::empty(steps_for(t_final, l)?, l))
        }
    };
    let ref_samples: Samples = if cc.exact_linear {
        let v = variant(cfg, cc.axis, reference);
        let p = prepare(&v)?;
        let d = Dynamics::new(p.params.clone(), v.dynamics.level)?;
        (0..=samples)
            .map(|j| linear_flow(&p.state, &d, t_final * j as f64 / samples as f64))
            .collect()
    } else {
        let (s, status) = sampled_run(&variant(cfg, cc.axis, reference), &ref_path, samples)?;
        if status != Status::Completed {
            return Ok(Err(format!("reference level {reference}: {status:?}")));
        }
        s
    };
    let runs: Vec<Result<(Samples, Status), HarnessError>> = cc
        .levels
        .par_iter()
        .map(|&l| sampled_run(&variant(cfg, cc.axis, l), &level_path(l)?, samples))
        .collect();
    let mut out = Vec::new();
    for (k, r) in runs.into_iter().enumerate() {
        let (s, status) = r?;
        if status != Status::Completed || s.len() != samples + 1 {
            return Ok(Err(format!("level {}: {status:?}", cc.levels[k])));
        }
        let dists: Vec<[f64; 3]> = s
            .iter()
            .zip(&ref_samples)
            .map(|(a, b)| components_dist(&state_components(a), &state_components(b)))
            .collect::<Result<_, _>>()?;
        let acc = match cc.metric {
            Metric::Endpoint => *dists.last().unwrap(),
            Metric::L2Time => {
                let w = t_final / samples as f64;
                let mut acc = [0.0; 3];
                for d in &dists[1..] {
                    for i in 0..3 {
                        acc[i] += w * d[i] * d[i];
                    }
                }
                acc.map(f64::sqrt)
            }
        };
        out.push(acc);
    }
    Ok(Ok(out))
}

fn assemble_report(
    cfg: &ExperimentConfig,
    reference: f64,
    levels: Vec<LevelResult>,
    window: [f64; 2],
    aborted: Option<String>,
) -> ConvergenceReport {
    let cc = &cfg.converge;
    let refine_up = matches!(cc.axis, Axis::K | Axis::Grid);
    let mut ordered = levels.clone();
    // coarse to fine
    ordered.sort_by(|a, b| {
        if refine_up {
            a.level.total_cmp(&b.level)
        } else {
            b.level.total_cmp(&a.level)
        }
    });
    let exact = !levels.is_empty() && levels.iter().all(|l| l.distance == 0.0);
    let monotone = ordered.windows(2).all(|w| w[1].distance < w[0].distance);
    let rate = if exact || aborted.is_some() || levels.iter().any(|l| !(l.distance > 0.0)) {
        None
    } else {
        let x: Vec<f64> = levels.iter().map(|l| l.level.ln()).collect();
        let y: Vec<f64> = levels.iter().map(|l| l.distance.ln()).collect();
        linear_fit(&x, &y).map(|(s, _)| if refine_up { -s } else { s })
    };
    let pass = aborted.is_none() && (exact || rate.is_some_and(|r| r >= window[0] && r <= window[1]));
    let reference_label = if cc.exact_linear {
        "exact linear flow".to_string()
    } else {
        format!("{reference}")
    };
    let note = if exact {
        "exact agreement with the reference at every level".to_string()
    } else if rate.is_none() {
        "rate undefined".to_string()
    } else if cc.axis == Axis::K {
        "monotone decay and a first-order fit are checked; no quantitative constant is asserted".to_string()
    } else {
        String::new()
    };
    ConvergenceReport {
        run_id: cfg.run_id.clone(),
        axis: cc.axis,
        reference: reference_label,
        levels,
        rate,
        window,
        exact_agreement: exact,
        monotone,
        aborted,
        pass,
        note,
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct UniquenessRow {
    pub time: f64,
    pub d_twin: f64,
    pub d_delta: f64,
    pub d_half: f64,
    pub gronwall_factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub run_id: String,
    pub delta: f64,
    pub twins_identical: bool,
    /// smallest `C` with `D(t) <= D(0) exp(C int_0^t F)` on the samples
    pub c_hat: f64,
    pub d_delta_final: f64,
    pub d_half_final: f64,
    pub ratio: f64,
    pub ratio_in_window: bool,
    /// largest `D(t_k) / D(t_{k-1})` for the perturbed pair
    pub max_step_jump: f64,
    pub continuous: bool,
    pub pass: bool,
    pub rows: Vec<UniquenessRow>,
}

fn perturbed(state: &State, delta: f64, mode: [i64; 2]) -> Result<State, HarnessError> {
    let grid = state.grid();
    let l = grid.box_length();
    let (k1, k2) = (mode[0] as f64, mode[1] as f64);
    let bump = ScalarField::from_fn(grid, |x, y| (2.0 * std::f64::consts::PI * (k1 * x + k2 * y) / l).cos());
    Ok(State::new(state.n.axpy(delta, &bump), state.c.clone(), state.u.clone(), state.time)?.cleaned())
}

pub fn run_uniqueness(cfg: &ExperimentConfig) -> Result<UniquenessReport, HarnessError> {
    let p = prepare(cfg)?;
    if p.params.sensitivity.constant_chi().is_none() {
        return Err(HarnessError::Precondition(
            "uniqueness requires a constant chemotactic sensitivity chi".into(),
        ));
    }
    let delta = cfg.uniqueness.delta;
    let steps = cfg.integrator.n_steps()?;
    let path = path_for(&p.params, steps, cfg.integrator.dt, cfg.integrator.seed)?;
    let starts = [
        p.state.clone(),
        p.state.clone(),
        perturbed(&p.state, delta, cfg.uniqueness.mode)?,
        perturbed(&p.state, 0.5 * delta, cfg.uniqueness.mode)?,
    ];
    let trajs: Vec<Result<Trajectory, HarnessError>> =
        starts.par_iter().map(|s| run_from(cfg, &p.params, s, &path, Some(1), false)).collect();
    let trajs: Vec<Trajectory> = trajs.into_iter().collect::<Result<_, _>>()?;
    if let Some(t) = trajs.iter().find(|t| !t.completed()) {
        return Err(HarnessError::Precondition(format!("uniqueness run did not complete: {:?}", t.status)));
    }
    let (base, twin, pd, ph) = (&trajs[0].checkpoints, &trajs[1].checkpoints, &trajs[2].checkpoints, &trajs[3].checkpoints);
    let mut rows = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        rows.push(UniquenessRow {
            time: base[k].time,
            d_twin: uniqueness_functional(&base[k], &twin[k])?,
            d_delta: uniqueness_functional(&pd[k], &base[k])?,
            d_half: uniqueness_functional(&ph[k], &base[k])?,
            gronwall_factor: gronwall_factor(&pd[k], &base[k])?,
        });
    }
    let t: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let fh: Vec<f64> = rows.iter().map(|r| r.gronwall_factor).collect();
    let int_f = cumulative_trapezoid(&t, &fh);
    let d0 = rows[0].d_delta;
    let c_hat = rows
        .iter()
        .zip(&int_f)
        .skip(1)
        .filter(|(_, i)| **i > 0.0)
        .map(|(r, i)| if d0 > 0.0 { (r.d_delta / d0).ln() / i } else { 0.0 })
        .fold(0.0, f64::max);
    let max_step_jump = rows
        .windows(2)
        .filter(|w| w[0].d_delta > 0.0)
        .map(|w| w[1].d_delta / w[0].d_delta)
        .fold(0.0, f64::max);
    let last = rows.last().unwrap();
    let ratio = last.d_delta / last.d_half;
    let twins_identical = rows.iter().all(|r| r.d_twin == 0.0);
    let ratio_in_window = (3.0..=5.0).contains(&ratio);
    let continuous = max_step_jump <= 10.0;
    Ok(UniquenessReport {
        run_id: cfg.run_id.clone(),
        delta,
        twins_identical,
        c_hat,
        d_delta_final: last.d_delta,
        d_half_final: last.d_half,
        ratio,
        ratio_in_window,
        max_step_jump,
        continuous,
        pass: twins_identical && (delta == 0.0 || ratio_in_window) && continuous,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct B2Report {
    pub n0_l1: f64,
    pub c0_inf: f64,
    pub lambda_gn: f64,
    pub d: [f64; 3],
    pub m_kappa: f64,
    pub m_chi: f64,
    pub lhs: f64,
    pub pass: bool,
}

pub fn check_b2_config(cfg: &ExperimentConfig) -> Result<B2Report, HarnessError> {
    let grid = cfg.build_grid()?;
    let params = cfg.build_params(&grid)?;
    let n0_l1 = match cfg.b2.n0_l1 {
        Some(v) => v,
        None => norm(&cfg.build_state(&grid)?.n, NormKind::L1)?,
    };
    let c0_inf = cfg.b2.c0_inf.unwrap_or(cfg.initial.c0_max);
    let lambda_gn = cfg.b2.lambda_gn.unwrap_or(params.diagnostics.lambda_gn);
    let r = check_b2(&params, n0_l1, c0_inf, lambda_gn)?;
    let (m_kappa, m_chi) = params.sensitivity.maxima(c0_inf);
    Ok(B2Report {
        n0_l1,
        c0_inf,
        lambda_gn,
        d: [params.d1, params.d2, params.d3],
        m_kappa,
        m_chi,
        lhs: r.lhs,
        pass: r.pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub assumptions_a: ValidationReport,
    pub assumptions_b: ValidationReport,
    pub passed: bool,
}

pub fn validate(cfg: &ExperimentConfig) -> Result<ValidateReport, HarnessError> {
    let grid = cfg.build_grid()?;
    let params = cfg.build_params(&grid)?;
    let a = validate_assumptions(&params, &cfg.initial, AssumptionSet::A);
    let b = validate_assumptions(&params, &cfg.initial, AssumptionSet::B);
    let passed = a.all_passed() && b.all_passed();
    Ok(ValidateReport {
        assumptions_a: a,
        assumptions_b: b,
        passed,
    })
}

/// Velocity L2 distance of two samples; used by the strong-order studies.
pub fn velocity_distance(a: &State, b: &State) -> Result<f64, HarnessError> {
    Ok(vector_norm(&a.u.sub(&b.u), NormKind::L2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.grid.n = 16;
        c.grid.box_length = 20.0;
        c.initial.blobs[0].center = [10.0, 10.0];
        c.initial.blobs[0].width = 3.0;
        c.initial.n_floor = 1e-3;
        c.integrator.dt = 0.05;
        c.integrator.t_final = 0.2;
        c
    }

    #[test]
    fn ensemble_noise_off_members_agree() {
        let mut c = small();
        c.ensemble.n_members = 3;
        let r = run_ensemble(&c).unwrap();
        assert_eq!(r.summary.completers, 3);
        assert_eq!(r.member_records[0], r.member_records[2]);
        assert_eq!(r.summary.max_f1_variance, 0.0);
        c.ensemble.n_members = 1;
        let one = run_ensemble(&c).unwrap();
        let row = one.stats.last().unwrap();
        let rec = one.member_records[0].last().unwrap();
        assert_eq!(row.f1_mean, rec.entropy_f1);
        assert_eq!(row.f1_q90, rec.entropy_f1);
    }

    #[test]
    fn ensemble_seeds_distinct() {
        let mut c = small();
        c.noise = NoiseSpec::LinearMultiplicative { strength: 0.1 };
        c.initial.u0_energy = 0.01;
        c.ensemble.n_members = 4;
        let r = run_ensemble(&c).unwrap();
        let mut inc: Vec<f64> = r.summary.members.iter().map(|m| m.first_increment.unwrap()).collect();
        inc.sort_by(f64::total_cmp);
        assert!(inc.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn degenerate_axis_is_exact() {
        let mut c = small();
        c.converge.axis = Axis::Epsilon;
        c.converge.levels = vec![0.1, 0.1, 0.1];
        c.converge.reference = Some(0.1);
        c.converge.samples = 2;
        let r = run_convergence(&c).unwrap();
        assert!(r.exact_agreement && r.pass && r.rate.is_none());
        c.converge.levels = vec![0.1, 0.2];
        assert!(run_convergence(&c).is_err());
    }

    #[test]
    fn uniqueness_requires_constant_chi() {
        let mut c = small();
        c.model.sensitivity = super::super::config::SensitivityConfig::Tabulated {
            c: vec![0.0, 0.5, 1.0],
            chi: vec![1.0, 1.0, 1.0],
            kappa: vec![0.0, 0.5, 1.0],
        };
        let e = run_uniqueness(&c).unwrap_err();
        assert!(e.to_string().contains("constant chemotactic sensitivity"));
    }

    #[test]
    fn uniqueness_zero_delta() {
        let mut c = small();
        c.uniqueness.delta = 0.0;
        let r = run_uniqueness(&c).unwrap();
        assert!(r.twins_identical);
        assert!(r.rows.iter().all(|r| r.d_delta == 0.0));
    }

    #[test]
    fn b2_from_config() {
        let mut c = small();
        c.model.d1 = 10.0;
        c.model.d2 = 10.0;
        c.b2.n0_l1 = Some(1.0);
        let r = check_b2_config(&c).unwrap();
        assert!((r.lhs - 0.100025).abs() < 1e-12 && r.pass);
    }
}
