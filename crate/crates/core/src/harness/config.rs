//! Experiment configuration as sectioned TOML.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use super::HarnessError;
use crate::dynamics::{Level, State};
use crate::integrator::{Scheme, StepConfig};
use crate::model::{
    build_initial_state, estimate_gn_constant, DiagnosticsParams, InitialData, ModelParams, Potential,
    SensitivityModel,
};
use crate::noise::NoiseSpec;
use crate::spectral::{mollify, Grid, VectorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub box_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 64,
            box_length: 2.0 * std::f64::consts::PI * 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensitivityConfig {
    Prototype { chi0: f64 },
    Tabulated { c: Vec<f64>, chi: Vec<f64>, kappa: Vec<f64> },
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig::Prototype { chi0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub epsilon: f64,
    pub cutoff_r: f64,
    pub trunc_k: f64,
    /// amplitude of `phi = A sin(2 pi x2 / L)`
    pub potential_amplitude: f64,
    /// range of admissible c; defaults to `initial.c0_max`
    pub c_max: Option<f64>,
    pub sensitivity: SensitivityConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            epsilon: 0.1,
            cutoff_r: f64::INFINITY,
            trunc_k: f64::INFINITY,
            potential_amplitude: 0.0,
            c_max: None,
            sensitivity: SensitivityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub checkpoint_stride: usize,
    pub scheme: Scheme,
    pub cfl_override: bool,
    pub blowup_threshold: f64,
    /// noise seed of a single run
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-2,
            t_final: 1.0,
            checkpoint_stride: 10,
            scheme: Scheme::ImexEm,
            cfl_override: false,
            blowup_threshold: 1e12,
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    /// Number of steps to reach `t_final`, which must be a multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize, HarnessError> {
        steps_for(self.t_final, self.dt)
    }

    pub fn step_config(&self) -> Result<StepConfig, HarnessError> {
        let mut cfg = StepConfig::new(self.dt, self.n_steps()?);
        cfg.scheme = self.scheme;
        cfg.checkpoint_stride = self.checkpoint_stride.max(1);
        cfg.cfl_override = self.cfl_override;
        cfg.blowup_threshold = self.blowup_threshold;
        Ok(cfg)
    }
}

pub(crate) fn steps_for(t: f64, dt: f64) -> Result<usize, HarnessError> {
    if !(dt > 0.0) || !(t >= 0.0) || !t.is_finite() {
        return Err(HarnessError::Config(format!("need dt > 0 and finite t_final >= 0, got dt = {dt}, t_final = {t}")));
    }
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(HarnessError::Config(format!("t_final = {t} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub level: Level,
    /// mollify initial data for the regularized levels
    pub mollify_initial: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            level: Level::Mod1,
            mollify_initial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub c_c0: f64,
    pub lambda_gn: f64,
    /// replace `lambda_gn` by the empirical estimate
    pub estimate_lambda: bool,
    pub gn_trials: usize,
    pub gn_seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            c_c0: 1.0,
            lambda_gn: 1.0,
            estimate_lambda: false,
            gn_trials: 200,
            gn_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub seed_base: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { n_members: 8, seed_base: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Dt,
    Epsilon,
    K,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// L2 in time over the common sample times, L2 in space
    L2Time,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    All,
    N,
    C,
    U,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub axis: Axis,
    pub levels: Vec<f64>,
    /// reference level; per-axis default when absent
    pub reference: Option<f64>,
    /// compare against `exp(t L) y0`, exact when the drift is linear
    pub exact_linear: bool,
    /// compare tendencies at the initial state instead of trajectories
    pub tendency_only: bool,
    pub metric: Metric,
    pub quantity: Quantity,
    /// number of common sample times in `(0, t_final]`
    pub samples: usize,
    /// independent noise paths for root-mean-square distances
    pub paths: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            axis: Axis::Dt,
            levels: vec![1e-2, 5e-3, 2.5e-3],
            reference: None,
            exact_linear: false,
            tendency_only: false,
            metric: Metric::L2Time,
            quantity: Quantity::All,
            samples: 10,
            paths: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessConfig {
    pub delta: f64,
    /// Fourier mode of the perturbation `delta cos(2 pi (k . x) / L)`
    pub mode: [i64; 2],
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        UniquenessConfig { delta: 1e-4, mode: [1, 0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct B2Config {
    /// defaults to the L1 norm of the configured n0
    pub n0_l1: Option<f64>,
    pub c0_inf: Option<f64>,
    pub lambda_gn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub initial: InitialData,
    pub noise: NoiseSpec,
    pub integrator: IntegratorConfig,
    pub dynamics: DynamicsConfig,
    pub diagnostics: DiagnosticsConfig,
    pub ensemble: EnsembleConfig,
    pub converge: ConvergeConfig,
    pub uniqueness: UniquenessConfig,
    pub b2: B2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_id: "run".into(),
            grid: GridConfig::default(),
            model: ModelConfig::default(),
            initial: InitialData {
                blobs: vec![crate::model::Blob {
                    center: [25.0, 25.0],
                    width: 4.0,
                    amplitude: 1.0,
                }],
                ..InitialData::default()
            },
            noise: NoiseSpec::Off,
            integrator: IntegratorConfig::default(),
            dynamics: DynamicsConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            ensemble: EnsembleConfig::default(),
            converge: ConvergeConfig::default(),
            uniqueness: UniquenessConfig::default(),
            b2: B2Config::default(),
        }
    }
}

/// Applies a `section.key=value` override to a TOML document.
///
/// The value is parsed as a TOML literal when possible and taken as a bare
/// string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), HarnessError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{path}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut table = doc;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{k}` in `{path}` is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        doc.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| HarnessError::MissingConfig(format!("{}: {e}", p.display())))?,
            None => toml::to_string(&ExperimentConfig::default()).map_err(|e| HarnessError::Config(e.to_string()))?,
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>, HarnessError> {
        Ok(Grid::new(self.grid.n, self.grid.box_length)?)
    }

    /// Model parameters; `n0_l1` only matters when the Gagliardo-Nirenberg
    /// constant is estimated.
    pub fn build_params(&self, grid: &Arc<Grid>) -> Result<ModelParams, HarnessError> {
        let m = &self.model;
        let c_max = m.c_max.unwrap_or(self.initial.c0_max);
        let sensitivity = match &m.sensitivity {
            SensitivityConfig::Prototype { chi0 } => SensitivityModel::prototype(*chi0, c_max)?,
            SensitivityConfig::Tabulated { c, chi, kappa } => {
                SensitivityModel::tabulated(c.clone(), chi.clone(), kappa.clone())?
            }
        };
        let lambda_gn = if self.diagnostics.estimate_lambda {
            estimate_gn_constant(grid, self.diagnostics.gn_trials, self.diagnostics.gn_seed)?
        } else {
            self.diagnostics.lambda_gn
        };
        let params = ModelParams {
            d1: m.d1,
            d2: m.d2,
            d3: m.d3,
            sensitivity,
            potential: Potential::sine(grid, m.potential_amplitude),
            noise: self.noise.clone(),
            epsilon: m.epsilon,
            cutoff_r: m.cutoff_r,
            trunc_k: m.trunc_k,
            diagnostics: DiagnosticsParams {
                c_c0: self.diagnostics.c_c0,
                lambda_gn,
                c0_inf: self.initial.c0_max,
                weight: None,
            },
        };
        params.validate()?;
        Ok(params)
    }

    /// Initial state, mollified at the regularized levels when requested.
    pub fn build_state(&self, grid: &Arc<Grid>) -> Result<State, HarnessError> {
        let (n, c, u) = build_initial_state(&self.initial, grid)?;
        let mollified = self.dynamics.mollify_initial && self.dynamics.level != Level::Full && self.model.epsilon > 0.0;
        let state = if mollified {
            let e = self.model.epsilon;
            let u = VectorField::new(mollify(&u.x, e)?, mollify(&u.y, e)?);
            State::new(mollify(&n, e)?, mollify(&c, e)?, u, 0.0)?
        } else {
            State::new(n, c, u, 0.0)?
        };
        Ok(state.cleaned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{DiagonalMode, Shape};

    #[test]
    fn roundtrip_default_and_noisy() {
        let mut cfg = ExperimentConfig::default();
        let s = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&s, &[]).unwrap(), cfg);
        cfg.noise = NoiseSpec::Diagonal {
            modes: vec![DiagonalMode { sigma: 0.1, shape: Shape::Cos { k: [1, 2] } }],
        };
        cfg.converge.reference = Some(1e-4);
        let s = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&s, &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            "",
            &[
                "model.d1=10".into(),
                "integrator.scheme=explicit_em".into(),
                "noise.kind=linear_multiplicative".into(),
                "noise.strength=0.1".into(),
                "run_id=abc".into(),
                "model.trunc_k=inf".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.d1, 10.0);
        assert_eq!(cfg.integrator.scheme, Scheme::ExplicitEm);
        assert_eq!(cfg.noise, NoiseSpec::LinearMultiplicative { strength: 0.1 });
        assert_eq!(cfg.run_id, "abc");
        assert!(cfg.model.trunc_k.is_infinite());
        assert!(ExperimentConfig::from_toml_str("", &["model.bogus=1".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &["nokey".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &["run_id.x=1".into()]).is_err());
    }

    #[test]
    fn step_counts() {
        assert_eq!(steps_for(1.0, 1e-2).unwrap(), 100);
        assert_eq!(steps_for(0.0, 1e-2).unwrap(), 0);
        assert!(steps_for(1.0, 0.3).is_err());
        assert!(steps_for(1.0, 0.0).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let e = ExperimentConfig::load(Some(Path::new("/no/such/cfg.toml")), &[]).unwrap_err();
        assert!(e.to_string().contains("/no/such/cfg.toml"));
    }
}
