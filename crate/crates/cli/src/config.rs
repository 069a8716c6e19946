//! JSON run configuration. Every section is optional; unknown keys are
//! rejected. Command-line flags are applied on top of the loaded file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dyadic_core::model::{Closure, ModelParams, DEFAULT_LAMBDA};
use dyadic_core::simulator::{DiagnosticsConfig, InitialRule, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub run: RunSection,
    pub solver: SolverOptions,
    pub diagnostics: DiagnosticsSection,
    pub surrogate: SurrogateSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lambda: f64,
    pub n_shells: usize,
    /// Sparse map from shell index to forcing value.
    pub forcing: BTreeMap<usize, f64>,
    /// Unset means Galerkin, except for fixed-point initial data where the
    /// tail closure keeps the fixed point stationary.
    pub closure: Option<Closure>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            lambda: DEFAULT_LAMBDA,
            n_shells: 20,
            forcing: BTreeMap::from([(0, 1.0)]),
            closure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_end: f64,
    pub initial: InitialRule,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 1.0,
            initial: InitialRule::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub sobolev_exponents: Vec<f64>,
    pub flux_shells: Vec<usize>,
    pub box_shells: Vec<usize>,
    /// Record the distance to the fixed point of the run's forcing.
    pub fixed_point_reference: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsConfig::default();
        DiagnosticsSection {
            sobolev_exponents: d.sobolev_exponents,
            flux_shells: d.flux_shells,
            box_shells: d.box_shells,
            fixed_point_reference: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub s: f64,
    /// Absolute threshold; when unset, `relative_threshold` times the initial
    /// `H^s` norm is used.
    pub threshold: Option<f64>,
    pub relative_threshold: f64,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection {
            s: 5.0 / 6.0,
            threshold: None,
            relative_threshold: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Trajectory formats; `summary.json` is always written.
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv],
        }
    }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Default)]
pub struct Origin {
    path: Option<PathBuf>,
    text: String,
}

impl Origin {
    /// `file:line: ` for the first occurrence of `"key"` in the loaded file.
    fn locate(&self, key: &str) -> String {
        let Some(path) = &self.path else {
            return String::new();
        };
        let needle = format!("\"{key}\"");
        match self.text.lines().position(|l| l.contains(&needle)) {
            Some(i) => format!("{}:{}: ", path.display(), i + 1),
            None => format!("{}: ", path.display()),
        }
    }
}

pub fn load(path: &Path) -> Result<(RunConfig, Origin), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::usage(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    Ok((
        cfg,
        Origin {
            path: Some(path.to_path_buf()),
            text,
        },
    ))
}

/// Loads `--config`, else `$DYADIC_CONFIG`, else defaults.
pub fn load_or_default(path: Option<&Path>) -> Result<(RunConfig, Origin), CliError> {
    match path {
        Some(p) => load(p),
        None => Ok((RunConfig::default(), Origin::default())),
    }
}

/// Reads a sparse forcing map `{"0": 1.0, "3": 0.5}`.
pub fn load_forcing(path: &Path) -> Result<BTreeMap<usize, f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read forcing {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::usage(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn dense_forcing(map: &BTreeMap<usize, f64>) -> Vec<f64> {
    let len = map.keys().next_back().map_or(0, |j| j + 1);
    let mut f = vec![0.0; len];
    for (&j, &v) in map {
        f[j] = v;
    }
    f
}

/// Fully validated inputs for one simulation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: ModelParams,
    pub initial: InitialRule,
    pub t_end: f64,
    pub options: SolverOptions,
    pub diagnostics: DiagnosticsSection,
    pub surrogate: SurrogateSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn resolve(&self, origin: &Origin) -> Result<Resolved, CliError> {
        let field = |key: &str, name: &str, msg: String| {
            CliError::usage(format!("{}{name}: {msg}", origin.locate(key)))
        };
        let m = &self.model;
        if !(m.lambda.is_finite() && m.lambda > 1.0) {
            return Err(field(
                "lambda",
                "model.lambda",
                format!("must be > 1, got {}", m.lambda),
            ));
        }
        if m.n_shells < 1 {
            return Err(field(
                "n_shells",
                "model.n_shells",
                format!("must be >= 1, got {}", m.n_shells),
            ));
        }
        if let Some((j, _)) = m.forcing.iter().find(|(&j, &f)| j > m.n_shells && f != 0.0) {
            return Err(field(
                "forcing",
                "model.forcing",
                format!("shell {j} is beyond n_shells = {}", m.n_shells),
            ));
        }
        let mut params = ModelParams::new(m.lambda, m.n_shells, dense_forcing(&m.forcing))
            .map_err(|e| field("forcing", "model.forcing", e.to_string()))?;
        let default_closure = match self.run.initial {
            InitialRule::FixedPoint => Closure::Tail,
            _ => Closure::Galerkin,
        };
        params = params.with_closure(m.closure.unwrap_or(default_closure));

        if !(self.run.t_end.is_finite() && self.run.t_end > 0.0) {
            return Err(field(
                "t_end",
                "run.t_end",
                format!("must be > 0, got {}", self.run.t_end),
            ));
        }
        if let InitialRule::FixedPoint = self.run.initial {
            if params.forcing().iter().all(|&f| f == 0.0) {
                return Err(field(
                    "initial",
                    "run.initial",
                    "fixed-point initial data needs nonzero forcing".into(),
                ));
            }
        }
        self.solver
            .validate()
            .map_err(|e| field("solver", "solver", e.to_string()))?;

        let d = &self.diagnostics;
        if let Some(&s) = d.sobolev_exponents.iter().find(|s| !s.is_finite()) {
            return Err(field(
                "sobolev_exponents",
                "diagnostics.sobolev_exponents",
                format!("{s} is not finite"),
            ));
        }
        if let Some(&j) = d.flux_shells.iter().find(|&&j| j < 1 || j > m.n_shells) {
            return Err(field(
                "flux_shells",
                "diagnostics.flux_shells",
                format!("shell {j} outside 1..={}", m.n_shells),
            ));
        }
        if let Some(&j) = d.box_shells.iter().find(|&&j| j > m.n_shells) {
            return Err(field(
                "box_shells",
                "diagnostics.box_shells",
                format!("shell {j} outside 0..={}", m.n_shells),
            ));
        }
        if d.fixed_point_reference && params.forcing().iter().all(|&f| f == 0.0) {
            return Err(field(
                "fixed_point_reference",
                "diagnostics.fixed_point_reference",
                "needs nonzero forcing".into(),
            ));
        }

        let s = &self.surrogate;
        if !s.s.is_finite() {
            return Err(field("s", "surrogate.s", format!("{} is not finite", s.s)));
        }
        if let Some(t) = s.threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(field(
                    "threshold",
                    "surrogate.threshold",
                    format!("must be > 0, got {t}"),
                ));
            }
        }
        if !(s.relative_threshold.is_finite() && s.relative_threshold > 0.0) {
            return Err(field(
                "relative_threshold",
                "surrogate.relative_threshold",
                format!("must be > 0, got {}", s.relative_threshold),
            ));
        }
        if self.output.formats.is_empty() {
            return Err(field(
                "formats",
                "output.formats",
                "at least one format is required".into(),
            ));
        }
        Ok(Resolved {
            params,
            initial: self.run.initial.clone(),
            t_end: self.run.t_end,
            options: self.solver.clone(),
            diagnostics: self.diagnostics.clone(),
            surrogate: self.surrogate.clone(),
            output: self.output.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"model": {"shells": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field `shells`"));
    }

    #[test]
    fn sparse_forcing_parses() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"model": {"forcing": {"0": 1.0, "2": 0.5}}}"#).unwrap();
        assert_eq!(dense_forcing(&cfg.model.forcing), vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn validation_names_field_and_line() {
        let text = "{\n  \"model\": {\n    \"n_shells\": 0\n  }\n}";
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        let origin = Origin {
            path: Some("c.json".into()),
            text: text.into(),
        };
        let msg = cfg.resolve(&origin).unwrap_err().message;
        assert!(msg.starts_with("c.json:3: model.n_shells"), "{msg}");
    }

    #[test]
    fn fixed_point_initial_defaults_to_tail() {
        let mut cfg = RunConfig::default();
        cfg.run.initial = InitialRule::FixedPoint;
        assert_eq!(
            cfg.resolve(&Origin::default()).unwrap().params.closure(),
            Closure::Tail
        );
        cfg.model.closure = Some(Closure::Galerkin);
        assert_eq!(
            cfg.resolve(&Origin::default()).unwrap().params.closure(),
            Closure::Galerkin
        );
    }
}
