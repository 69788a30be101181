//! Run configuration: TOML file, `KAMLAB_` environment overrides, flags.

use std::path::Path;

use kamlab_core::cost::OptimizerParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Prefix of environment overrides. `KAMLAB_OPTIMIZER__RESTARTS=8` sets
/// `optimizer.restarts`; `__` separates table levels.
pub const ENV_PREFIX: &str = "KAMLAB_";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub lagrangian: LagrangianConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub critical: CriticalConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub example: ExampleConfig,
    #[serde(default)]
    pub brackets: BracketsConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

/// A catalog name, or an inline system when `controls` is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub catalog: String,
    /// `"torus"` or `"box"` for inline systems.
    pub space: String,
    pub periods: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Drift components in `x1..xm`; empty means zero drift.
    pub drift: Vec<String>,
    pub controls: Vec<Vec<String>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            catalog: "integrator-1d".into(),
            space: "torus".into(),
            periods: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            drift: Vec::new(),
            controls: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LagrangianConfig {
    /// `pure-quadratic`, `quadratic-plus`, `state-weighted` or `general`.
    pub kind: String,
    /// `b(x)` for the quadratic kinds.
    pub offset: String,
    /// Rows of `A(x)` for `state-weighted`.
    pub weight: Vec<Vec<String>>,
    /// `L(x, u)` in `x1..xm, u1..un` for `general`.
    pub expr: String,
    pub search_bound: f64,
    pub search_cap: f64,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            kind: "pure-quadratic".into(),
            offset: "0".into(),
            weight: Vec::new(),
            expr: String::new(),
            search_bound: 1e6,
            search_cap: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points per axis; a single entry is repeated over all axes.
    pub counts: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { counts: vec![16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub segments: usize,
    pub restarts: usize,
    pub substeps: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub control_bound: f64,
    pub init_scale: f64,
    pub initial_penalty: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = OptimizerParams::default();
        OptimizerConfig {
            segments: d.segments,
            restarts: d.restarts,
            substeps: d.substeps,
            max_outer: d.max_outer,
            max_inner: d.max_inner,
            control_bound: d.control_bound,
            init_scale: d.init_scale,
            initial_penalty: d.initial_penalty,
        }
    }
}

impl OptimizerConfig {
    pub fn params(&self, seed: u64) -> OptimizerParams {
        OptimizerParams {
            segments: self.segments,
            restarts: self.restarts,
            seed,
            substeps: self.substeps,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            control_bound: self.control_bound,
            init_scale: self.init_scale,
            initial_penalty: self.initial_penalty,
        }
    }
}

/// A matrix given directly instead of built from a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Vec<f64>>,
    /// CSV file in the `cost_matrix.csv` format, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default = "one")]
    pub t: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub t: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { t: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalConfig {
    pub doublings: usize,
    /// Allowed `|h_karp - h_alpha|`.
    pub agreement_tol: f64,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig {
            doublings: 8,
            agreement_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    /// Starting horizon of the Lax-Oleinik iteration.
    pub tail: f64,
    pub residual_tol: f64,
    /// Also report `H(x, df) + h` on the grid (needs a system).
    pub viscosity: bool,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            tail: 1.0,
            residual_tol: 1e-9,
            viscosity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Source weights; empty means uniform.
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub gap_tol: f64,
    /// Also solve for the optimal stationary plan.
    pub stationary: bool,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mu: Vec::new(),
            nu: Vec::new(),
            gap_tol: 1e-8,
            stationary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExampleConfig {
    pub k: u32,
    pub p2: f64,
    pub levels: Vec<f64>,
    pub resolution: usize,
    pub x1_range: [f64; 2],
    pub p1_range: [f64; 2],
    /// Endpoint offsets for the cost demo; empty skips it.
    pub deltas: Vec<f64>,
    /// Exponents the demo runs on.
    pub demo_k: Vec<u32>,
    pub segments: usize,
    pub restarts: usize,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            k: 3,
            p2: -2.0,
            levels: vec![-0.4, -0.2, 0.0, 0.2, 0.5, 1.0],
            resolution: 128,
            x1_range: [-1.5, 1.5],
            p1_range: [-1.5, 1.5],
            deltas: vec![1e-1, 1e-2, 1e-3],
            demo_k: vec![2, 3],
            segments: 32,
            restarts: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BracketsConfig {
    /// Words as 1-based channel lists; empty means every word up to `max_len`.
    pub words: Vec<Vec<usize>>,
    pub max_len: usize,
    /// Base point; empty means the origin.
    pub point: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Coordinate probed by the test function; unset picks the largest
    /// component of the bracket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    pub slope_tol: f64,
    pub coefficient_tol: f64,
}

impl Default for BracketsConfig {
    fn default() -> Self {
        BracketsConfig {
            words: Vec::new(),
            max_len: 3,
            point: Vec::new(),
            epsilons: kamlab_core::geometry::default_epsilons(),
            axis: None,
            slope_tol: 0.05,
            coefficient_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub k_max: usize,
    /// Sample points per axis.
    pub samples: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { k_max: 4, samples: 5 }
    }
}

/// Parses `text`, applies environment overrides and validates.
pub fn parse_config(text: &str, env: &[(String, String)]) -> Result<RunConfig, CliError> {
    // parse once untouched so errors carry line numbers
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let overrides: Vec<&(String, String)> = env.iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    if !overrides.is_empty() {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..]
                .split("__")
                .map(|s| s.to_ascii_lowercase())
                .collect();
            set_path(&mut value, &path, parse_env_value(raw)).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
        }
        cfg = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("environment override: {}", e.message())))?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path, env: &[(String, String)]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, env).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_env_value(raw: &str) -> toml::Value {
    // a bare TOML literal if it parses, a string otherwise
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (last, head) = path.split_last().ok_or("empty key")?;
    let mut cur = table;
    for part in head {
        let entry = cur
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("'{part}' is not a table"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{key} must be positive and finite, got {v}")))
    }
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    positive("critical.agreement_tol", cfg.critical.agreement_tol)?;
    positive("potential.residual_tol", cfg.potential.residual_tol)?;
    positive("potential.tail", cfg.potential.tail)?;
    positive("transport.gap_tol", cfg.transport.gap_tol)?;
    positive("brackets.slope_tol", cfg.brackets.slope_tol)?;
    positive("brackets.coefficient_tol", cfg.brackets.coefficient_tol)?;
    positive("cost.t", cfg.cost.t)?;
    positive("optimizer.control_bound", cfg.optimizer.control_bound)?;
    positive("optimizer.initial_penalty", cfg.optimizer.initial_penalty)?;
    positive("lagrangian.search_bound", cfg.lagrangian.search_bound)?;
    positive("lagrangian.search_cap", cfg.lagrangian.search_cap)?;
    if let Some(m) = &cfg.matrix {
        positive("matrix.t", m.t)?;
        if m.rows.is_empty() == m.csv.is_none() {
            return Err(CliError::Validation("matrix needs exactly one of rows or csv".into()));
        }
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Validation("threads must be at least 1".into()));
    }
    if cfg.grid.counts.is_empty() || cfg.grid.counts.contains(&0) {
        return Err(CliError::Validation("grid.counts must be non-empty and positive".into()));
    }
    if cfg.brackets.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Validation("brackets.epsilons must be positive".into()));
    }
    if cfg.example.deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(CliError::Validation("example.deltas must be non-negative".into()));
    }
    Ok(())
}

/// Canonical TOML text of a resolved config; hashed into the manifest.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg.system.catalog, "integrator-1d");
        assert_eq!(cfg.critical.doublings, 8);
        assert_eq!(cfg.seed, None);
    }

    #[test]
    fn round_trip() {
        let text = "seed = 5\n[matrix]\nrows = [[0.0, inf], [1.0, 2.5]]\n[brackets]\naxis = 1\nwords = [[1, 2]]\n";
        let cfg = parse_config(text, &[]).unwrap();
        let back = parse_config(&to_toml(&cfg), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_has_a_line_number() {
        let err = parse_config("seed = 1\n\n[grid]\ncount = [3]\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("count"), "{err}");
    }

    #[test]
    fn negative_tolerance_names_the_key() {
        let err = parse_config("[transport]\ngap_tol = -1e-8\n", &[]).unwrap_err().to_string();
        assert!(err.contains("transport.gap_tol"), "{err}");
    }

    #[test]
    fn environment_overrides_nested_keys() {
        let env = vec![
            ("KAMLAB_OPTIMIZER__RESTARTS".to_string(), "9".to_string()),
            ("KAMLAB_SYSTEM__CATALOG".to_string(), "paper-example-k3".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let cfg = parse_config("[optimizer]\nrestarts = 2\n", &env).unwrap();
        assert_eq!(cfg.optimizer.restarts, 9);
        assert_eq!(cfg.system.catalog, "paper-example-k3");
    }

    #[test]
    fn bad_override_is_reported() {
        let env = vec![("KAMLAB_GRID__BOGUS".to_string(), "1".to_string())];
        assert!(parse_config("", &env).is_err());
    }
}
