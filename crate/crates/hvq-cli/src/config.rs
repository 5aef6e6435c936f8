//! Run-configuration file: JSON schema, parsing and validation.

use hvq_core::dynamics::ClassicalSystem;
use hvq_core::exprlang::{parse_expression, Expression};
use hvq_core::fields::{AxisSpec, Boundary, Grid};
use hvq_core::hidden::LambdaDistribution;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    pub system: SystemConfig,
    pub grid: GridConfig,
    pub distribution: DistributionConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub measurement: Option<MeasurementConfig>,
    #[serde(default)]
    pub double_slit: Option<DoubleSlitBlock>,
    #[serde(default)]
    pub position_measurement: Option<PositionMeasurementConfig>,
}

fn default_hbar() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    /// N×N expression strings for g^ij(q).
    pub metric_inverse: Vec<Vec<String>>,
    /// N expression strings for A_i(q).
    pub vector_potential: Vec<String>,
    pub scalar_potential: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default = "default_boundary")]
    pub boundary: String,
}

fn default_boundary() -> String {
    "box".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub kind: String,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub rows: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Amplitude R₀(q) expression.
    pub amplitude: String,
    /// Action S₀(q) expression.
    pub action: String,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            amplitude: "exp(-q1^2/2)".into(),
            action: "0".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_lambda_nodes")]
    pub n_lambda_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_snapshot_every() -> usize {
    usize::MAX
}
fn default_particles() -> usize {
    1000
}
fn default_lambda_nodes() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into(), "snapshot".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub coupling: f64,
    pub duration: f64,
    /// `(eigenvalue, [re, im])` rows; |c|² must sum to 1.
    pub eigen_components: Vec<EigenComponent>,
    /// Optional broadening sweep: rerun the inferred-outcome moments at these
    /// log-normal widths and emit `broadening_sweep.json`.
    #[serde(default)]
    pub sigma_sweep: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenComponent {
    pub eigenvalue: f64,
    pub coefficient: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSlitBlock {
    pub separation: f64,
    pub sigma: f64,
    #[serde(default)]
    pub wavenumber: f64,
    #[serde(default = "default_amp")]
    pub amp1: [f64; 2],
    #[serde(default = "default_amp")]
    pub amp2: [f64; 2],
}

fn default_amp() -> [f64; 2] {
    [std::f64::consts::FRAC_1_SQRT_2, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionMeasurementConfig {
    pub coupling: f64,
    pub duration: f64,
}

pub const EXPERIMENT_KINDS: &[&str] = &[
    "propagate",
    "trajectories",
    "ensemble",
    "double_slit",
    "measure_angular",
    "measure_position",
    "classical",
    "verify",
];

/// One validation problem, named by the config field that caused it.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RunConfig {
    pub fn coordinate_names(&self) -> Vec<String> {
        (1..=self.system.dim).map(|i| format!("q{i}")).collect()
    }

    /// Parse-and-check only; returns every problem found.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut diag = |field: &str, message: String| {
            diags.push(Diagnostic {
                field: field.to_string(),
                message,
            });
        };

        if !EXPERIMENT_KINDS.contains(&self.experiment.as_str()) {
            diag(
                "experiment",
                format!(
                    "unknown experiment `{}` (expected one of {})",
                    self.experiment,
                    EXPERIMENT_KINDS.join(", ")
                ),
            );
        }
        if self.hbar <= 0.0 {
            diag("hbar", format!("must be positive, got {}", self.hbar));
        }

        // system block
        let dim = self.system.dim;
        let coords = self.coordinate_names();
        if dim == 0 {
            diag("system.dim", "must be at least 1".into());
        }
        if self.system.metric_inverse.len() != dim {
            diag(
                "system.metric_inverse",
                format!(
                    "expected {dim} rows, got {}",
                    self.system.metric_inverse.len()
                ),
            );
        }
        let mut parsed_metric: Vec<Vec<Option<Expression>>> = Vec::new();
        for (i, row) in self.system.metric_inverse.iter().enumerate() {
            if row.len() != dim {
                diag(
                    &format!("system.metric_inverse[{i}]"),
                    format!("expected {dim} entries, got {}", row.len()),
                );
            }
            let mut parsed_row = Vec::new();
            for (j, text) in row.iter().enumerate() {
                match parse_expression(text, &coords) {
                    Ok(e) => parsed_row.push(Some(e)),
                    Err(e) => {
                        diag(&format!("system.metric_inverse[{i}][{j}]"), e.to_string());
                        parsed_row.push(None);
                    }
                }
            }
            parsed_metric.push(parsed_row);
        }
        for i in 0..parsed_metric.len() {
            for j in (i + 1)..parsed_metric.len().min(parsed_metric[i].len()) {
                if let (Some(Some(eij)), Some(Some(eji))) = (
                    parsed_metric.get(i).and_then(|r| r.get(j)),
                    parsed_metric.get(j).and_then(|r| r.get(i)),
                ) {
                    if eij.ast() != eji.ast() {
                        diag(
                            "system.metric_inverse",
                            format!("entry ({i},{j}) is not identical to ({j},{i})"),
                        );
                    }
                }
            }
        }
        if self.system.vector_potential.len() != dim {
            diag(
                "system.vector_potential",
                format!(
                    "expected {dim} entries, got {}",
                    self.system.vector_potential.len()
                ),
            );
        }
        for (i, text) in self.system.vector_potential.iter().enumerate() {
            if let Err(e) = parse_expression(text, &coords) {
                diag(&format!("system.vector_potential[{i}]"), e.to_string());
            }
        }
        if let Err(e) = parse_expression(&self.system.scalar_potential, &coords) {
            diag("system.scalar_potential", e.to_string());
        }
        if let Err(e) = parse_expression(&self.initial.amplitude, &coords) {
            diag("initial.amplitude", e.to_string());
        }
        if let Err(e) = parse_expression(&self.initial.action, &coords) {
            diag("initial.action", e.to_string());
        }

        // grid block
        if self.grid.axes.len() != dim {
            diag(
                "grid.axes",
                format!(
                    "expected {dim} axes to match system.dim, got {}",
                    self.grid.axes.len()
                ),
            );
        }
        for (a, ax) in self.grid.axes.iter().enumerate() {
            if ax.points < 3 {
                diag(
                    &format!("grid.axes[{a}].points"),
                    format!("need at least 3 points, got {}", ax.points),
                );
            }
            if ax.max <= ax.min {
                diag(&format!("grid.axes[{a}]"), "max must exceed min".into());
            }
            if ax.boundary != "box" && ax.boundary != "periodic" {
                diag(
                    &format!("grid.axes[{a}].boundary"),
                    format!("unknown boundary `{}` (box | periodic)", ax.boundary),
                );
            }
        }

        // distribution block
        match self.distribution.kind.as_str() {
            "binary" => {}
            "lognormal" => match self.distribution.sigma {
                Some(s) if s > 0.0 => {}
                Some(s) => diag("distribution.sigma", format!("must be positive, got {s}")),
                None => diag("distribution.sigma", "required for kind `lognormal`".into()),
            },
            "table" => match &self.distribution.rows {
                Some(rows) if !rows.is_empty() => {
                    for (r, row) in rows.iter().enumerate() {
                        if row[0] <= 0.0 {
                            diag(
                                &format!("distribution.rows[{r}]"),
                                format!("|lambda| must be positive, got {}", row[0]),
                            );
                        }
                        if row[1] <= 0.0 {
                            diag(
                                &format!("distribution.rows[{r}]"),
                                format!("weight must be positive, got {}", row[1]),
                            );
                        }
                    }
                }
                _ => diag("distribution.rows", "required for kind `table`".into()),
            },
            other => diag(
                "distribution.kind",
                format!("unknown distribution kind `{other}` (binary | lognormal | table)"),
            ),
        }

        // numerics block
        if self.numerics.dt <= 0.0 {
            diag(
                "numerics.dt",
                format!("must be positive, got {}", self.numerics.dt),
            );
        }
        if self.numerics.t_final < self.numerics.dt {
            diag(
                "numerics.t_final",
                format!(
                    "must be at least dt ({}), got {}",
                    self.numerics.dt, self.numerics.t_final
                ),
            );
        }
        if self.numerics.n_lambda_nodes == 0 {
            diag("numerics.n_lambda_nodes", "must be at least 1".into());
        }

        if self.output.directory.is_empty() {
            diag("output.directory", "must not be empty".into());
        }
        for f in &self.output.formats {
            if !["csv", "json", "snapshot"].contains(&f.as_str()) {
                diag("output.formats", format!("unknown format `{f}`"));
            }
        }

        // per-experiment requirements
        match self.experiment.as_str() {
            "measure_angular" => {
                if dim != 1 {
                    diag(
                        "system.dim",
                        "measure_angular needs a 1D pointer grid".into(),
                    );
                }
                match &self.measurement {
                    None => diag("measurement", "required for measure_angular".into()),
                    Some(m) => {
                        if m.eigen_components.is_empty() {
                            diag("measurement.eigen_components", "must not be empty".into());
                        }
                        let sum: f64 = m
                            .eigen_components
                            .iter()
                            .map(|c| c.coefficient[0].powi(2) + c.coefficient[1].powi(2))
                            .sum();
                        if (sum - 1.0).abs() > 1e-12 {
                            diag(
                                "measurement.eigen_components",
                                format!("Σ|c|² must be 1, got {sum}"),
                            );
                        }
                    }
                }
            }
            "measure_position" => {
                if dim != 2 {
                    diag("system.dim", "measure_position needs a 2D grid".into());
                }
                if self.position_measurement.is_none() {
                    diag(
                        "position_measurement",
                        "required for measure_position".into(),
                    );
                }
            }
            "double_slit" => {
                if dim != 1 {
                    diag("system.dim", "double_slit needs a 1D grid".into());
                }
                if self.double_slit.is_none() {
                    diag(
                        "double_slit",
                        "required for the double_slit experiment".into(),
                    );
                }
            }
            _ => {}
        }

        diags
    }

    pub fn build_grid(&self) -> Result<Grid<f64>, String> {
        let axes = self
            .grid
            .axes
            .iter()
            .map(|ax| AxisSpec {
                min: ax.min,
                max: ax.max,
                points: ax.points,
                boundary: if ax.boundary == "periodic" {
                    Boundary::Periodic
                } else {
                    Boundary::Box
                },
            })
            .collect();
        Grid::new(axes).map_err(|e| e.to_string())
    }

    pub fn build_system(&self) -> Result<ClassicalSystem, String> {
        let coords = self.coordinate_names();
        let dim = self.system.dim;
        let mut metric = Vec::with_capacity(dim * dim);
        for row in &self.system.metric_inverse {
            for text in row {
                metric.push(parse_expression(text, &coords).map_err(|e| e.to_string())?);
            }
        }
        let a = self
            .system
            .vector_potential
            .iter()
            .map(|t| parse_expression(t, &coords).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let v =
            parse_expression(&self.system.scalar_potential, &coords).map_err(|e| e.to_string())?;
        ClassicalSystem::new(dim, metric, a, v).map_err(|e| e.to_string())
    }

    pub fn build_distribution(&self) -> Result<LambdaDistribution<f64>, String> {
        match self.distribution.kind.as_str() {
            "binary" => LambdaDistribution::binary(self.hbar).map_err(|e| e.to_string()),
            "lognormal" => {
                let sigma = self.distribution.sigma.ok_or("missing sigma")?;
                LambdaDistribution::lognormal(self.hbar, sigma).map_err(|e| e.to_string())
            }
            "table" => {
                let rows = self
                    .distribution
                    .rows
                    .clone()
                    .ok_or("missing rows")?
                    .into_iter()
                    .map(|[m, w]| (m, w))
                    .collect();
                LambdaDistribution::table(self.hbar, rows).map_err(|e| e.to_string())
            }
            other => Err(format!("unknown distribution kind `{other}`")),
        }
    }
}

pub fn load_config(path: &str) -> Result<RunConfig, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read config `{path}`: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("config `{path}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "experiment": "propagate",
            "system": {
                "dim": 1,
                "metric_inverse": [["1"]],
                "vector_potential": ["0"],
                "scalar_potential": "0"
            },
            "grid": { "axes": [ { "min": -10.0, "max": 10.0, "points": 128 } ] },
            "distribution": { "kind": "binary" },
            "numerics": { "dt": 0.01, "t_final": 0.1 },
            "output": { "directory": "out" }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_is_valid() {
        let config: RunConfig = serde_json::from_str(&minimal_json()).unwrap();
        assert!(config.validate().is_empty());
        assert!(config.build_grid().is_ok());
        assert!(config.build_system().is_ok());
        assert!(config.build_distribution().is_ok());
    }

    #[test]
    fn unknown_distribution_kind_is_one_diagnostic() {
        let json = minimal_json().replace("\"binary\"", "\"gamma\"");
        let config: RunConfig = serde_json::from_str(&json).unwrap();
        let diags = config.validate();
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].field, "distribution.kind");
    }

    #[test]
    fn negative_dt_names_the_field() {
        let json = minimal_json().replace("\"dt\": 0.01", "\"dt\": -0.5");
        let config: RunConfig = serde_json::from_str(&json).unwrap();
        let diags = config.validate();
        assert!(diags.iter().any(|d| d.field == "numerics.dt"), "{diags:?}");
    }

    #[test]
    fn asymmetric_metric_cites_the_pair() {
        let json = r#"{
            "experiment": "propagate",
            "system": {
                "dim": 2,
                "metric_inverse": [["1", "q1"], ["q2", "1"]],
                "vector_potential": ["0", "0"],
                "scalar_potential": "0"
            },
            "grid": { "axes": [
                { "min": -5.0, "max": 5.0, "points": 32 },
                { "min": -5.0, "max": 5.0, "points": 32 }
            ]},
            "distribution": { "kind": "binary" },
            "numerics": { "dt": 0.01, "t_final": 0.1 },
            "output": { "directory": "out" }
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        let diags = config.validate();
        assert!(
            diags
                .iter()
                .any(|d| d.field == "system.metric_inverse" && d.message.contains("(0,1)")),
            "{diags:?}"
        );
    }

    #[test]
    fn bad_expression_is_reported_with_field() {
        let json = minimal_json().replace("\"0\"", "\"q1*(\"");
        let config: RunConfig = serde_json::from_str(&json).unwrap();
        let diags = config.validate();
        assert!(!diags.is_empty());
        assert!(diags.iter().all(|d| d.field.starts_with("system.")));
    }

    #[test]
    fn lognormal_requires_sigma() {
        let json =
            minimal_json().replace("{ \"kind\": \"binary\" }", "{ \"kind\": \"lognormal\" }");
        let config: RunConfig = serde_json::from_str(&json).unwrap();
        let diags = config.validate();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "distribution.sigma");
    }
}
