use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// One built-in tolerance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, pass: bool) -> Self {
        Self { name: name.into(), value, reference: None, tolerance: None, pass }
    }

    /// Passes when `|value - reference| <= tolerance`.
    pub fn close(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            reference: Some(reference),
            tolerance: Some(tolerance),
            pass: (value - reference).abs() <= tolerance,
        }
    }

    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            reference: None,
            tolerance: Some(bound),
            pass: value <= bound,
        }
    }
}

/// Versioned summary written next to the artifacts of every run.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: String,
    pub model_hash: String,
    pub seed: u64,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub pass: bool,
}

impl Summary {
    pub fn new(experiment: &str, model_hash: String, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            model_hash,
            seed,
            results: serde_json::Map::new(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            pass: true,
        }
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.results.insert(key.to_string(), v);
    }

    pub fn check(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

/// Largest relative spread `|v - v_0| / |v_0|` of a slice.
pub fn relative_spread(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let scale = first.abs().max(f64::MIN_POSITIVE);
    values.iter().map(|v| (v - first).abs() / scale).fold(0.0, f64::max)
}
