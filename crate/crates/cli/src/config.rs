//! Argument structs shared by clap and config files, plus the merge logic.
//!
//! Every subcommand has one struct whose fields are all optional. A config
//! file (JSON, or TOML by `.toml` extension; a run manifest is accepted too)
//! is deserialized into the same struct, flags given on the command line
//! replace file values, and `resolve` fills the remaining defaults. The
//! resolved struct is what a manifest records, so feeding a manifest back in
//! reproduces the run.

use std::path::Path;

use clap::Args;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

fn is_false(b: &bool) -> bool {
    !*b
}

/// Declares an argument struct that starts with the gate parameters held
/// fixed by every subcommand.
macro_rules! with_gate_params {
    ($(#[$meta:meta])* pub struct $name:ident { $($body:tt)* }) => {
        $(#[$meta])*
        #[derive(Args, Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            /// Survival probability q of an isolated occupied site.
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            pub q_dec: Option<f64>,
            /// Flip probability with an occupied centre and active outer controls.
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            pub p_coag: Option<f64>,
            /// Parameter p of the extra unitary U_+.
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            pub p_plus: Option<f64>,
            $($body)*
        }

        impl $name {
            fn resolve_gate(&mut self) {
                self.q_dec.get_or_insert(0.9);
                self.p_coag.get_or_insert(0.1);
                self.p_plus.get_or_insert(0.1);
            }

            /// `(q_dec, p_coag, p_plus)` after resolution.
            pub fn gate(&self) -> (f64, f64, f64) {
                (self.q_dec.unwrap_or(0.9), self.p_coag.unwrap_or(0.1), self.p_plus.unwrap_or(0.1))
            }
        }
    };
}

with_gate_params! {
pub struct SweepArgs {
    /// λ grid as `start:end:count`, a single value, or a comma list.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    /// Branching-probability grid, same syntax as `--lambda`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_branch: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Initial mean-field state: `high` (n = 1) or `low` (n = 1e-3).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Also write a greyscale PGM heatmap.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub pgm: bool,
}
}

impl SweepArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        self.lambda.get_or_insert_with(|| "0:1:201".into());
        self.p_branch.get_or_insert_with(|| "0:1:201".into());
        self.iters.get_or_insert(1000);
        self.init.get_or_insert_with(|| "high".into());
        self
    }
}

with_gate_params! {
pub struct ExactArgs {
    /// Number of sites; defaults to the pattern length.
    #[arg(long = "L", visible_alias = "sites")]
    #[serde(rename = "sites", skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    /// Initial occupation pattern, e.g. `◦••◦` or `oxxo`; default all occupied.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_branch: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// `dense` or `trajectory`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `ltr`, `rtl`, or a comma-separated 0-based permutation of the sites.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
    /// `fixed` (virtual empty sites outside the row) or `periodic`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
}
}

impl ExactArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        if self.pattern.is_none() {
            let sites = *self.sites.get_or_insert(4);
            self.pattern = Some("•".repeat(sites));
        }
        self.lambda.get_or_insert(0.5);
        self.p_branch.get_or_insert(0.5);
        self.steps.get_or_insert(20);
        self.mode.get_or_insert_with(|| "dense".into());
        self.samples.get_or_insert(1000);
        self.seed.get_or_insert(0);
        self.order.get_or_insert_with(|| "ltr".into());
        self.boundary.get_or_insert_with(|| "fixed".into());
        self
    }
}

with_gate_params! {
pub struct ClassicalArgs {
    #[arg(long = "L", visible_alias = "sites")]
    #[serde(rename = "sites", skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    /// Initial row; default all occupied.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_branch: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<String>,
    /// Compare the transition matrix with the exact synchronous channel.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub verify_exact: bool,
}
}

impl ClassicalArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        if self.pattern.is_none() {
            let sites = *self.sites.get_or_insert(32);
            self.pattern = Some("•".repeat(sites));
        }
        self.p_branch.get_or_insert(0.5);
        self.steps.get_or_insert(100);
        self.trials.get_or_insert(1000);
        self.seed.get_or_insert(0);
        self.boundary.get_or_insert_with(|| "fixed".into());
        self
    }
}

with_gate_params! {
pub struct MapQcpArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_branch: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Decay rate. Giving any of the four rates discretizes those rates with
    /// `--dt` instead of mapping gate parameters; unspecified rates are 0.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_b: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}
}

impl MapQcpArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        self.lambda.get_or_insert(0.0);
        self.p_branch.get_or_insert(0.5);
        self.dt.get_or_insert(1.0);
        self
    }
}

with_gate_params! {
pub struct CriticalArgs {
    /// λ values as `start:end:count`, a single value, or a comma list; λ* is
    /// searched between the first and last entries.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    /// Density level defining the critical line.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Branching-probability resolution of the transition classifier.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    /// Jump and hysteresis threshold of the classifier.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}
}

impl CriticalArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        self.lambda.get_or_insert_with(|| "0.5:1:11".into());
        self.level.get_or_insert(0.1);
        self.iters.get_or_insert(1000);
        self.resolution.get_or_insert(1e-3);
        self.threshold.get_or_insert(0.05);
        self
    }
}

with_gate_params! {
pub struct MeanFieldArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_branch: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Initial density; coherences default to zero.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
}
}

impl MeanFieldArgs {
    pub fn resolve(mut self) -> Self {
        self.resolve_gate();
        self.lambda.get_or_insert(0.5);
        self.p_branch.get_or_insert(0.5);
        self.iters.get_or_insert(1000);
        self.n0.get_or_insert(1.0);
        self.x0.get_or_insert(0.0);
        self.y0.get_or_insert(0.0);
        self
    }
}

/// Reads a config file. A run manifest (an object with `command` and
/// `config`) contributes its `config` block.
pub fn load_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let value: Value = if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid TOML in {}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid JSON in {}: {e}", path.display())))?
    };
    match value {
        Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
            Ok(map.remove("config").unwrap_or(Value::Null))
        }
        Value::Object(_) => Ok(value),
        _ => Err(CliError::Usage(format!("config {} must hold a key/value table", path.display()))),
    }
}

/// Overlays the explicitly given flags on top of the file values.
pub fn merge<T: Serialize + DeserializeOwned>(file: Option<Value>, flags: &T) -> Result<T, CliError> {
    let mut base = match file {
        Some(Value::Object(map)) => map,
        _ => serde_json::Map::new(),
    };
    let flags = serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Value::Object(map) = flags {
        base.extend(map);
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = serde_json::json!({"q_dec": 0.5, "iters": 10, "lambda": "0:1:3"});
        let flags = SweepArgs {
            iters: Some(20),
            ..Default::default()
        };
        let merged = merge(Some(file), &flags).unwrap().resolve();
        assert_eq!(merged.iters, Some(20));
        assert_eq!(merged.q_dec, Some(0.5));
        assert_eq!(merged.lambda.as_deref(), Some("0:1:3"));
        assert_eq!(merged.p_branch.as_deref(), Some("0:1:201"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let file = serde_json::json!({"q_dek": 0.5});
        assert!(merge(Some(file), &SweepArgs::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let a = ExactArgs::default().resolve();
        let v = serde_json::to_value(&a).unwrap();
        let b: ExactArgs = merge(Some(v), &ExactArgs::default()).unwrap().resolve();
        assert_eq!(a, b);
    }
}
