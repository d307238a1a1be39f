//! Named, seeded checks of the identities between base and prolonged
//! structures, reported as JSON lines.

mod checks;
pub mod random;

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::symplectic::Sign;
use crate::weil_algebra::{Fault, WeilAlgebra};

/// The default algebra battery, by name.
pub const BATTERY: [&str; 5] = ["dual", "t3", "t4", "m2_2", "m2_3"];

/// `dual` = R[t]/t^2, `tK` = R[t]/t^K, `m2_K` = R[t1,t2]/m^K.
pub fn algebra_by_name(name: &str) -> Result<Arc<WeilAlgebra>> {
    match name {
        "dual" => WeilAlgebra::truncated(1, 1),
        "t3" => WeilAlgebra::truncated(1, 2),
        "t4" => WeilAlgebra::truncated(1, 3),
        "m2_2" => WeilAlgebra::truncated(2, 1),
        "m2_3" => WeilAlgebra::truncated(2, 2),
        other => Err(Error::Input(format!("unknown algebra preset `{other}`"))),
    }
}

/// What a check does, independent of how it is run.
#[derive(Debug, Clone, Copy)]
pub struct CheckInfo {
    pub name: &'static str,
    pub identity: &'static str,
    pub tol: f64,
}

/// One scheduled run of a named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub name: String,
    pub identity: String,
    pub algebras: Vec<String>,
    pub arities: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub sign: Sign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Fault>,
}

/// Result of one check. Failing reports always carry a witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    #[serde(with = "residual")]
    pub worst_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

/// Finite residuals are JSON numbers; `inf` and `nan` are written as strings.
mod residual {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Wire::deserialize(d)? {
            Wire::Number(v) => Ok(v),
            Wire::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("bad residual `{other}`"))),
            },
        }
    }
}

impl CheckReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// Options shared by every check in a suite run.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub samples: usize,
    /// Overrides every per-check tolerance when set.
    pub tol: Option<f64>,
    pub sign: Sign,
    pub mutation: Option<Fault>,
    /// Keep only checks whose name contains this string.
    pub filter: Option<String>,
    pub algebras: Vec<String>,
    pub arities: Vec<usize>,
    pub timings: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 42,
            samples: 32,
            tol: None,
            sign: Sign::Plus,
            mutation: None,
            filter: None,
            algebras: BATTERY.iter().map(ToString::to_string).collect(),
            arities: vec![1, 2, 3, 4],
            timings: false,
        }
    }
}

pub fn registry() -> &'static [CheckInfo] {
    checks::REGISTRY
}

/// The registered checks that survive the filter, configured by `config`.
pub fn default_specs(config: &SuiteConfig) -> Vec<CheckSpec> {
    registry()
        .iter()
        .filter(|c| config.filter.as_deref().is_none_or(|f| c.name.contains(f)))
        .map(|c| CheckSpec {
            name: c.name.to_string(),
            identity: c.identity.to_string(),
            algebras: config.algebras.clone(),
            arities: config.arities.clone(),
            samples: config.samples,
            seed: config.seed,
            tol: config.tol.unwrap_or(c.tol),
            sign: config.sign,
            mutation: config.mutation,
        })
        .collect()
}

/// FNV-1a of a check name, mixed into the seed.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn check_rng(spec: &CheckSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.seed ^ name_hash(&spec.name))
}

pub fn run_check(spec: &CheckSpec, timings: bool) -> CheckReport {
    let start = Instant::now();
    let mut report = checks::run(spec);
    if timings {
        report.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    report
}

/// Run checks in parallel and return their reports sorted by name.
pub fn run_suite(specs: &[CheckSpec]) -> Vec<CheckReport> {
    run_suite_with(specs, false)
}

pub fn run_suite_with(specs: &[CheckSpec], timings: bool) -> Vec<CheckReport> {
    let mut reports: Vec<CheckReport> = specs.par_iter().map(|s| run_check(s, timings)).collect();
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite() {
        assert!(run_suite(&[]).is_empty());
    }

    #[test]
    fn registry_names_are_unique() {
        let mut names: Vec<&str> = registry().iter().map(|c| c.name).collect();
        names.sort_unstable();
        let total = names.len();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn filter_selects_by_substring() {
        let config = SuiteConfig { filter: Some("prop6".into()), ..SuiteConfig::default() };
        let specs = default_specs(&config);
        assert!(!specs.is_empty());
        assert!(specs.iter().all(|s| s.name.contains("prop6")));
    }

    #[test]
    fn infinite_residual_round_trips() {
        let r = CheckReport {
            name: "x".into(),
            pass: false,
            worst_residual: f64::INFINITY,
            witness: Some(serde_json::json!({ "error": "e" })),
            elapsed_ms: None,
        };
        let line = r.to_json_line();
        assert!(line.contains("\"inf\""));
        let back: CheckReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn seeds_differ_by_name() {
        assert_ne!(name_hash("a"), name_hash("b"));
    }

    #[test]
    fn dual_numbers_only() {
        let config = SuiteConfig { algebras: vec!["dual".into()], samples: 8, ..SuiteConfig::default() };
        for r in run_suite(&default_specs(&config)) {
            assert!(r.pass, "{}", r.to_json_line());
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        let config = SuiteConfig {
            algebras: vec!["dual".into()],
            samples: 8,
            mutation: Some(Fault::SignFlipTau),
            ..SuiteConfig::default()
        };
        let reports = run_suite(&default_specs(&config));
        let failed: Vec<&CheckReport> = reports.iter().filter(|r| !r.pass).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|r| r.witness.is_some()));
    }
}
