//! Command-line front end. Every subcommand prints JSON on stdout and
//! diagnostics on stderr.

use std::path::Path;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::expression::ScalarExpr;
use crate::harness::{self, SuiteConfig, BATTERY};
use crate::poisson::{
    check_global_witness_poisson, closedness_residual_poisson, default_generators, witness_residual_poisson,
    PoissonJson, PoissonStructure, ProlongedPoisson,
};
use crate::symplectic::{
    closedness_residual_symplectic, witness_outcome_symplectic, BaseForm, FormJson, Sign, SymplecticStructure,
};
use crate::weil_algebra::{AlgebraSpec, ElementJson, Fault, WeilAlgebra};
use crate::weil_bundle::{BaseVectorField, BundleFunction, BundleFunctionJson, BundleVectorField, NearPoint, NearPointJson, Sampling};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_CHECK: i32 = 5;

const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "weiljet", version, about = "Weil-bundle jets, prolonged Poisson and symplectic structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Preset (dual, t3, t4, m2_2, m2_3), inline algebra JSON, or a path to one.
    /// For `verify`, a comma-separated list of presets.
    #[arg(long, global = true)]
    pub algebra: Option<String>,
    #[arg(long, global = true)]
    pub arity: Option<usize>,
    /// Defaults to 1e-9; for `verify` it overrides every per-check tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 32)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "+1", allow_hyphen_values = true)]
    pub sign: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Poisson,
    Symplectic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe an algebra: its wire form plus dimension, height and basis labels.
    Algebra,
    /// Evaluate f^A at a near point.
    Prolong {
        #[arg(long, allow_hyphen_values = true)]
        expr: String,
        /// Near-point JSON, or a list of coefficient lists.
        #[arg(long)]
        point: String,
    },
    /// Evaluate a prolonged bracket at a near point.
    Bracket {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        structure: String,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        #[arg(long, allow_hyphen_values = true)]
        psi: String,
        #[arg(long)]
        point: String,
    },
    /// The hamiltonian field of phi; symbolic without --point, evaluated with it.
    Hamfield {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        structure: String,
        #[arg(long, allow_hyphen_values = true)]
        phi: String,
        #[arg(long)]
        point: Option<String>,
    },
    /// Decide whether a field is locally hamiltonian, and check a potential if given.
    Hamcheck {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        structure: String,
        /// JSON list of expression strings (prolonged) or of bundle-function objects.
        #[arg(long)]
        field: String,
        #[arg(long, allow_hyphen_values = true)]
        witness: Option<String>,
    },
    /// Run the identity suite and print one JSON report per line.
    Verify {
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        mutation: Option<String>,
        /// Comma-separated arities for checks that cycle through them.
        #[arg(long, value_delimiter = ',')]
        arities: Option<Vec<usize>>,
        #[arg(long)]
        timings: bool,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::Arity { .. } | Error::Input(_) => EXIT_PARSE,
        Error::MalformedTable(_) => EXIT_PARSE,
        Error::Domain(_) | Error::NotInvertible(_) | Error::SingularRealPart(_) => EXIT_DOMAIN,
        _ => EXIT_VALIDATION,
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        EXIT_PARSE => "parse",
        EXIT_DOMAIN => "domain",
        _ => "validation",
    }
}

/// Parse `args`, run, write to `out`, and return the exit code.
pub fn run_with<I, T>(args: I, out: &mut impl std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            eprint!("{e}");
            let _ = writeln!(out, "{}", json!({ "error": "parse", "message": e.kind().to_string() }));
            return EXIT_PARSE;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("weiljet: {e}");
            let _ = writeln!(out, "{}", json!({ "error": error_kind(code), "message": e.to_string() }));
            code
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout().lock())
}

fn emit(out: &mut impl std::io::Write, v: &impl serde::Serialize) -> Result<()> {
    let line = serde_json::to_string(v).map_err(|e| Error::Input(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::Input(e.to_string()))
}

fn dispatch(cli: &Cli, out: &mut impl std::io::Write) -> Result<i32> {
    let c = &cli.common;
    match &cli.command {
        Command::Algebra => {
            let alg = resolve_algebra(c.algebra.as_deref(), None)?;
            let mut v = serde_json::to_value(alg.spec()).map_err(|e| Error::Input(e.to_string()))?;
            if let Value::Object(m) = &mut v {
                m.insert("dim".into(), json!(alg.dim()));
                m.insert("height".into(), json!(alg.height()));
                m.insert("labels".into(), json!(alg.labels()));
            }
            emit(out, &v)?;
        }
        Command::Prolong { expr, point } => {
            let (_, xi) = resolve_point(c, point)?;
            let f = ScalarExpr::parse(expr, xi.arity())?;
            emit(out, &f.eval_weil(xi.coords())?.to_json())?;
        }
        Command::Bracket { mode, structure, phi, psi, point } => {
            let (alg, xi) = resolve_point(c, point)?;
            let s = Structure::load(*mode, structure, c.arity)?;
            check_arity(s.arity(), xi.arity())?;
            let (u, v) = (read_function(&alg, s.arity(), phi)?, read_function(&alg, s.arity(), psi)?);
            emit(out, &s.bracket(&alg, &u, &v).evaluate(&xi)?.to_json())?;
        }
        Command::Hamfield { mode, structure, phi, point } => {
            let s = Structure::load(*mode, structure, c.arity)?;
            match point {
                Some(point) => {
                    let (alg, xi) = resolve_point(c, point)?;
                    check_arity(s.arity(), xi.arity())?;
                    let x = s.field(&alg, &read_function(&alg, s.arity(), phi)?);
                    let comps: Result<Vec<ElementJson>> =
                        x.components().iter().map(|f| f.evaluate(&xi).map(|e| e.to_json())).collect();
                    emit(out, &json!({ "components": comps? }))?;
                }
                None => {
                    let f = ScalarExpr::parse(&read_text(phi)?, s.arity())?;
                    emit(out, &json!({ "components": s.base_field(&f).to_strings() }))?;
                }
            }
        }
        Command::Hamcheck { mode, structure, field, witness } => {
            let s = Structure::load(*mode, structure, c.arity)?;
            let alg = resolve_algebra(c.algebra.as_deref(), None)?;
            let x = read_field(&alg, s.arity(), field)?;
            let sampling = Sampling::new(s.arity()).with_samples(c.samples).with_tol(c.tol.unwrap_or(DEFAULT_TOL));
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let verdict = s.hamcheck(&x, witness.as_deref(), c.sign, &sampling, &mut rng)?;
            emit(out, &verdict)?;
        }
        Command::Verify { filter, mutation, arities, timings } => {
            let mutation = match mutation {
                Some(m) => Some(
                    Fault::from_name(m).ok_or_else(|| Error::Input(format!("unknown mutation `{m}`")))?,
                ),
                None => None,
            };
            let algebras: Vec<String> = match &c.algebra {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
                None => BATTERY.iter().map(ToString::to_string).collect(),
            };
            for a in &algebras {
                harness::algebra_by_name(a)?;
            }
            let defaults = SuiteConfig::default();
            let config = SuiteConfig {
                seed: c.seed,
                samples: c.samples,
                tol: c.tol,
                sign: c.sign,
                mutation,
                filter: filter.clone(),
                algebras,
                arities: arities.clone().unwrap_or(defaults.arities),
                timings: *timings,
            };
            let reports = harness::run_suite_with(&harness::default_specs(&config), *timings);
            for r in &reports {
                writeln!(out, "{}", r.to_json_line()).map_err(|e| Error::Input(e.to_string()))?;
            }
            return Ok(if reports.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_CHECK });
        }
    }
    Ok(EXIT_OK)
}

/// Inline text, or the contents of a file when `arg` names one.
fn read_text(arg: &str) -> Result<String> {
    let t = arg.trim_start();
    if !t.starts_with(['{', '[', '"']) && Path::new(arg).is_file() {
        return std::fs::read_to_string(arg).map_err(|e| Error::Input(format!("{arg}: {e}")));
    }
    Ok(arg.to_string())
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("bad JSON: {e}")))
}

fn resolve_algebra(arg: Option<&str>, fallback: Option<&AlgebraSpec>) -> Result<Arc<WeilAlgebra>> {
    match (arg, fallback) {
        (Some(a), _) => {
            let text = read_text(a)?;
            if text.trim_start().starts_with('{') {
                WeilAlgebra::from_spec(&parse_json(&text)?)
            } else {
                harness::algebra_by_name(text.trim())
            }
        }
        (None, Some(spec)) => WeilAlgebra::from_spec(spec),
        (None, None) => harness::algebra_by_name("dual"),
    }
}

fn resolve_point(c: &Common, arg: &str) -> Result<(Arc<WeilAlgebra>, NearPoint)> {
    let text = read_text(arg)?;
    let json: NearPointJson = if text.trim_start().starts_with('[') {
        let coords: Vec<Vec<f64>> = parse_json(&text)?;
        NearPointJson { algebra: None, coords: coords.into_iter().map(|coeffs| ElementJson { coeffs }).collect() }
    } else {
        parse_json(&text)?
    };
    let alg = resolve_algebra(c.algebra.as_deref(), json.algebra.as_ref())?;
    let xi = NearPoint::from_json(&alg, &json)?;
    if let Some(n) = c.arity {
        check_arity(n, xi.arity())?;
    }
    Ok((alg, xi))
}

fn check_arity(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Input(format!("expected {expected} coordinates, got {got}")))
    }
}

/// An expression string (prolonged) or a bundle-function JSON object.
fn read_function(alg: &Arc<WeilAlgebra>, arity: usize, arg: &str) -> Result<BundleFunction> {
    let text = read_text(arg)?;
    if text.trim_start().starts_with('{') {
        BundleFunction::from_json(alg, arity, &parse_json::<BundleFunctionJson>(&text)?)
    } else {
        Ok(BundleFunction::prolong(alg, &ScalarExpr::parse(&text, arity)?))
    }
}

fn read_field(alg: &Arc<WeilAlgebra>, arity: usize, arg: &str) -> Result<BundleVectorField> {
    let items: Vec<Value> = parse_json(&read_text(arg)?)?;
    check_arity(arity, items.len())?;
    let comps: Result<Vec<BundleFunction>> = items
        .iter()
        .map(|v| match v {
            Value::String(s) => Ok(BundleFunction::prolong(alg, &ScalarExpr::parse(s, arity)?)),
            other => BundleFunction::from_json(alg, arity, &parse_json::<BundleFunctionJson>(&other.to_string())?),
        })
        .collect();
    BundleVectorField::new(alg, comps?)
}

enum Structure {
    Poisson(PoissonStructure),
    Symplectic(SymplecticStructure),
}

fn preset_arity(text: &str) -> Option<usize> {
    text.strip_prefix("canonical").and_then(|n| n.parse().ok())
}

impl Structure {
    fn load(mode: Mode, arg: &str, arity: Option<usize>) -> Result<Self> {
        let text = read_text(arg)?;
        let t = text.trim();
        match mode {
            Mode::Poisson => Ok(Structure::Poisson(match t {
                "so3" => PoissonStructure::so3(),
                _ => match preset_arity(t) {
                    Some(n) => PoissonStructure::canonical(n)?,
                    None => PoissonStructure::from_json(&parse_json::<PoissonJson>(t)?)?,
                },
            })),
            Mode::Symplectic => Ok(Structure::Symplectic(match preset_arity(t) {
                Some(n) => SymplecticStructure::canonical(n)?,
                None => {
                    let v: Value = parse_json(t)?;
                    let form: FormJson = parse_json(t)?;
                    let n = v
                        .get("arity")
                        .and_then(Value::as_u64)
                        .map(|n| n as usize)
                        .or(arity)
                        .map_or_else(|| infer_arity(&form), Ok)?;
                    SymplecticStructure::new(BaseForm::from_json(n, &form)?)?
                }
            })),
        }
    }

    fn arity(&self) -> usize {
        match self {
            Structure::Poisson(p) => p.arity(),
            Structure::Symplectic(s) => s.arity(),
        }
    }

    fn bracket(&self, alg: &Arc<WeilAlgebra>, u: &BundleFunction, v: &BundleFunction) -> BundleFunction {
        match self {
            Structure::Poisson(p) => ProlongedPoisson::new(p.clone(), alg).bracket(u, v),
            Structure::Symplectic(s) => s.bracket(u, v),
        }
    }

    fn field(&self, alg: &Arc<WeilAlgebra>, phi: &BundleFunction) -> BundleVectorField {
        match self {
            Structure::Poisson(p) => ProlongedPoisson::new(p.clone(), alg).tau_field(phi),
            Structure::Symplectic(s) => s.hamiltonian_field(phi),
        }
    }

    fn base_field(&self, f: &ScalarExpr) -> BaseVectorField {
        match self {
            Structure::Poisson(p) => p.ad(f),
            Structure::Symplectic(s) => s.base_hamiltonian_field(f),
        }
    }

    fn hamcheck(
        &self,
        x: &BundleVectorField,
        witness: Option<&str>,
        sign: Sign,
        sampling: &Sampling,
        rng: &mut ChaCha8Rng,
    ) -> Result<Value> {
        let alg = x.algebra().clone();
        let n = self.arity();
        let phi = witness.map(|w| read_function(&alg, n, w)).transpose()?;
        let (mode, closedness, witness_residual, globally) = match self {
            Structure::Poisson(p) => {
                let pp = ProlongedPoisson::new(p.clone(), &alg);
                let (c, _) = closedness_residual_poisson(x, &pp, &default_generators(n), sampling, rng)?;
                let w = match &phi {
                    Some(phi) => {
                        let r = witness_residual_poisson(x, phi, &pp, sampling, rng)?.worst_residual;
                        Some((r, check_global_witness_poisson(x, phi, &pp, sampling, rng)))
                    }
                    None => None,
                };
                ("poisson", c.worst_residual, w.map(|w| w.0), w.map(|w| w.1))
            }
            Structure::Symplectic(s) => {
                let c = closedness_residual_symplectic(x, s, sampling, rng)?;
                let w = match &phi {
                    Some(phi) => {
                        let o = witness_outcome_symplectic(x, phi, s, sign, sampling, rng)?;
                        Some((o.residual.worst_residual, o.passed))
                    }
                    None => None,
                };
                ("symplectic", c.worst_residual, w.map(|w| w.0), w.map(|w| w.1))
            }
        };
        Ok(json!({
            "mode": mode,
            "locally": closedness <= sampling.tol,
            "globally": globally.map_or(json!("unknown"), Value::Bool),
            "witness_checked": globally.is_some(),
            "sign": sign,
            "closedness_residual": closedness,
            "witness_residual": witness_residual,
        }))
    }
}

fn infer_arity(form: &FormJson) -> Result<usize> {
    let mut top = 0;
    for key in form.coeffs.keys() {
        for part in key.split(',') {
            let i: usize = part.trim().parse().map_err(|_| Error::Input(format!("bad form index `{key}`")))?;
            top = top.max(i + 1);
        }
    }
    Ok(top)
}
