//! End-to-end gate: every identity over the full battery and three seeds,
//! mutation sensitivity, and byte-stable CLI reports. One line per criterion.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use weiljet::harness::{default_specs, run_suite, CheckReport, SuiteConfig};
use weiljet::Fault;

const SEEDS: [u64; 3] = [42, 7, 1000];

const CRITERIA: [(&str, &[&str]); 13] = [
    ("algebra morphism", &["algebra_morphism"]),
    ("AD ground truth", &["ad_ground_truth"]),
    ("Lie morphism", &["lie_morphism"]),
    ("functoriality", &["functoriality"]),
    ("d~ of a prolonged cochain", &["prop1_d_tilde_prolongation"]),
    ("local verdicts agree", &["prop2_iff_local"]),
    ("closed fields are bracket derivations", &["prop3_bracket_derivation"]),
    ("global Poisson fields are interior", &["prop4_5_global_poisson", "prolonged_poisson_compat"]),
    ("interior product commutes with prolongation", &["prop6_interior_prolongation"]),
    ("symplectic and Poisson brackets coincide", &["thm1_brackets_coincide"]),
    ("closed symplectic fields are derivations", &["thm2_symplectic_derivation"]),
    ("hamiltonian potentials prolong", &["prop7_global_symplectic"]),
    ("matrix inversion over A", &["neumann_matrix_inverse"]),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(index: usize, title: &str, o: &Outcome) {
    println!("{} criterion {:>2} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, index, o.detail);
}

fn identities(by_seed: &[(u64, Vec<CheckReport>)], names: &[&str]) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (seed, reports) in by_seed {
        for name in names {
            match reports.iter().find(|r| r.name == *name) {
                Some(r) => {
                    worst = worst.max(r.worst_residual);
                    if !r.pass {
                        failures.push(format!("seed {seed}: {}", r.to_json_line()));
                    }
                }
                None => failures.push(format!("seed {seed}: `{name}` missing")),
            }
        }
    }
    let detail = if failures.is_empty() { format!("worst residual {worst:.3e}") } else { failures.join("; ") };
    Outcome { pass: failures.is_empty(), detail }
}

fn mutations() -> Outcome {
    let mut caught = BTreeMap::new();
    for fault in Fault::ALL {
        let config = SuiteConfig { samples: 4, mutation: Some(fault), ..SuiteConfig::default() };
        let failed: Vec<String> = run_suite(&default_specs(&config))
            .into_iter()
            .filter(|r| !r.pass && r.witness.as_ref().is_some_and(|w| w.get("seed").is_some()))
            .map(|r| r.name)
            .collect();
        caught.insert(fault.name(), failed);
    }
    let missed: Vec<&str> = caught.iter().filter(|(_, f)| f.is_empty()).map(|(k, _)| *k).collect();
    let detail = caught.iter().map(|(k, f)| format!("{k} -> {}", f.len())).collect::<Vec<_>>().join(", ");
    Outcome {
        pass: missed.is_empty(),
        detail: if missed.is_empty() { detail } else { format!("not caught: {}", missed.join(", ")) },
    }
}

fn determinism() -> Outcome {
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_weiljet"))
            .args(["verify", "--seed", seed, "--samples", "4"])
            .output()
            .expect("binary runs")
    };
    let mut diffs = Vec::new();
    for seed in SEEDS.map(|s| s.to_string()) {
        let (a, b) = (run(&seed), run(&seed));
        if a.stdout.is_empty() || a.stdout != b.stdout || a.status.code() != b.status.code() {
            diffs.push(seed);
        }
    }
    Outcome {
        pass: diffs.is_empty(),
        detail: if diffs.is_empty() {
            "identical streams for seeds 42, 7, 1000".into()
        } else {
            format!("streams differ for seeds {}", diffs.join(", "))
        },
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let by_seed: Vec<(u64, Vec<CheckReport>)> = SEEDS
        .iter()
        .map(|&seed| (seed, run_suite(&default_specs(&SuiteConfig { seed, ..SuiteConfig::default() }))))
        .collect();

    let mut all = true;
    for (i, (title, names)) in CRITERIA.iter().enumerate() {
        let o = identities(&by_seed, names);
        all &= o.pass;
        line(i + 1, title, &o);
    }
    for (i, (title, o)) in [("mutation sensitivity", mutations()), ("determinism", determinism())].iter().enumerate() {
        all &= o.pass;
        line(CRITERIA.len() + i + 1, title, o);
    }

    let secs = start.elapsed().as_secs_f64();
    println!("{} total runtime {secs:.1}s", if secs < 60.0 { "PASS" } else { "FAIL" });
    if all && secs < 60.0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
