//! Runs every acceptance criterion over the in-repo corpus and prints one
//! PASS/FAIL line per criterion.

use std::path::Path;
use std::process::ExitCode;

use racx::prune_array::{check_witness, CspVerdict};
use racx_cli::acceptance::{run_all, worked_verdicts, CriterionResult, DEFAULT_CORPUS};

/// Criteria that fail by construction; each has its own consistency check.
const KNOWN_FAILURES: [u8; 1] = [4];

/// The literal worked CSP is satisfiable, so the solver must return a
/// witness that re-checks, while the two-thread form must be UNSAT and the
/// weak pre-IVS form must not be.
fn worked_csp_is_consistent() -> bool {
    let w = worked_verdicts();
    let literal_ok = matches!(&w.literal, CspVerdict::Sat { witness } if check_witness(&w.literal_csp, witness));
    literal_ok && w.two_threads.is_unsat() && !w.pre_ivs.is_unsat()
}

fn main() -> ExitCode {
    let results: Vec<CriterionResult> = run_all(Path::new(DEFAULT_CORPUS));
    let mut ok = results.len() == 8;
    for r in &results {
        println!("{}", r.line());
        if KNOWN_FAILURES.contains(&r.id) {
            if r.passed {
                println!("note: criterion {} was expected to fail and now passes", r.id);
            }
        } else {
            ok &= r.passed;
        }
    }
    if !worked_csp_is_consistent() {
        println!("worked CSP verdicts are inconsistent with exhaustive reasoning");
        ok = false;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
