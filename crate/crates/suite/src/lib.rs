//! Acceptance suite for the hamcert workspace. The checks live in
//! `tests/acceptance.rs`; this crate hosts the small runner they share.

use std::panic::{catch_unwind, AssertUnwindSafe};

/// `(id, slow, check)`; slow checks only run with `--ignored` or `--include-ignored`.
pub type Criterion = (&'static str, bool, fn() -> bool);

pub fn report(criterion: usize, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} {verdict}  {title}: {detail}");
}

/// Run the selected criteria in order and return the process exit code.
///
/// Free arguments are substring filters on the id. Other libtest flags that
/// cargo forwards are accepted and ignored.
pub fn run_criteria(criteria: &[Criterion]) -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (id, _, _) in criteria {
            println!("criterion_{id}: test");
        }
        return 0;
    }
    let only_slow = args.iter().any(|a| a == "--ignored");
    let with_slow = only_slow || args.iter().any(|a| a == "--include-ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for &(id, slow, check) in criteria {
        if (slow && !with_slow) || (only_slow && !slow) {
            continue;
        }
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let ok = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(ok) => ok,
            Err(_) => {
                println!("criterion {id} FAIL  panicked");
                false
            }
        };
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("\nacceptance: {ran} criteria passed");
        0
    } else {
        println!("\nacceptance: {} of {ran} criteria failed: {}", failed.len(), failed.join(", "));
        1
    }
}
