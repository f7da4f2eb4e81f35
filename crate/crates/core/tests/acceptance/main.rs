//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p prism-core --test acceptance`.

mod checks;
mod exactness;
mod recovery;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// `Ok(detail)` passes, `Err(detail)` fails.
type Verdict = Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("C1 spectral sampler exactness", exactness::spectral_sampler),
        ("C2 commutation identity", exactness::commutation),
        ("C3 conjugate end-to-end", exactness::conjugate_chain),
        ("C4 blind improvement", recovery::blind_improvement),
        ("C5 conditioning ablation", recovery::conditioning_ablation),
        ("C6 UQ calibration", checks::uq_calibration),
        ("C7 metric correctness", checks::metrics),
        ("C8 determinism and resume", checks::determinism),
        ("C9 schedule law", checks::schedule_law),
        ("C10 bridge protocol", checks::bridge),
    ];

    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        let id = name.split_whitespace().next().unwrap_or(name);
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
