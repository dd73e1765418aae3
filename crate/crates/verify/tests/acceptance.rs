//! Runs every acceptance criterion at its stated tolerance and runtime
//! limit, printing one line per criterion. Exits nonzero if any fails.
//! `HYPMAP_ACCEPTANCE=<suite>` restricts the run to one suite or group.

use hypmap_verify::suites::select;

fn main() {
    let which = std::env::var("HYPMAP_ACCEPTANCE").unwrap_or_else(|_| "all".to_string());
    let ids = select(&which).unwrap_or_else(|| panic!("unknown suite {which}"));
    let mut failed = 0;
    for id in &ids {
        let c = id.run(0);
        println!("{}", c.line());
        if !c.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {} failed", ids.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
