use cachecast::validate::{criterion_ids, run_criterion, Level};

fn main() {
    let mut failed = Vec::new();
    for id in criterion_ids(Level::Full) {
        let r = run_criterion(id).expect("known criterion");
        println!(
            "criterion {:>2} {} {} [{:.1}s]: {}",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        if !r.passed {
            failed.push(r.id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
