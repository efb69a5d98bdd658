use acmc_core::acceptance;

fn main() {
    let ids: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let results = if ids.is_empty() {
        acceptance::run_all()
    } else {
        acceptance::run(&ids)
    };
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
}
