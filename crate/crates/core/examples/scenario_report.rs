//! Runs a named scenario at reduced size and writes its report.
//!
//! `cargo run --release --example scenario_report -- ramification /tmp/ram`

use std::path::PathBuf;

use fusion_coag::experiments::{run_scenario, Scenario, ScenarioName};

fn main() -> fusion_coag::Result<()> {
    let mut args = std::env::args().skip(1);
    let name: ScenarioName = args.next().as_deref().unwrap_or("ramification").parse()?;
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join(name.as_str()));

    let s = Scenario::preset(name)?.scaled(2000, 6)?;
    let report = run_scenario(&s, Some(&out))?;
    println!("{}", report.checks.table());
    println!("{name}: passed={} events={:?}", report.passed, report.events);
    println!("report and CSVs in {}", out.display());
    Ok(())
}
