//! Fusion alone: every particle relaxes toward the sphere of its volume.

use fusion_coag::experiments::{run_scenario, Scenario, ScenarioName};

fn main() -> fusion_coag::Result<()> {
    let s = Scenario::preset(ScenarioName::PureFusion)?.scaled(200, 2)?;
    let report = run_scenario(&s, None)?;
    println!("{}", report.checks.table());
    println!("projections onto the sphere: {}", report.events.projections);
    Ok(())
}
