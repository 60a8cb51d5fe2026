//! Weak fusion with mu < 0 on very elongated particles: the mean shape ratio keeps growing.

use fusion_coag::experiments::{run_replicas, Scenario, ScenarioName};
use fusion_coag::moments::{check_ramification_ratios, RamificationOptions};
use fusion_coag::selfsim::selfsim_time;
use fusion_coag::state::Frame;

fn main() -> fusion_coag::Result<()> {
    let s = Scenario::preset(ScenarioName::Ramification)?.scaled(4000, 4)?;
    let gamma = s.config.kernel.gamma();
    let runs = run_replicas(&s.config)?;
    let m10 = runs.mean.moment(1.0, 0.0)?;
    println!("{:>9} {:>7} {:>10} {:>10} {:>10}", "t", "tau", "<a>/<v>", "shape", "M_1_0");
    for (i, row) in runs.mean.rows.iter().enumerate().step_by(4) {
        let tau = selfsim_time(row.clock, gamma)?;
        println!("{:>9.3} {:>7.3} {:>10.4} {:>10.3} {:>10.4}", row.clock, tau, row.ratio_av, row.ratio_av23, m10[i]);
    }
    let rep = check_ramification_ratios(&runs.mean, Frame::Physical, gamma, &RamificationOptions::default())?;
    println!("{}", rep.table());
    Ok(())
}
