//! Strong fusion in the self-similar frame: D = M_1_0 + M_2_0 stays in its invariant region.

use fusion_coag::experiments::{run_replicas, Scenario, ScenarioName};
use fusion_coag::moments::{check_area_budget, check_d_invariant_region, d_threshold, BudgetOptions};

fn main() -> fusion_coag::Result<()> {
    let s = Scenario::preset(ScenarioName::FastFusion)?.scaled(2000, 3)?;
    let model = s.config.model()?;
    let runs = run_replicas(&s.config)?;
    let m10 = runs.mean.moment(1.0, 0.0)?;
    let m20 = runs.mean.moment(2.0, 0.0)?;
    println!("threshold 1/12 = {:.5}", d_threshold(0.0));
    for (i, t) in runs.mean.clocks().iter().enumerate().step_by(10) {
        println!("tau {t:>4.2}  D {:.5e}", m10[i] + m20[i]);
    }
    let mut rep = check_d_invariant_region(&runs.mean, Some(&runs.sem), 0.0, 3.0)?;
    let opts = BudgetOptions { fit_window: (1.0, 5.0), ..Default::default() };
    rep.extend(check_area_budget(&runs.mean, Some(&runs.sem), &model.fusion, 0.0, &opts)?);
    println!("{}", rep.table());
    Ok(())
}
