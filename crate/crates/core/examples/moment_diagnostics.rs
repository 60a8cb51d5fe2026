//! Diagnostics on saved moment series: monotonicity, plateaus and the
//! invariant moment set of a self-similar run.

use fusion_coag::coag_mc::{run_selfsim, EngineConfig};
use fusion_coag::experiments::{make_initial_data, InitialConfig, InitialKind};
use fusion_coag::kernels::{FusionSpec, KernelSpec, TruncationParams};
use fusion_coag::moments::{check_invariant_moment_set, invariant_set_keys};
use fusion_coag::state::{Frame, MomentSeries};

fn main() -> fusion_coag::Result<()> {
    let kernel = KernelSpec::new(1.0, 0.5, 0.5, 0.0)?;
    let fusion = FusionSpec::new(1.0, 1.0, 0.0)?;
    let trunc = TruncationParams::new(1e-3, 1e3, 1e-3, &fusion)?;
    let keys = invariant_set_keys(&kernel, &fusion, 0.5)?;
    println!("invariant set moments: {}", keys.iter().map(|k| k.column_name()).collect::<Vec<_>>().join(", "));

    let e = make_initial_data(&InitialConfig::new(InitialKind::MonodisperseSphere, 3000), Frame::SelfSimilar, 0)?;
    let cfg = EngineConfig {
        frame: Frame::SelfSimilar,
        n_particles: 3000,
        t_end: 3.0,
        record_every: 0.25,
        moments: keys.clone(),
        ..Default::default()
    };
    let (_, series, _) = run_selfsim(e, &kernel, &fusion, &trunc, &cfg)?;

    // round trip through CSV, as `analyze` would read it
    let path = std::env::temp_dir().join("fusion_coag_moments.csv");
    series.write_csv(&path)?;
    let series = MomentSeries::read_csv(&path)?;

    let candidates: Vec<_> = keys
        .iter()
        .map(|k| Ok((*k, 10.0 * series.moment(k.k, k.l)?[0])))
        .collect::<fusion_coag::Result<_>>()?;
    let rep = check_invariant_moment_set(&series, None, kernel.regime(), &candidates, 3.0)?;
    println!("{}", rep.table());
    Ok(())
}
