//! The four kinds of initial data and their moments.

use fusion_coag::experiments::{make_initial_data, InitialConfig, InitialKind};
use fusion_coag::state::{mean_ratio_diagnostics, Frame};

fn main() -> fusion_coag::Result<()> {
    let kinds = [
        InitialKind::MonodisperseSphere,
        InitialKind::MonodisperseElongated { ratio: 50.0 },
        InitialKind::LogNormalVolume { sigma: 1.0 },
        InitialKind::TwoPoint { v2: 8.0, fraction: 0.1 },
    ];
    for kind in kinds {
        let cfg = InitialConfig { total_volume: 2.0, ..InitialConfig::new(kind, 1000) };
        let e = make_initial_data(&cfg, Frame::Physical, 42)?;
        let (r, r23) = mean_ratio_diagnostics(&e)?;
        println!(
            "{:<60} M_0_0 {:.4}  M_0_1 {:.4}  M_1_0 {:8.3}  <a>/<v> {:7.3}  <a>/<v>^2/3 {:7.3}",
            format!("{kind:?}"),
            e.moment(0.0, 0.0)?,
            e.moment(0.0, 1.0)?,
            e.moment(1.0, 0.0)?,
            r,
            r23
        );
    }
    println!("{}", serde_json::to_string(&InitialConfig::new(InitialKind::TwoPoint { v2: 8.0, fraction: 0.1 }, 1000))?);
    Ok(())
}
