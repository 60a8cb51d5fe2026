//! Snapshots of a physical run mapped to self-similar coordinates, and the
//! distance between successive profiles.

use fusion_coag::coag_mc::{simulate_physical, EngineConfig, MajorantMode};
use fusion_coag::experiments::{make_initial_data, InitialConfig, InitialKind};
use fusion_coag::kernels::{FusionSpec, KernelSpec};
use fusion_coag::selfsim::{extract_profile, profile_distance, BinGrid};
use fusion_coag::state::Frame;

fn main() -> fusion_coag::Result<()> {
    let kernel = KernelSpec::new(1.0, 0.5, 0.5, 0.0)?;
    let fusion = FusionSpec::new(1.0, 1.0, 0.0)?;
    let e = make_initial_data(&InitialConfig::new(InitialKind::MonodisperseSphere, 20_000), Frame::Physical, 1)?;
    let snaps = vec![2.0, 4.0, 8.0, 16.0, 32.0];
    let cfg = EngineConfig {
        t_end: 32.0,
        record_times: Some(snaps.clone()),
        snapshot_times: Some(snaps),
        majorant: MajorantMode::Exact,
        ..Default::default()
    };
    let out = simulate_physical(e, &kernel, &fusion, &cfg)?;
    let refs: Vec<_> = out.snapshots.iter().collect();
    let grid = BinGrid::auto(&refs, 0.0, 6, 10)?;
    let profiles = out
        .snapshots
        .iter()
        .map(|s| extract_profile(s, s.clock, 0.0, &grid))
        .collect::<fusion_coag::Result<Vec<_>>>()?;
    for w in profiles.windows(2) {
        println!(
            "t {:>4} -> {:>4}: distance {:.4}, rescaled M_0_0 {:.4}",
            w[0].clock,
            w[1].clock,
            profile_distance(&w[0], &w[1])?,
            w[1].rescaled_mass
        );
    }
    let last = profiles.last().unwrap();
    let (a, v, x, m) = last.bins().into_iter().fold((0.0, 0.0, 0.0, 0.0), |b, c| if c.3 > b.3 { c } else { b });
    println!("heaviest cell at t={}: a_hat {a:.3}, v_hat {v:.3}, shape ratio {x:.3}, mass {m:.4}", last.clock);
    Ok(())
}
