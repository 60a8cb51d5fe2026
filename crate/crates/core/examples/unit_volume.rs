//! Normalizing an ensemble to unit total volume and undoing it.

use fusion_coag::experiments::{make_initial_data, InitialConfig, InitialKind};
use fusion_coag::selfsim::rescale_to_unit_volume;
use fusion_coag::state::Frame;

fn main() -> fusion_coag::Result<()> {
    let gamma = 0.25;
    let init = InitialConfig { total_volume: 40.0, ..InitialConfig::new(InitialKind::TwoPoint { v2: 5.0, fraction: 0.3 }, 1000) };
    let e = make_initial_data(&init, Frame::Physical, 0)?;
    let (u, sc) = rescale_to_unit_volume(&e, gamma)?;
    println!("v0 = {}, k = {:.6}, fusion prefactor factor {:.6}", sc.v0, sc.k, sc.fusion_factor);
    for (y1, y2) in [(0.0, 1.0), (1.0, 0.0), (0.0, 2.0)] {
        let expo = (gamma - 2.0 / 3.0 * y1 - y2) / (1.0 - gamma);
        println!(
            "M_{y1}_{y2}: {:.6e} -> {:.6e} (expected factor v0^{expo:.4} = {:.6e})",
            e.moment(y1, y2)?,
            u.moment(y1, y2)?,
            sc.v0.powf(expo)
        );
    }
    let back = sc.invert(&u)?;
    println!("round trip max |dv|/v = {:e}", back.particles.iter().zip(&e.particles).map(|(p, q)| ((p.v - q.v) / q.v).abs()).fold(0.0, f64::max));
    Ok(())
}
