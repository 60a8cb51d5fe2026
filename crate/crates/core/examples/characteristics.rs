//! Fusion characteristics in the physical and self-similar frames.

use fusion_coag::fusion_flow::{integrate_characteristic, relaxation_closed_form, trace_characteristic, FlowParams};
use fusion_coag::kernels::{sphere_area, FusionSpec, TruncationParams};

fn main() -> fusion_coag::Result<()> {
    let v = 1.0;
    let a0 = 10.0 * sphere_area(v);

    // mu = 0 relaxes exponentially; compare the integrator with the closed form
    let f0 = FusionSpec::new(1.0, 0.0, 0.0)?;
    let mut phys = FlowParams::physical(f0, 1e-10)?;
    phys.exact_paths = false;
    for t in [0.1, 1.0, 5.0] {
        let end = integrate_characteristic(&phys, a0, v, t)?;
        let exact = relaxation_closed_form(&f0, a0, v, t);
        println!("t={t:<4} a={:.10} closed form {:.10}", end.a, exact);
    }

    // self-similar frame: volume shrinks like e^-tau while fusion pulls toward the sphere
    let f = FusionSpec::new(1.0, 1.0, 0.0)?;
    let trunc = TruncationParams::new(1e-3, 1e3, 1e-3, &f)?;
    let ss = FlowParams::selfsim(f, trunc, 1e-9)?;
    println!("{:>5} {:>12} {:>12} {:>8} {:>8}", "tau", "A", "V", "ratio", "h");
    for (tau, end) in trace_characteristic(&ss, a0, v, 4.0, 8)? {
        println!("{tau:>5} {:>12.6} {:>12.6} {:>8.4} {:>8.4}", end.a, end.v, end.a / sphere_area(end.v), end.h);
    }
    Ok(())
}
