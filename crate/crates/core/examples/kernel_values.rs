//! Coagulation kernel, fusion rate and their truncated forms at a few points.

use fusion_coag::kernels::{
    eval_coag_kernel, eval_fusion, fusion_delta, ode_fusion, sphere_area, theta_eps, truncated_kernel, FusionSpec,
    KernelSpec, TruncationParams,
};

fn main() -> fusion_coag::Result<()> {
    let k = KernelSpec::new(2.0, 0.5, 0.5, 0.0)?;
    println!("regime {:?}, gamma {}", k.regime(), k.gamma());
    for (v, v2) in [(1.0, 1.0), (4.0, 1.0), (0.01, 100.0)] {
        let (a, a2) = (sphere_area(v), 3.0 * sphere_area(v2));
        println!("K(v={v}, v'={v2}) = {:.6}", eval_coag_kernel(&k, a, v, a2, v2)?);
    }

    // area modulation stays within the two-sided bounds
    let kt = KernelSpec::new(1.0, 0.5, 0.75, 0.5)?;
    let (v, v2) = (2.0, 0.5);
    let sph = eval_coag_kernel(&kt, sphere_area(v), v, sphere_area(v2), v2)?;
    let rough = eval_coag_kernel(&kt, 20.0 * sphere_area(v), v, 20.0 * sphere_area(v2), v2)?;
    println!("theta=0.5: spheres {sph:.4}, rough {rough:.4}, majorant {:.4}", kt.majorant(v, v2));

    let f = FusionSpec::new(2.0, 1.0, 0.0)?;
    println!("sigma {} ; r(2, 1) = {}", f.sigma(), eval_fusion(&f, 2.0, 1.0)?);
    println!("d/da [r (a - c0 v^2/3)] at a=10, v=1: {:.4}", ode_fusion(&f, 10.0, 1.0)?);

    let tr = TruncationParams::new(0.1, 10.0, 1e-3, &f)?;
    println!("L = {}, cap = {:.4}", tr.l, k.cap(&tr));
    for v in [0.05, 0.15, 0.3] {
        println!("theta_eps({v}) = {:.4}", theta_eps(&tr, v)?);
    }
    let big = truncated_kernel(&k, &tr, sphere_area(12.0), 12.0, sphere_area(9.0), 9.0)?;
    println!("K_eps,R beyond the volume cutoff: {big}");
    println!("r_delta(10, 1) = {:.6} vs r = {:.6}", fusion_delta(&f, &tr, 10.0, 1.0)?, f.value(10.0, 1.0));
    Ok(())
}
