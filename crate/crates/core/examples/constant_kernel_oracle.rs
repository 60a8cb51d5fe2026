//! Mean particle count of the constant kernel against 2 n0 / (2 + n0 t).

use fusion_coag::config::RunConfig;
use fusion_coag::coag_mc::{EngineConfig, MajorantMode};
use fusion_coag::experiments::{run_replicas, InitialConfig, InitialKind};
use fusion_coag::kernels::KernelSpec;
use fusion_coag::moments::{check_constant_kernel_oracle, oracle_constant_kernel_count};

fn main() -> fusion_coag::Result<()> {
    let cfg = RunConfig {
        kernel: KernelSpec::constant(1.0)?,
        fusion: None,
        truncation: None,
        initial: InitialConfig::new(InitialKind::MonodisperseSphere, 2000),
        engine: EngineConfig { t_end: 2.0, record_every: 0.5, majorant: MajorantMode::Exact, ..Default::default() },
        replicas: 20,
    };
    let runs = run_replicas(&cfg)?;
    let m00 = runs.mean.moment(0.0, 0.0)?;
    let sem = runs.sem.moment(0.0, 0.0)?;
    for (i, t) in runs.mean.clocks().iter().enumerate() {
        println!("t={t:<4} M_0_0 = {:.5} ± {:.5}  oracle {:.5}", m00[i], sem[i], oracle_constant_kernel_count(m00[0], *t));
    }
    let rep = check_constant_kernel_oracle(&runs.mean, Some(&runs.sem), &[0.5, 1.0, 2.0], 3.0)?;
    println!("{}", rep.table());
    Ok(())
}
