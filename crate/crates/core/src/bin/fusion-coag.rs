use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fusion_coag::config::RunConfig;
use fusion_coag::experiments::{run_replicas, run_scenario, Scenario, ScenarioName};
use fusion_coag::moments::{
    check_d_invariant_region, check_physical_monotonicity, check_plateau, DiagnosticReport,
};
use fusion_coag::selfsim::{extract_profile, profile_distance, rescale_series, BinGrid};
use fusion_coag::state::{Ensemble, Frame, MomentSeries};
use fusion_coag::{Error, Result};

#[derive(Parser)]
#[command(name = "fusion-coag", version, about = "Coagulation with surface fusion: simulation and diagnostics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    frame: Option<FrameArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Physical,
    SelfSimilar,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Physical => Frame::Physical,
            FrameArg::SelfSimilar => Frame::SelfSimilar,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named scenario and its checks; exits non-zero when a check fails.
    Run {
        scenario: String,
        /// Particles per replica.
        #[arg(long)]
        particles: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the replicas described by a JSON config file.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Diagnostics on moment-series CSV files; several files are averaged.
    Analyze {
        #[arg(required = true)]
        series: Vec<PathBuf>,
        /// Kernel homogeneity used for rescaling.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Rescaled profiles of physical-frame ensemble CSVs and their distances.
    Profile {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        /// Clock of each snapshot; by default read from a `_t<clock>` file-name suffix.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 12)]
        nv: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run { scenario, particles, common } => cmd_run(&scenario, particles, &common),
        Cmd::Simulate { config, common } => cmd_simulate(&config, &common),
        Cmd::Analyze { series, gamma, common } => cmd_analyze(&series, gamma, &common),
        Cmd::Profile { snapshots, times, gamma, nx, nv, common } => {
            cmd_profile(&snapshots, times, gamma, nx, nv, &common)
        }
    }
}

fn cmd_run(name: &str, particles: Option<usize>, c: &Common) -> Result<bool> {
    let name: ScenarioName = name.parse()?;
    let mut s = Scenario::preset(name)?;
    if let Some(f) = c.frame {
        if Frame::from(f) != s.config.engine.frame {
            return Err(Error::WrongFrame(format!("{name} runs in the {} frame", s.config.engine.frame)));
        }
    }
    if particles.is_some() || c.replicas.is_some() {
        let n = particles.unwrap_or(s.config.initial.n);
        let r = c.replicas.unwrap_or(s.config.replicas);
        s = s.scaled(n, r)?;
    }
    if let Some(seed) = c.seed {
        s = s.with_seed(seed);
    }
    let report = run_scenario(&s, c.out.as_deref())?;
    println!("{}", report.checks.table());
    println!("{name}: {}", if report.passed { "PASS" } else { "FAIL" });
    Ok(report.passed)
}

fn cmd_simulate(path: &Path, c: &Common) -> Result<bool> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = c.seed {
        cfg.engine.seed = seed;
    }
    if let Some(r) = c.replicas {
        cfg.replicas = r;
    }
    if let Some(f) = c.frame {
        if Frame::from(f) != cfg.engine.frame {
            return Err(Error::WrongFrame(format!("config runs in the {} frame", cfg.engine.frame)));
        }
    }
    let runs = run_replicas(&cfg)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    runs.mean.write_csv(&out.join("series_mean.csv"))?;
    runs.sem.write_csv(&out.join("series_sem.csv"))?;
    for (r, o) in runs.outputs.iter().enumerate() {
        o.series.write_csv(&out.join(format!("series_r{r}.csv")))?;
        o.ensemble.write_csv(&out.join(format!("ensemble_r{r}_t{}.csv", o.ensemble.clock)))?;
        for s in &o.snapshots {
            s.write_csv(&out.join(format!("ensemble_r{r}_t{}.csv", s.clock)))?;
        }
    }
    std::fs::write(out.join("events.json"), serde_json::to_string_pretty(&runs.log)?)?;
    println!(
        "{} replicas, {} merges, acceptance {:.3}, output in {}",
        cfg.replicas,
        runs.log.accepted,
        runs.log.acceptance_rate(),
        out.display()
    );
    Ok(true)
}

fn cmd_analyze(paths: &[PathBuf], gamma: f64, c: &Common) -> Result<bool> {
    let series = paths.iter().map(|p| MomentSeries::read_csv(p)).collect::<Result<Vec<_>>>()?;
    let (mean, sem) = MomentSeries::aggregate(&series)?;
    let sem = (series.len() > 1).then_some(sem);
    let frame = c.frame.map(Frame::from).unwrap_or(Frame::Physical);
    let mut rep = DiagnosticReport::default();
    match frame {
        Frame::Physical => {
            for s in &series {
                rep.extend(check_physical_monotonicity(s)?);
            }
            let clocks = mean.clocks();
            let t_end = clocks.last().copied().unwrap_or(0.0);
            let rescaled = rescale_series(&mean, gamma)?;
            let cols: Vec<String> = mean.keys.iter().map(|k| k.column_name()).collect();
            let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
            if clocks.iter().filter(|&&t| t >= 0.1 * t_end).count() >= 2 {
                rep.extend(check_plateau(&rescaled, &cols, 0.1 * t_end, t_end, 0.1)?);
            }
        }
        Frame::SelfSimilar => {
            if mean.key_index(1.0, 0.0).is_some() && mean.key_index(2.0, 0.0).is_some() {
                rep.extend(check_d_invariant_region(&mean, sem.as_ref(), gamma, 3.0)?);
            }
        }
    }
    println!("{}", rep.table());
    if let Some(out) = &c.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("analysis.json"), rep.to_json()?)?;
    }
    Ok(rep.passed())
}

fn clock_from_name(path: &Path) -> Option<f64> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit_once("_t")?.1.parse().ok()
}

fn cmd_profile(
    paths: &[PathBuf],
    times: Option<Vec<f64>>,
    gamma: f64,
    nx: usize,
    nv: usize,
    c: &Common,
) -> Result<bool> {
    if c.frame.is_some_and(|f| Frame::from(f) != Frame::Physical) {
        return Err(Error::WrongFrame("profiles are taken from physical-frame snapshots".into()));
    }
    let clocks: Vec<f64> = match times {
        Some(ts) if ts.len() == paths.len() => ts,
        Some(ts) => {
            return Err(Error::InvalidParams(format!("{} times for {} snapshots", ts.len(), paths.len())))
        }
        None => paths
            .iter()
            .map(|p| {
                clock_from_name(p).ok_or_else(|| {
                    Error::InvalidParams(format!("no _t<clock> suffix in {}; pass --times", p.display()))
                })
            })
            .collect::<Result<_>>()?,
    };
    let mut ens = paths
        .iter()
        .zip(&clocks)
        .map(|(p, &t)| Ensemble::read_csv(p, Frame::Physical, t, 0))
        .collect::<Result<Vec<_>>>()?;
    ens.sort_by(|a, b| a.clock.total_cmp(&b.clock));
    let refs: Vec<&Ensemble> = ens.iter().collect();
    let grid = BinGrid::auto(&refs, gamma, nx, nv)?;
    let profiles = ens.iter().map(|e| extract_profile(e, e.clock, gamma, &grid)).collect::<Result<Vec<_>>>()?;
    println!("{:>12} {:>14} {:>14} {:>12}", "clock", "rescaled_M00", "out_of_range", "distance");
    for (i, p) in profiles.iter().enumerate() {
        let d = if i == 0 { f64::NAN } else { profile_distance(&profiles[i - 1], p)? };
        println!("{:>12.4} {:>14.6e} {:>14.3e} {:>12.4}", p.clock, p.rescaled_mass, p.out_of_range, d);
    }
    if let Some(out) = &c.out {
        std::fs::create_dir_all(out)?;
        for p in &profiles {
            p.write_csv(&out.join(format!("profile_t{}.csv", p.clock)))?;
        }
    }
    Ok(true)
}
