use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use super::output::write_outputs;
use super::verify::run_verify;
use super::{run_scenario, Scenario, ScenarioKind, Solver, Sweep, SweepParam};
use crate::error::{Error, Result};

const DEFAULT_OUT: &str = "superrad_out";
const OUT_ENV: &str = "SUPERRAD_OUT";

#[derive(Parser, Debug)]
#[command(name = "superrad", version, about = "Dicke superradiance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Free decay of N fully excited two-level atoms.
    FreeDecay(RunArgs),
    /// Steady state of the resonantly driven two-level ensemble.
    DrivenSteady(RunArgs),
    /// Raman pulse on N Λ atoms starting in the metastable level.
    RamanPulse(RunArgs),
    /// Operator algebra and product-space oracle self-checks.
    Verify {
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by the scenario subcommands. A config file supplies the
/// same keys as flat JSON; flags given on the command line win.
#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunArgs {
    /// Atom number.
    #[arg(long)]
    n: Option<usize>,
    /// Collective decay rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// Constant Rabi frequency (driven steady state).
    #[arg(long)]
    omega: Option<f64>,
    /// Peak Rabi frequency of the Raman pulse.
    #[arg(long)]
    omega0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Raman pulse length T.
    #[arg(long)]
    pulse_length: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Number of sample times.
    #[arg(long)]
    samples: Option<usize>,
    /// Trajectories per sweep point (quantum-jump solver).
    #[arg(long)]
    trajectories: Option<usize>,
    /// Master seed of the trajectory generators.
    #[arg(long)]
    seed: Option<u64>,
    /// <param>:<start>:<stop>:<count>[:log]
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory [default: $SUPERRAD_OUT, else ./superrad_out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat JSON file with any of the keys above.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            n: self.n.or(file.n),
            gamma: self.gamma.or(file.gamma),
            omega: self.omega.or(file.omega),
            omega0: self.omega0.or(file.omega0),
            delta: self.delta.or(file.delta),
            pulse_length: self.pulse_length.or(file.pulse_length),
            t_max: self.t_max.or(file.t_max),
            samples: self.samples.or(file.samples),
            trajectories: self.trajectories.or(file.trajectories),
            seed: self.seed.or(file.seed),
            sweep: self.sweep.or(file.sweep),
            solver: self.solver.or(file.solver),
            jobs: self.jobs.or(file.jobs),
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

fn read_config(path: &Path) -> Result<RunArgs> {
    let text = fs::read_to_string(path)?;
    let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)?;
    // accept both `pulse-length` and `pulse_length`
    let norm: serde_json::Map<_, _> = raw
        .into_iter()
        .map(|(k, v)| (k.replace('-', "_"), v))
        .collect();
    Ok(serde_json::from_value(serde_json::Value::Object(norm))?)
}

/// Default γ sweep of the driven steady state: `γN/Ω` log-spaced over
/// `[0.1, 10]` in 25 points.
fn default_steady_sweep(n: usize, omega: f64) -> Result<Sweep> {
    let mut s = Sweep::range(SweepParam::Gamma, 0.1, 10.0, 25, true)?;
    s.values.iter_mut().for_each(|x| *x *= omega / n as f64);
    Ok(s)
}

fn build_scenario(kind: ScenarioKind, a: &RunArgs) -> Result<Scenario> {
    let mut s = Scenario::new(kind);
    if let Some(v) = a.n {
        s.n_atoms = v;
    }
    if let Some(v) = a.gamma {
        s.gamma = v;
    }
    if let Some(v) = a.omega {
        s.omega = v;
    }
    if let Some(v) = a.omega0 {
        s.omega0 = v;
    }
    if let Some(v) = a.delta {
        s.delta = v;
    }
    if let Some(v) = a.pulse_length {
        s.pulse_length = v;
    }
    s.t_max = a.t_max.or(s.t_max);
    if let Some(v) = a.samples {
        s.n_samples = v;
    }
    s.n_trajectories = a.trajectories.or(s.n_trajectories);
    if let Some(v) = a.seed {
        s.master_seed = v;
    }
    if let Some(v) = a.solver {
        s.solver = v;
    }
    s.sweep = match &a.sweep {
        Some(text) => Some(text.parse()?),
        None if kind == ScenarioKind::DrivenSteady && a.gamma.is_none() => {
            Some(default_steady_sweep(s.n_atoms.max(1), s.omega)?)
        }
        None => None,
    };
    s.validate()?;
    Ok(s)
}

fn out_dir(a: &RunArgs) -> PathBuf {
    a.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_) | Error::InvalidLevel(_) | Error::ZeroAtoms | Error::Json(_)
    )
}

fn run_kind(kind: ScenarioKind, args: RunArgs) -> i32 {
    let file = match &args.config {
        Some(p) => match read_config(p) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", p.display());
                return 2;
            }
        },
        None => RunArgs::default(),
    };
    let args = args.or(file);
    let scenario = match build_scenario(kind, &args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let start = Instant::now();
    let record = match run_scenario(&scenario, args.jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_usage(&e) { 2 } else { 1 };
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let dir = out_dir(&args);
    let files = match write_outputs(&record, &dir) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: writing outputs to {}: {e}", dir.display());
            return 1;
        }
    };
    // wall-clock time lives apart from the record so reruns stay identical
    let timing = serde_json::json!({ "wall_clock_seconds": elapsed });
    let timing_path = dir.join(format!("{}_timing.json", kind.name()));
    if let Err(e) = fs::write(&timing_path, format!("{timing}\n")) {
        eprintln!("error: writing {}: {e}", timing_path.display());
        return 1;
    }
    println!(
        "{}: {} point(s) in {elapsed:.2} s -> {}",
        kind.name(),
        record.points.len(),
        files.summary.display()
    );
    let mut failed = false;
    for p in record.failed_points() {
        failed = true;
        let at = p
            .sweep_value
            .map(|v| format!(" ({} = {v})", scenario.sweep.as_ref().unwrap().param.name()))
            .unwrap_or_default();
        eprintln!(
            "error: sweep point {}{at} failed: {}",
            p.index,
            p.error.as_deref().unwrap_or("")
        );
    }
    i32::from(failed)
}

fn verify(out: Option<PathBuf>) -> i32 {
    let report = match run_verify() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    for c in &report.checks {
        println!(
            "{} {:<40} {:.3e} (tolerance {:.0e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if let Some(dir) = out {
        let write = fs::create_dir_all(&dir).map_err(Error::from).and_then(|_| {
            let json = serde_json::to_string_pretty(&report)?;
            fs::write(dir.join("verify.json"), json + "\n")?;
            Ok(())
        });
        if let Err(e) = write {
            eprintln!("error: {e}");
            return 1;
        }
    }
    i32::from(!report.all_pass())
}

/// Parse `args` (program name first) and run; returns the exit code:
/// 0 on success, 2 for usage errors, 1 for numerical or I/O failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::FreeDecay(a) => run_kind(ScenarioKind::FreeDecay, a),
        Command::DrivenSteady(a) => run_kind(ScenarioKind::DrivenSteady, a),
        Command::RamanPulse(a) => run_kind(ScenarioKind::RamanPulse, a),
        Command::Verify { out } => verify(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_overrides_config() {
        let file = RunArgs {
            n: Some(7),
            gamma: Some(3.0),
            ..RunArgs::default()
        };
        let cli = RunArgs {
            gamma: Some(0.5),
            ..RunArgs::default()
        };
        let m = cli.or(file);
        assert_eq!(m.n, Some(7));
        assert_eq!(m.gamma, Some(0.5));
    }

    #[test]
    fn steady_default_sweep_spans_ratio() {
        let s = build_scenario(ScenarioKind::DrivenSteady, &RunArgs::default()).unwrap();
        let sw = s.sweep.unwrap();
        assert_eq!(sw.values.len(), 25);
        assert!((sw.values[0] * 20.0 - 0.1).abs() < 1e-12);
        assert!((sw.values[24] * 20.0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(cli_main(["superrad", "bogus"]), 2);
        assert_eq!(cli_main(["superrad", "free-decay", "--n", "0"]), 2);
        assert_eq!(cli_main(["superrad", "raman-pulse", "--solver", "meanfield"]), 2);
        assert_eq!(cli_main(["superrad", "free-decay", "--sweep", "gamma:1"]), 2);
    }
}
