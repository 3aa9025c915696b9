//! Scripted scenarios behind the figures: free decay, the driven steady
//! state and the Raman pulse, with optional one-parameter sweeps.

mod cli;
mod output;
mod run;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cli::cli_main;
pub use output::{format_float, write_outputs, write_series, OutputFiles};
pub use run::{
    master_series, point_params, run_point, run_scenario, Conservation, EnsembleStats, PointParams,
    PointRecord, PointResult, RunRecord, SteadyPoint,
};
pub use verify::{
    oracle_deviation, run_verify, single_atom_deviation, Check, VerifyReport, ALGEBRA_TOL,
    ANALYTIC_TOL, ORACLE_TOL,
};

/// Trajectory count used by the paper below/above its N threshold.
pub const SMALL_N_TRAJECTORIES: usize = 500;
pub const LARGE_N_TRAJECTORIES: usize = 100;
pub const SMALL_N_LIMIT: usize = 15;

/// Smallest fraction of trajectories that must succeed in a Raman ensemble.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreeDecay,
    DrivenSteady,
    RamanPulse,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FreeDecay => "free_decay",
            ScenarioKind::DrivenSteady => "driven_steady",
            ScenarioKind::RamanPulse => "raman_pulse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Master,
    Mcwf,
    Meanfield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    Gamma,
    Omega,
    Omega0,
    Delta,
    PulseLength,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::Gamma => "gamma",
            SweepParam::Omega => "omega",
            SweepParam::Omega0 => "omega0",
            SweepParam::Delta => "delta",
            SweepParam::PulseLength => "pulse_length",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "n" => SweepParam::N,
            "gamma" => SweepParam::Gamma,
            "omega" => SweepParam::Omega,
            "omega0" => SweepParam::Omega0,
            "delta" => SweepParam::Delta,
            "pulse_length" | "t" => SweepParam::PulseLength,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown sweep parameter `{other}`"
                )))
            }
        })
    }
}

/// A parameter and the values it takes, in sweep order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `start..=stop` in `count` points, geometric when `log`.
    pub fn range(param: SweepParam, start: f64, stop: f64, count: usize, log: bool) -> Result<Self> {
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(Error::InvalidParameter("sweep needs finite bounds and count >= 1".into()));
        }
        if log && !(start > 0.0 && stop > 0.0) {
            return Err(Error::InvalidParameter("log sweep bounds must be positive".into()));
        }
        let values = (0..count)
            .map(|i| {
                if count == 1 {
                    return start;
                }
                let f = i as f64 / (count - 1) as f64;
                if i == count - 1 {
                    stop
                } else if log {
                    (start.ln() + f * (stop.ln() - start.ln())).exp()
                } else {
                    start + f * (stop - start)
                }
            })
            .collect();
        let mut sweep = Sweep { param, values };
        if param == SweepParam::N {
            sweep.values.iter_mut().for_each(|v| *v = v.round());
            sweep.values.dedup();
        }
        Ok(sweep)
    }
}

impl FromStr for Sweep {
    type Err = Error;

    /// `<param>:<start>:<stop>:<count>[:log]`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("malformed sweep `{s}`, expected <param>:<start>:<stop>:<count>[:log]"));
        if !(4..=5).contains(&parts.len()) {
            return Err(bad());
        }
        let log = match parts.get(4) {
            None => false,
            Some(&"log") => true,
            Some(&"lin") => false,
            Some(_) => return Err(bad()),
        };
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let count = parts[3].parse::<usize>().map_err(|_| bad())?;
        Sweep::range(parts[0].parse()?, num(parts[1])?, num(parts[2])?, count, log)
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} over {} values", self.param.name(), self.values.len())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub solver: Solver,
    pub n_atoms: usize,
    pub gamma: f64,
    /// Constant Rabi frequency of the driven two-level system.
    pub omega: f64,
    /// Peak Rabi frequency of the Raman pulse.
    pub omega0: f64,
    pub delta: f64,
    pub pulse_length: f64,
    /// `None` picks the scenario default.
    pub t_max: Option<f64>,
    pub n_samples: usize,
    /// `None` picks the trajectory count by atom number.
    pub n_trajectories: Option<usize>,
    pub master_seed: u64,
    pub sweep: Option<Sweep>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let base = Scenario {
            kind,
            solver: Solver::Master,
            n_atoms: 20,
            gamma: 1.0,
            omega: 1.0,
            omega0: 1.0,
            delta: 0.0,
            pulse_length: 5.0,
            t_max: None,
            n_samples: 401,
            n_trajectories: None,
            master_seed: 42,
            sweep: None,
        };
        match kind {
            ScenarioKind::FreeDecay => base,
            ScenarioKind::DrivenSteady => Scenario {
                n_samples: 1,
                ..base
            },
            ScenarioKind::RamanPulse => Scenario {
                solver: Solver::Mcwf,
                delta: 1.0,
                n_samples: 301,
                ..base
            },
        }
    }

    /// Usage-level consistency checks; physics failures surface later.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match (self.kind, self.solver) {
            (ScenarioKind::RamanPulse, Solver::Meanfield) => {
                return bad("the Raman scenario has no mean-field solver".into())
            }
            (ScenarioKind::DrivenSteady, Solver::Mcwf) => {
                return bad("the steady state is computed with the master or mean-field solver".into())
            }
            _ => {}
        }
        if self.kind == ScenarioKind::DrivenSteady && self.delta != 0.0 {
            return bad("the driven steady state is resonant; delta must be 0".into());
        }
        if self.n_samples < 1 || (self.kind != ScenarioKind::DrivenSteady && self.n_samples < 3) {
            return bad(format!("need at least 3 samples, got {}", self.n_samples));
        }
        if self.n_trajectories == Some(0) {
            return bad("at least one trajectory is required".into());
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t_max must be positive, got {t}"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return bad("sweep has no values".into());
            }
            if sw.param == SweepParam::N
                && sw.values.iter().any(|v| !(*v >= 1.0 && v.fract() == 0.0))
            {
                return bad("atom-number sweep values must be positive integers".into());
            }
            if sw.param == SweepParam::Delta && self.kind == ScenarioKind::DrivenSteady {
                return bad("the driven steady state is resonant; delta cannot be swept".into());
            }
        }
        for i in 0..self.point_count() {
            point_params(self, i)?;
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.sweep.as_ref().map_or(1, |s| s.values.len())
    }
}

/// Trajectory count by atom number: 500 up to N = 15, 100 from N = 16 on
/// (the paper leaves 16..19 unassigned).
pub fn default_trajectories(n_atoms: usize) -> usize {
    if n_atoms <= SMALL_N_LIMIT {
        SMALL_N_TRAJECTORIES
    } else {
        LARGE_N_TRAJECTORIES
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "gamma:0.1:10:3:log".parse().unwrap();
        assert_eq!(s.param, SweepParam::Gamma);
        assert_eq!(s.values.len(), 3);
        assert!((s.values[1] - 1.0).abs() < 1e-14);
        assert_eq!(s.values[2], 10.0);
        let n: Sweep = "n:2:30:29".parse().unwrap();
        assert_eq!(n.values, (2..=30).map(|k| k as f64).collect::<Vec<_>>());
        let n: Sweep = "n:10:80:4:log".parse().unwrap();
        assert_eq!(n.values, vec![10.0, 20.0, 40.0, 80.0]);
        assert!("gamma:1:2".parse::<Sweep>().is_err());
        assert!("zeta:1:2:3".parse::<Sweep>().is_err());
        assert!("gamma:0:2:3:log".parse::<Sweep>().is_err());
        assert!("pulse-length:1:2:2".parse::<Sweep>().is_ok());
    }

    #[test]
    fn validation_rejects_incompatible_solvers() {
        let mut s = Scenario::new(ScenarioKind::RamanPulse);
        s.solver = Solver::Meanfield;
        assert!(s.validate().is_err());
        let mut s = Scenario::new(ScenarioKind::DrivenSteady);
        s.delta = 0.5;
        assert!(s.validate().is_err());
        assert!(Scenario::new(ScenarioKind::FreeDecay).validate().is_ok());
    }

    #[test]
    fn trajectory_defaults() {
        assert_eq!(default_trajectories(15), 500);
        assert_eq!(default_trajectories(16), 100);
        assert_eq!(default_trajectories(20), 100);
    }
}
