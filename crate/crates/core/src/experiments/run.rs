use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_trajectories, Scenario, ScenarioKind, Solver, SweepParam, MIN_SUCCESS_FRACTION};
use crate::algebra::{build_three_level_basis, build_two_level_basis, CollectiveBasis, Occupation};
use crate::error::{Error, Result};
use crate::lindblad::{evolve_with, steady_state, HamiltonianSpec, LindbladProblem};
use crate::mcwf::{run_ensemble, FailurePolicy, TrajectoryConfig, RNG_ALGORITHM};
use crate::meanfield::{default_tipping_angle, mf_delay, mf_evolve, mf_steady, SteadyRegime};
use crate::observables::{
    peak_intensity_per_atom, series_from_samples, PeakEstimate, Probe, PulseSummary, Sample,
    TimeSeries,
};
use crate::ode::uniform_grid;
use crate::state::{all_excited_state, all_metastable_state, basis_state, DensityOperator};

/// Fraction of the peak above which a nonzero endpoint intensity means the
/// time window cut the pulse off.
const ENDPOINT_FRACTION: f64 = 0.01;

/// Parameters of one sweep point with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointParams {
    pub n_atoms: usize,
    pub gamma: f64,
    pub omega: f64,
    pub omega0: f64,
    pub delta: f64,
    pub pulse_length: f64,
    pub t_max: Option<f64>,
    pub n_samples: usize,
    pub n_trajectories: Option<usize>,
    pub master_seed: Option<u64>,
}

/// Worst invariant deviations seen over a run; `None` where not applicable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub trace: Option<f64>,
    pub hermiticity: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub norm: Option<f64>,
}

impl Conservation {
    pub fn within_tolerances(&self) -> bool {
        use crate::state::{HERMITICITY_TOL, NORM_TOL, POSITIVITY_TOL, TRACE_TOL};
        self.trace.is_none_or(|v| v <= TRACE_TOL)
            && self.hermiticity.is_none_or(|v| v <= HERMITICITY_TOL)
            && self.min_eigenvalue.is_none_or(|v| v >= -POSITIVITY_TOL)
            && self.norm.is_none_or(|v| v <= NORM_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyPoint {
    pub jz_per_n: f64,
    pub intensity: f64,
    pub intensity_per_atom: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<SteadyRegime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_trajectories: usize,
    pub n_succeeded: usize,
    pub master_seed: u64,
    pub rng: String,
    pub mean_jumps: f64,
    pub max_jumps: usize,
    /// `(trajectory index, error)`
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub series: Option<TimeSeries>,
    pub pulse: Option<PulseSummary>,
    pub peak_per_atom: Option<PeakEstimate>,
    /// Mean-field delay `ln N / (γN)` for comparison.
    pub delay_mf: Option<f64>,
    pub steady: Option<SteadyPoint>,
    pub steady_mf: Option<SteadyPoint>,
    pub ensemble: Option<EnsembleStats>,
    pub conservation: Conservation,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub params: PointParams,
    pub result: Option<PointResult>,
    /// Why `result` is missing.
    pub error: Option<String>,
}

/// Everything a run produced except wall-clock time, so that repeated runs
/// serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub version: String,
    pub points: Vec<PointRecord>,
}

impl RunRecord {
    pub fn failed_points(&self) -> impl Iterator<Item = &PointRecord> {
        self.points.iter().filter(|p| p.error.is_some())
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")))
    }
}

/// Resolve the parameters of sweep point `index`.
pub fn point_params(s: &Scenario, index: usize) -> Result<PointParams> {
    let mut p = PointParams {
        n_atoms: s.n_atoms,
        gamma: s.gamma,
        omega: s.omega,
        omega0: s.omega0,
        delta: s.delta,
        pulse_length: s.pulse_length,
        t_max: s.t_max,
        n_samples: s.n_samples,
        n_trajectories: None,
        master_seed: None,
    };
    if let Some(sw) = &s.sweep {
        let v = *sw.values.get(index).ok_or_else(|| {
            Error::InvalidParameter(format!("sweep point {index} out of range"))
        })?;
        match sw.param {
            SweepParam::N => p.n_atoms = v as usize,
            SweepParam::Gamma => p.gamma = v,
            SweepParam::Omega => p.omega = v,
            SweepParam::Omega0 => p.omega0 = v,
            SweepParam::Delta => p.delta = v,
            SweepParam::PulseLength => p.pulse_length = v,
        }
    }
    if p.n_atoms == 0 {
        return Err(Error::ZeroAtoms);
    }
    positive("gamma", p.gamma)?;
    non_negative("omega", p.omega)?;
    non_negative("omega0", p.omega0)?;
    if !p.delta.is_finite() {
        return Err(Error::InvalidParameter("delta must be finite".into()));
    }
    match s.kind {
        ScenarioKind::FreeDecay => {
            if p.t_max.is_none() {
                p.t_max = Some(if p.n_atoms == 1 {
                    10.0 / p.gamma
                } else {
                    10.0 * mf_delay(p.gamma, p.n_atoms as f64)
                });
            }
        }
        ScenarioKind::DrivenSteady => p.t_max = None,
        ScenarioKind::RamanPulse => {
            positive("pulse_length", p.pulse_length)?;
            if p.t_max.is_none() {
                p.t_max = Some(1.5 * p.pulse_length);
            }
        }
    }
    if s.solver == Solver::Mcwf {
        p.n_trajectories = Some(s.n_trajectories.unwrap_or_else(|| default_trajectories(p.n_atoms)));
        p.master_seed = Some(s.master_seed);
    }
    Ok(p)
}

/// Master-equation evolution sampled into the standard channels, with the
/// worst invariant deviations over all snapshots.
pub fn master_series(
    problem: &LindbladProblem<f64>,
    rho0: &DensityOperator<f64>,
    t_grid: &[f64],
) -> Result<(TimeSeries, Conservation)> {
    let basis = problem.basis();
    let probe = Probe::new(basis, problem.gamma())?;
    let mut samples = Vec::with_capacity(t_grid.len());
    let mut cons = Conservation {
        trace: Some(0.0),
        hermiticity: Some(0.0),
        min_eigenvalue: Some(1.0),
        norm: None,
    };
    evolve_with(problem, rho0, t_grid, |_, _, rho| {
        samples.push(probe.sample_density(rho));
        let r = rho.validate();
        cons.trace = cons.trace.map(|v| v.max(r.trace));
        cons.hermiticity = cons.hermiticity.map(|v| v.max(r.hermiticity));
        cons.min_eigenvalue = cons.min_eigenvalue.map(|v| v.min(r.min_eigenvalue));
        Ok(())
    })?;
    let series = series_from_samples(t_grid.to_vec(), &samples, basis.kind(), basis.n_atoms())?;
    Ok((series, cons))
}

fn endpoint_warning(series: &TimeSeries, pulse: &PulseSummary) -> Option<String> {
    let last = *series.intensity().ok()?.last()?;
    (pulse.peak_value > 0.0 && last > ENDPOINT_FRACTION * pulse.peak_value).then(|| {
        format!(
            "intensity at t_max is {:.3}% of the peak; the window may cut the pulse",
            100.0 * last / pulse.peak_value
        )
    })
}

fn ensemble_point(
    problem: LindbladProblem<f64>,
    psi0: crate::state::StateVector<f64>,
    grid: Vec<f64>,
    p: &PointParams,
    policy: FailurePolicy,
    out: &mut PointResult,
) -> Result<TimeSeries> {
    let n_traj = p.n_trajectories.unwrap_or_else(|| default_trajectories(p.n_atoms));
    let seed = p.master_seed.unwrap_or_default();
    let ens = run_ensemble(&TrajectoryConfig {
        n_trajectories: n_traj,
        master_seed: seed,
        t_grid: grid,
        problem,
        psi0,
        policy,
    })?;
    let jumps = &ens.jump_counts;
    out.ensemble = Some(EnsembleStats {
        n_trajectories: n_traj,
        n_succeeded: ens.n_succeeded(),
        master_seed: seed,
        rng: RNG_ALGORITHM.to_string(),
        mean_jumps: jumps.iter().sum::<usize>() as f64 / jumps.len().max(1) as f64,
        max_jumps: jumps.iter().copied().max().unwrap_or(0),
        failures: ens.failures.clone(),
    });
    if ens.flagged() {
        out.warnings.push(format!(
            "{} of {} trajectories failed; ensemble kept",
            ens.failures.len(),
            n_traj
        ));
    }
    out.conservation = Conservation {
        norm: Some(ens.max_norm_deviation),
        ..Conservation::default()
    };
    Ok(ens.series)
}

fn two_level(n: usize) -> Result<Arc<CollectiveBasis>> {
    build_two_level_basis(n)
}

/// Run one sweep point.
pub fn run_point(s: &Scenario, p: &PointParams) -> Result<PointResult> {
    let mut out = PointResult::default();
    let n = p.n_atoms;
    match s.kind {
        ScenarioKind::FreeDecay => {
            let t_max = p.t_max.expect("resolved");
            let grid = uniform_grid(t_max, p.n_samples);
            let series = match s.solver {
                Solver::Master => {
                    let basis = two_level(n)?;
                    let problem = LindbladProblem::new(basis.clone(), HamiltonianSpec::None, p.gamma)?;
                    let (series, cons) = master_series(&problem, &all_excited_state(&basis)?, &grid)?;
                    out.conservation = cons;
                    series
                }
                Solver::Mcwf => {
                    let basis = two_level(n)?;
                    let problem = LindbladProblem::new(basis.clone(), HamiltonianSpec::None, p.gamma)?;
                    let psi0 = basis_state(&basis, Occupation { n_s: 0, n_e: n, n_g: 0 })?;
                    ensemble_point(problem, psi0, grid, p, FailurePolicy::Strict, &mut out)?
                }
                Solver::Meanfield => {
                    let nf = n as f64;
                    let traj = mf_evolve(0.0, 0.0, p.gamma, nf, default_tipping_angle(nf), &grid)?;
                    let samples: Vec<Sample> = traj
                        .iter()
                        .map(|st| Sample {
                            intensity: p.gamma * st.j_plus_j_minus(),
                            populations: [0.0, 0.5 * nf + st.j_z, 0.5 * nf - st.j_z],
                        })
                        .collect();
                    series_from_samples(grid.clone(), &samples, crate::algebra::BasisKind::TwoLevel, n)?
                }
            };
            let pulse = series.pulse_summary()?;
            out.warnings.extend(endpoint_warning(&series, &pulse));
            out.peak_per_atom = Some(peak_intensity_per_atom(&series, n)?);
            out.pulse = Some(pulse);
            out.delay_mf = (n >= 2).then(|| mf_delay(p.gamma, n as f64));
            out.series = Some(series);
        }
        ScenarioKind::DrivenSteady => {
            let nf = n as f64;
            let mf = mf_steady(p.omega, p.gamma, nf)?;
            let steady_mf = SteadyPoint {
                jz_per_n: mf.j_z / nf,
                intensity: p.gamma * mf.j_plus_j_minus,
                intensity_per_atom: p.gamma * mf.j_plus_j_minus / nf,
                regime: Some(mf.regime),
            };
            out.steady = Some(match s.solver {
                Solver::Master => {
                    let basis = two_level(n)?;
                    let problem = LindbladProblem::new(
                        basis.clone(),
                        HamiltonianSpec::ConstantDrive {
                            omega: p.omega,
                            delta: 0.0,
                        },
                        p.gamma,
                    )?;
                    let rho = steady_state(&problem)?;
                    let r = rho.validate();
                    out.conservation = Conservation {
                        trace: Some(r.trace),
                        hermiticity: Some(r.hermiticity),
                        min_eigenvalue: Some(r.min_eigenvalue),
                        norm: None,
                    };
                    let sample = Probe::new(&basis, p.gamma)?.sample_density(&rho);
                    SteadyPoint {
                        jz_per_n: sample.jz() / nf,
                        intensity: sample.intensity,
                        intensity_per_atom: sample.intensity / nf,
                        regime: None,
                    }
                }
                _ => steady_mf,
            });
            out.steady_mf = Some(steady_mf);
        }
        ScenarioKind::RamanPulse => {
            let basis = build_three_level_basis(n)?;
            let spec = HamiltonianSpec::RamanPulse {
                omega0: p.omega0,
                pulse_length: p.pulse_length,
                delta: p.delta,
            };
            let problem = LindbladProblem::new(basis.clone(), spec, p.gamma)?;
            let grid = uniform_grid(p.t_max.expect("resolved"), p.n_samples);
            let psi0 = all_metastable_state(&basis)?;
            let series = match s.solver {
                Solver::Master => {
                    let (series, cons) = master_series(&problem, &psi0.to_density(), &grid)?;
                    out.conservation = cons;
                    series
                }
                _ => ensemble_point(
                    problem,
                    psi0,
                    grid,
                    p,
                    FailurePolicy::Tolerant {
                        min_success_fraction: MIN_SUCCESS_FRACTION,
                    },
                    &mut out,
                )?,
            };
            let pulse = series.pulse_summary()?;
            out.warnings.extend(endpoint_warning(&series, &pulse));
            out.peak_per_atom = Some(peak_intensity_per_atom(&series, n)?);
            out.pulse = Some(pulse);
            out.series = Some(series);
        }
    }
    if !out.conservation.within_tolerances() {
        out.warnings.push(format!(
            "state invariants exceeded tolerance: {:?}",
            out.conservation
        ));
    }
    for w in &out.warnings {
        log::warn!("{} point (N = {n}, gamma = {}): {w}", s.kind.name(), p.gamma);
    }
    Ok(out)
}

/// Run every sweep point, concurrently on a pool of `jobs` threads when
/// given (the global pool otherwise). Points come back in sweep order and
/// failures are recorded per point rather than aborting the run.
pub fn run_scenario(s: &Scenario, jobs: Option<usize>) -> Result<RunRecord> {
    s.validate()?;
    let work = || -> Vec<PointRecord> {
        (0..s.point_count())
            .into_par_iter()
            .map(|index| {
                let params = point_params(s, index).expect("validated");
                let sweep_value = s.sweep.as_ref().map(|sw| sw.values[index]);
                match run_point(s, &params) {
                    Ok(r) => PointRecord {
                        index,
                        sweep_value,
                        params,
                        result: Some(r),
                        error: None,
                    },
                    Err(e) => PointRecord {
                        index,
                        sweep_value,
                        params,
                        result: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    };
    let points = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(RunRecord {
        scenario: s.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Sweep;

    #[test]
    fn single_atom_free_decay_is_a_boundary_peak() {
        let mut s = Scenario::new(ScenarioKind::FreeDecay);
        s.n_atoms = 1;
        let rec = run_scenario(&s, Some(1)).unwrap();
        let r = rec.points[0].result.as_ref().unwrap();
        assert!(r.pulse.unwrap().boundary);
        assert!(r.delay_mf.is_none());
        assert!(r.conservation.within_tolerances());
        assert_eq!(rec.points[0].params.t_max, Some(10.0));
    }

    #[test]
    fn zero_drive_raman_emits_nothing() {
        let mut s = Scenario::new(ScenarioKind::RamanPulse);
        s.n_atoms = 3;
        s.omega0 = 0.0;
        s.n_trajectories = Some(5);
        s.n_samples = 31;
        let rec = run_scenario(&s, Some(2)).unwrap();
        let r = rec.points[0].result.as_ref().unwrap();
        assert!(r.series.as_ref().unwrap().intensity().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(r.ensemble.as_ref().unwrap().max_jumps, 0);
    }

    #[test]
    fn points_come_back_in_sweep_order() {
        let mut s = Scenario::new(ScenarioKind::FreeDecay);
        s.n_atoms = 3;
        s.sweep = Some(Sweep {
            param: SweepParam::Gamma,
            values: vec![1.0, 2.0],
        });
        let rec = run_scenario(&s, None).unwrap();
        assert_eq!(rec.points.len(), 2);
        assert_eq!(rec.points[1].sweep_value, Some(2.0));
        assert_eq!(rec.points[1].params.gamma, 2.0);
        assert_eq!(rec.failed_points().count(), 0);
    }
}
