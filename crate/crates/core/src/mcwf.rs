//! Quantum-jump unraveling of the master equation.
//!
//! Between jumps a trajectory follows `dψ/dt = (-iH - (γ/2) J₊J₋) ψ`. The
//! jump time is found with the waiting-time method: draw `r` in (0, 1) and
//! jump when the squared norm of the unnormalized state falls to `r`. The
//! crossing is refined by bisection on the integrator's dense output. There
//! is a single collapse channel, so no channel selection is needed.

use nalgebra::DVector;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::algebra::emission_operator;
use crate::error::{Error, Result};
use crate::lindblad::{LindbladProblem, ABS_TOL, REL_TOL};
use crate::observables::{channel_names, Probe, Sample, TimeSeries, SE_SUFFIX};
use crate::ode::{check_grid, Dopri5, OdeSystem, StepControl};
use crate::scalar::{c_re, norm_sqr, pairwise_sum, Real, C};
use crate::state::StateVector;

/// Per-trajectory generator: ChaCha12 keyed by the master seed, one stream
/// per trajectory index.
pub const RNG_ALGORITHM: &str = "ChaCha12 (rand_chacha), stream = trajectory index";

/// Relative precision of the jump-time bisection.
pub const JUMP_TIME_RTOL: f64 = 1e-10;

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// What to do when individual trajectories fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailurePolicy {
    /// The first failure aborts the ensemble.
    Strict,
    /// Keep going as long as at least this fraction succeeds.
    Tolerant { min_success_fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig<R: Real> {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub t_grid: Vec<R>,
    pub problem: LindbladProblem<R>,
    pub psi0: StateVector<R>,
    pub policy: FailurePolicy,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub jump_times: Vec<f64>,
    /// Largest `|‖ψ‖ - 1|` of the sampled (normalized) states.
    pub max_norm_deviation: f64,
}

struct Drift<'a, R: Real> {
    problem: &'a LindbladProblem<R>,
}

impl<R: Real> OdeSystem<R, C<R>> for Drift<'_, R> {
    fn eval(&mut self, t: R, y: &[C<R>], dy: &mut [C<R>]) -> Result<()> {
        let zero = c_re(R::zero());
        dy.iter_mut().for_each(|z| *z = zero);
        self.problem.apply_drift(t, y, dy);
        Ok(())
    }
}

fn norm_sq<R: Real>(v: &[C<R>]) -> R {
    v.iter().fold(R::zero(), |a, z| a + norm_sqr(*z))
}

struct Recorder<'a, R: Real> {
    probe: Probe<R>,
    basis: &'a std::sync::Arc<crate::algebra::CollectiveBasis>,
    samples: Vec<Sample>,
    max_norm_deviation: f64,
}

impl<R: Real> Recorder<'_, R> {
    fn record(&mut self, amplitudes: &[C<R>]) -> Result<()> {
        let n2 = norm_sq(amplitudes);
        if !(n2 > R::zero()) {
            return Err(Error::NormUnderflow { t: f64::NAN });
        }
        let scale = R::one() / n2.sqrt();
        let psi = StateVector::new(
            self.basis.clone(),
            DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|z| *z * scale)),
        )?;
        let dev = (psi.norm() - R::one()).abs().as_f64();
        self.max_norm_deviation = self.max_norm_deviation.max(dev);
        self.samples.push(self.probe.sample_pure(&psi));
        Ok(())
    }
}

/// One trajectory; a deterministic function of its inputs and `rng`.
pub fn evolve_trajectory<R: Real>(
    problem: &LindbladProblem<R>,
    psi0: &StateVector<R>,
    t_grid: &[R],
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    check_grid(t_grid)?;
    if **psi0.basis() != **problem.basis() {
        return Err(Error::BasisMismatch);
    }
    let report = psi0.validate();
    if !report.within_tolerances() {
        return Err(Error::InvalidState(format!(
            "initial wave function norm deviates by {:e}",
            report.norm
        )));
    }
    let basis = problem.basis();
    let gamma = problem.gamma();
    let jumps_enabled = gamma > R::zero();
    let mut rec = Recorder {
        probe: Probe::new(basis, gamma)?,
        basis,
        samples: Vec::with_capacity(t_grid.len()),
        max_norm_deviation: 0.0,
    };
    let mut jump_times = Vec::new();

    let y0: Vec<C<R>> = psi0.amplitudes().iter().copied().collect();
    rec.record(&y0)?;
    let t_end = *t_grid.last().unwrap();
    let mut solver = Dopri5::new(
        Drift { problem },
        t_grid[0],
        y0,
        StepControl::new(ABS_TOL, REL_TOL),
    );
    let draw = |rng: &mut dyn rand::RngCore| R::lit(rng.sample::<f64, _>(Open01));
    // cumulative squared norm since the last jump, carried across
    // per-step renormalizations
    let mut cum = R::one();
    let mut threshold = if jumps_enabled { draw(rng) } else { R::zero() };
    let mut next = 1;
    let mut buf = vec![c_re(R::zero()); basis.dim()];
    let tiny = R::zero();

    while next < t_grid.len() {
        solver.step(t_end)?;
        let t_new = solver.t();
        let n2 = norm_sq(solver.y());
        if !n2.is_finite() {
            return Err(Error::NonFinite { t: t_new.as_f64() });
        }
        if jumps_enabled && cum * n2 <= threshold {
            // bracket [t_prev, t_new] and bisect on the dense output
            let (mut lo, mut hi) = (solver.t_prev(), t_new);
            let tol = R::lit(JUMP_TIME_RTOL) * hi.abs().max(hi - lo);
            for _ in 0..200 {
                if hi - lo <= tol {
                    break;
                }
                let mid = (lo + hi) * R::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                solver.interpolate(mid, &mut buf);
                if cum * norm_sq(&buf) <= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t_jump = hi;
            while next < t_grid.len() && t_grid[next] < t_jump {
                solver.interpolate(t_grid[next], &mut buf);
                rec.record(&buf)?;
                next += 1;
            }
            solver.interpolate(t_jump, &mut buf);
            let mut jumped = vec![c_re(R::zero()); buf.len()];
            problem
                .sparse_jump()
                .mul_vec_acc(c_re(R::one()), &buf, &mut jumped);
            let jn2 = norm_sq(&jumped);
            if !(jn2 > tiny) {
                return Err(Error::NormUnderflow { t: t_jump.as_f64() });
            }
            let s = R::one() / jn2.sqrt();
            jumped.iter_mut().for_each(|z| *z *= s);
            jump_times.push(t_jump.as_f64());
            // a grid time equal to the jump time sees the post-jump state
            while next < t_grid.len() && t_grid[next] == t_jump {
                rec.record(&jumped)?;
                next += 1;
            }
            solver.restart_at(t_jump, &jumped);
            cum = R::one();
            threshold = draw(rng);
            continue;
        }
        while next < t_grid.len() && t_grid[next] <= t_new {
            solver.interpolate(t_grid[next], &mut buf);
            rec.record(&buf)?;
            next += 1;
        }
        if !(n2 > tiny) {
            return Err(Error::NormUnderflow { t: t_new.as_f64() });
        }
        cum *= n2;
        solver.scale_linear(R::one() / n2.sqrt());
    }

    Ok(Trajectory {
        samples: rec.samples,
        jump_times,
        max_norm_deviation: rec.max_norm_deviation,
    })
}

/// Ensemble means with standard errors of the mean.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Mean channels followed by their `_se` companions.
    pub series: TimeSeries,
    /// Jump count of every successful trajectory, in index order.
    pub jump_counts: Vec<usize>,
    /// `(index, message)` for failed trajectories (tolerant policy only).
    pub failures: Vec<(usize, String)>,
    pub n_requested: usize,
    pub max_norm_deviation: f64,
}

impl EnsembleResult {
    pub fn n_succeeded(&self) -> usize {
        self.jump_counts.len()
    }

    /// Set when some trajectories failed but the ensemble was kept.
    pub fn flagged(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Mean and standard error (`s / √n`, sample standard deviation).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Run every trajectory (in parallel on the current rayon pool) and reduce
/// in trajectory-index order, so the result is independent of scheduling.
pub fn run_ensemble<R: Real>(config: &TrajectoryConfig<R>) -> Result<EnsembleResult> {
    if config.n_trajectories == 0 {
        return Err(Error::InvalidParameter(
            "at least one trajectory is required".into(),
        ));
    }
    check_grid(&config.t_grid)?;
    let results: Vec<Result<Trajectory>> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(config.master_seed, i as u64);
            evolve_trajectory(&config.problem, &config.psi0, &config.t_grid, &mut rng)
        })
        .collect();

    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(tr) => ok.push(tr),
            Err(e) => match config.policy {
                FailurePolicy::Strict => {
                    return Err(Error::Trajectory {
                        index,
                        source: Box::new(e),
                    })
                }
                FailurePolicy::Tolerant { .. } => failures.push((index, e.to_string())),
            },
        }
    }
    if let FailurePolicy::Tolerant {
        min_success_fraction,
    } = config.policy
    {
        let frac = ok.len() as f64 / config.n_trajectories as f64;
        if ok.is_empty() || frac < min_success_fraction {
            let (index, msg) = failures.first().cloned().unwrap_or_default();
            return Err(Error::Trajectory {
                index,
                source: Box::new(Error::InvalidState(format!(
                    "only {} of {} trajectories succeeded; first failure: {msg}",
                    ok.len(),
                    config.n_trajectories
                ))),
            });
        }
    }

    let basis = config.problem.basis();
    let kind = basis.kind();
    let n_atoms = basis.n_atoms();
    let names = channel_names(kind);
    let n_t = config.t_grid.len();
    let per_traj: Vec<Vec<Vec<f64>>> = ok
        .iter()
        .map(|tr| {
            tr.samples
                .iter()
                .map(|s| s.channel_values(kind, n_atoms))
                .collect()
        })
        .collect();

    let mut series = TimeSeries::new(config.t_grid.iter().map(|t| t.as_f64()).collect());
    let mut ses = Vec::with_capacity(names.len());
    let mut column = vec![0.0; per_traj.len()];
    for (ci, name) in names.iter().enumerate() {
        let mut means = Vec::with_capacity(n_t);
        let mut errs = Vec::with_capacity(n_t);
        for ti in 0..n_t {
            for (slot, tr) in column.iter_mut().zip(&per_traj) {
                *slot = tr[ti][ci];
            }
            let (m, s) = mean_and_se(&column);
            means.push(m);
            errs.push(s);
        }
        series.push_channel(*name, means)?;
        ses.push((format!("{name}{SE_SUFFIX}"), errs));
    }
    for (name, errs) in ses {
        series.push_channel(name, errs)?;
    }

    Ok(EnsembleResult {
        series,
        jump_counts: ok.iter().map(|t| t.jump_times.len()).collect(),
        max_norm_deviation: ok
            .iter()
            .map(|t| t.max_norm_deviation)
            .fold(0.0, f64::max),
        failures,
        n_requested: config.n_trajectories,
    })
}

/// `γ ‖J₋ψ‖²` for a normalized wave function (`J_ge` for Λ atoms).
pub fn mcwf_intensity<R: Real>(psi: &StateVector<R>, gamma: R) -> Result<R> {
    let j = emission_operator::<R>(psi.basis())?;
    let v = j.entries() * psi.amplitudes();
    Ok(gamma * v.iter().fold(R::zero(), |a, z| a + norm_sqr(*z)))
}

/// Same as [`Trajectory::samples`] as a [`TimeSeries`].
pub fn trajectory_series<R: Real>(
    trajectory: &Trajectory,
    t_grid: &[R],
    problem: &LindbladProblem<R>,
) -> Result<TimeSeries> {
    let b = problem.basis();
    crate::observables::series_from_samples(
        t_grid.iter().map(|t| t.as_f64()).collect(),
        &trajectory.samples,
        b.kind(),
        b.n_atoms(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{build_three_level_basis, build_two_level_basis, Occupation};
    use crate::lindblad::{evolve, HamiltonianSpec};
    use crate::observables::{INTENSITY, INTENSITY_PER_ATOM};
    use crate::ode::uniform_grid;
    use crate::state::{all_ground_state, all_metastable_state, basis_state};

    fn excited(n: usize) -> (std::sync::Arc<crate::algebra::CollectiveBasis>, StateVector<f64>) {
        let b = build_two_level_basis(n).unwrap();
        let psi = basis_state(&b, Occupation { n_s: 0, n_e: n, n_g: 0 }).unwrap();
        (b, psi)
    }

    fn ks_p_value(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = sorted.len() as f64;
        let d = sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let k = k as f64;
            p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn single_atom_waiting_times_are_exponential() {
        let (b, psi) = excited(1);
        let p = LindbladProblem::new(b, HamiltonianSpec::None, 1.0).unwrap();
        let grid = [0.0, 40.0];
        let mut waits: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(7, i);
                let tr = evolve_trajectory(&p, &psi, &grid, &mut rng).unwrap();
                assert!(tr.jump_times.len() <= 1);
                tr.jump_times.first().copied().unwrap_or(f64::INFINITY)
            })
            .collect();
        waits.sort_by(f64::total_cmp);
        let pv = ks_p_value(&waits, |x| 1.0 - (-x).exp());
        assert!(pv > 0.01, "KS p-value {pv}");
    }

    #[test]
    fn no_decay_means_no_jumps_and_unitary_motion() {
        let b = build_two_level_basis(3).unwrap();
        let psi = all_ground_state::<f64>(&b).unwrap();
        let h = HamiltonianSpec::ConstantDrive { omega: 1.3, delta: 0.4 };
        let p = LindbladProblem::new(b.clone(), h, 0.0).unwrap();
        let grid = uniform_grid(4.0, 41);
        let tr = evolve_trajectory(&p, &psi, &grid, &mut trajectory_rng(1, 0)).unwrap();
        assert!(tr.jump_times.is_empty());
        let exact = evolve(&p, &psi.to_density(), &grid).unwrap();
        let probe = Probe::new(&b, 0.0).unwrap();
        for (s, rho) in tr.samples.iter().zip(&exact) {
            let e = probe.sample_density(rho);
            for k in 0..3 {
                assert!((s.populations[k] - e.populations[k]).abs() < 1e-6);
            }
        }
        assert!(tr.max_norm_deviation < 1e-10);
    }

    #[test]
    fn raman_jump_count_bounded_by_atom_number() {
        let b = build_three_level_basis(3).unwrap();
        let psi = all_metastable_state::<f64>(&b).unwrap();
        let h = HamiltonianSpec::RamanPulse { omega0: 2.0, pulse_length: 5.0, delta: 1.0 };
        let p = LindbladProblem::new(b, h, 1.0).unwrap();
        let grid = uniform_grid(7.5, 76);
        for i in 0..200 {
            let tr = evolve_trajectory(&p, &psi, &grid, &mut trajectory_rng(3, i)).unwrap();
            assert!(tr.jump_times.len() <= 3);
            assert!(tr.jump_times.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn single_trajectory_ensemble_equals_trajectory() {
        let (b, psi) = excited(4);
        let p = LindbladProblem::new(b, HamiltonianSpec::None, 1.0).unwrap();
        let grid = uniform_grid(3.0, 31);
        let cfg = TrajectoryConfig {
            n_trajectories: 1,
            master_seed: 99,
            t_grid: grid.clone(),
            problem: p.clone(),
            psi0: psi.clone(),
            policy: FailurePolicy::Strict,
        };
        let ens = run_ensemble(&cfg).unwrap();
        let tr = evolve_trajectory(&p, &psi, &grid, &mut trajectory_rng(99, 0)).unwrap();
        let ts = trajectory_series(&tr, &grid, &p).unwrap();
        assert_eq!(ens.series.channel(INTENSITY), ts.channel(INTENSITY));
        assert_eq!(ens.series.channel(INTENSITY_PER_ATOM), ts.channel(INTENSITY_PER_ATOM));
        assert!(ens.series.channel("intensity_se").unwrap().iter().all(|&s| s == 0.0));
        assert_eq!(ens.jump_counts, vec![tr.jump_times.len()]);
    }

    #[test]
    fn ensemble_is_thread_count_independent() {
        let (b, psi) = excited(5);
        let p = LindbladProblem::new(b, HamiltonianSpec::None, 1.0).unwrap();
        let cfg = TrajectoryConfig {
            n_trajectories: 40,
            master_seed: 5,
            t_grid: uniform_grid(3.0, 31),
            problem: p,
            psi0: psi,
            policy: FailurePolicy::Strict,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.series, b.series);
        assert_eq!(a.jump_counts, b.jump_counts);
    }

    #[test]
    fn intensity_of_simple_states() {
        let b = build_two_level_basis(6).unwrap();
        let g = all_ground_state::<f64>(&b).unwrap();
        assert_eq!(mcwf_intensity(&g, 1.0).unwrap(), 0.0);
        let (_, e1) = excited(1);
        assert!((mcwf_intensity(&e1, 2.0).unwrap() - 2.0).abs() < 1e-15);
        let (_, e6) = excited(6);
        assert!((mcwf_intensity(&e6, 1.5).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn rng_streams_are_distinct_and_reproducible() {
        let a: u64 = trajectory_rng(1, 0).random();
        let b: u64 = trajectory_rng(1, 1).random();
        let c: u64 = trajectory_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn mean_and_se_basics() {
        assert_eq!(mean_and_se(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
