//! Collective Dicke master equation
//!
//! `dρ/dt = -i[H, ρ] - (γ/2)(J₊J₋ρ + ρJ₊J₋ - 2J₋ρJ₊)`
//!
//! with `J₋` the collective emission operator of the basis (see
//! [`crate::algebra::emission_operator`]) and the driving Hamiltonian
//! `H(t) = -Δ·D - (Ω(t)/2)·X`. For two-level atoms `D = Jz`, `X = J₊ + J₋`;
//! for Λ atoms `D = (J_ss + J_ee)/2`, `X = J_se + J_es`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    emission_operator, ladder_operators, transfer_operator, BasisKind, CollectiveBasis, Level,
    OperatorLabel, OperatorMatrix,
};
use crate::error::{Error, Result};
use crate::ode::{integrate_on_grid, OdeSystem, StepControl, StepStats};
use crate::scalar::{c, c_re, Magnitude, Real, C};
use crate::sparse::SparseOperator;
use crate::state::{hermitize_in_place, DensityOperator};

pub const ABS_TOL: f64 = 1e-10;
pub const REL_TOL: f64 = 1e-8;
pub const STEADY_RESIDUAL_TOL: f64 = 1e-9;

/// Coherent drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HamiltonianSpec<R> {
    None,
    ConstantDrive { omega: R, delta: R },
    /// `Ω(t) = Ω₀ sin²(πt/T)` on `[0, T]`, zero afterwards.
    RamanPulse { omega0: R, pulse_length: R, delta: R },
}

impl<R: Real> HamiltonianSpec<R> {
    pub fn rabi(&self, t: R) -> R {
        match *self {
            HamiltonianSpec::None => R::zero(),
            HamiltonianSpec::ConstantDrive { omega, .. } => omega,
            HamiltonianSpec::RamanPulse {
                omega0,
                pulse_length,
                ..
            } => sin2_envelope(omega0, pulse_length, t),
        }
    }

    pub fn detuning(&self) -> R {
        match *self {
            HamiltonianSpec::None => R::zero(),
            HamiltonianSpec::ConstantDrive { delta, .. }
            | HamiltonianSpec::RamanPulse { delta, .. } => delta,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, HamiltonianSpec::RamanPulse { .. })
    }

    fn validate(&self) -> Result<()> {
        if let HamiltonianSpec::RamanPulse { pulse_length, .. } = *self {
            if !(pulse_length > R::zero()) {
                return Err(Error::InvalidParameter(
                    "pulse length T must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn sin2_envelope<R: Real>(omega0: R, pulse_length: R, t: R) -> R {
    if t < R::zero() || t > pulse_length {
        return R::zero();
    }
    let s = (R::pi() * t / pulse_length).sin();
    omega0 * s * s
}

/// Immutable master-equation definition with precompiled sparse kernels.
#[derive(Debug, Clone)]
pub struct LindbladProblem<R: Real> {
    basis: Arc<CollectiveBasis>,
    hamiltonian: HamiltonianSpec<R>,
    gamma: R,
    jump: OperatorMatrix<R>,
    detuning_op: OperatorMatrix<R>,
    coupling_op: OperatorMatrix<R>,
    sp_detuning: SparseOperator<R>,
    sp_coupling: SparseOperator<R>,
    sp_decay: SparseOperator<R>,
    sp_jump: SparseOperator<R>,
    sp_jump_adj: SparseOperator<R>,
}

impl<R: Real> LindbladProblem<R> {
    pub fn new(
        basis: Arc<CollectiveBasis>,
        hamiltonian: HamiltonianSpec<R>,
        gamma: R,
    ) -> Result<Self> {
        if !(gamma >= R::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "decay rate must be nonnegative, got {gamma:?}"
            )));
        }
        hamiltonian.validate()?;
        let jump = emission_operator::<R>(&basis)?;
        let (detuning_op, coupling_op) = match basis.kind() {
            BasisKind::TwoLevel => {
                let l = ladder_operators::<R>(&basis)?;
                let x = l.jp.combine(c_re(R::one()), &l.jm, c_re(R::one()))?;
                (l.jz, x)
            }
            BasisKind::ThreeLevel => {
                let half = c_re(R::lit(0.5));
                let jss = transfer_operator::<R>(&basis, Level::S, Level::S)?;
                let jee = transfer_operator::<R>(&basis, Level::E, Level::E)?;
                let jse = transfer_operator::<R>(&basis, Level::S, Level::E)?;
                let jes = transfer_operator::<R>(&basis, Level::E, Level::S)?;
                (
                    jss.combine(half, &jee, half)?,
                    jse.combine(c_re(R::one()), &jes, c_re(R::one()))?,
                )
            }
        };
        let decay = jump.adjoint().matmul(&jump)?;
        Ok(LindbladProblem {
            sp_detuning: SparseOperator::from_dense(detuning_op.entries()),
            sp_coupling: SparseOperator::from_dense(coupling_op.entries()),
            sp_decay: SparseOperator::from_dense(decay.entries()),
            sp_jump: SparseOperator::from_dense(jump.entries()),
            sp_jump_adj: SparseOperator::from_dense(&jump.entries().adjoint()),
            basis,
            hamiltonian,
            gamma,
            jump,
            detuning_op,
            coupling_op,
        })
    }

    pub fn basis(&self) -> &Arc<CollectiveBasis> {
        &self.basis
    }

    pub fn gamma(&self) -> R {
        self.gamma
    }

    pub fn hamiltonian_spec(&self) -> &HamiltonianSpec<R> {
        &self.hamiltonian
    }

    pub fn jump_operator(&self) -> &OperatorMatrix<R> {
        &self.jump
    }

    pub fn hamiltonian_at(&self, t: R) -> OperatorMatrix<R> {
        let delta = self.hamiltonian.detuning();
        let omega = self.hamiltonian.rabi(t);
        let m = self.detuning_op.entries().map(|z| z * (-delta))
            + self.coupling_op.entries().map(|z| z * (-omega * R::lit(0.5)));
        OperatorMatrix::new(self.basis.clone(), OperatorLabel::Derived("H".into()), m)
            .expect("dimensions agree")
    }

    /// Coefficients of `A(t) = -i H_eff(t)` on (D, X, J₊J₋).
    pub(crate) fn drift_coefficients(&self, t: R) -> [C<R>; 3] {
        let delta = self.hamiltonian.detuning();
        let omega = self.hamiltonian.rabi(t);
        [
            c(R::zero(), delta),
            c(R::zero(), omega * R::lit(0.5)),
            c_re(-self.gamma * R::lit(0.5)),
        ]
    }

    /// `y += A(t) x` with `A = -i H - (γ/2) J₊J₋`.
    pub(crate) fn apply_drift(&self, t: R, x: &[C<R>], y: &mut [C<R>]) {
        let [a_d, a_x, a_k] = self.drift_coefficients(t);
        if a_d != c_re(R::zero()) {
            self.sp_detuning.mul_vec_acc(a_d, x, y);
        }
        if a_x != c_re(R::zero()) {
            self.sp_coupling.mul_vec_acc(a_x, x, y);
        }
        if a_k != c_re(R::zero()) {
            self.sp_decay.mul_vec_acc(a_k, x, y);
        }
    }

    pub(crate) fn sparse_jump(&self) -> &SparseOperator<R> {
        &self.sp_jump
    }

    /// Column-major Liouvillian action; `scratch` has `dim²` entries.
    pub(crate) fn apply_liouvillian(
        &self,
        t: R,
        rho: &[C<R>],
        out: &mut [C<R>],
        scratch: &mut [C<R>],
    ) {
        let zero = c_re(R::zero());
        out.iter_mut().for_each(|z| *z = zero);
        let coeffs = self.drift_coefficients(t);
        let ops = [&self.sp_detuning, &self.sp_coupling, &self.sp_decay];
        for (a, op) in coeffs.iter().zip(ops) {
            if *a == zero {
                continue;
            }
            // A ρ + ρ A†, every operator here is Hermitian
            op.left_mul_acc(*a, rho, out);
            op.right_mul_acc(a.conj(), rho, out);
        }
        if self.gamma > R::zero() {
            scratch.iter_mut().for_each(|z| *z = zero);
            self.sp_jump.left_mul_acc(c_re(R::one()), rho, scratch);
            self.sp_jump_adj
                .right_mul_acc(c_re(self.gamma), scratch, out);
        }
    }
}

struct LiouvillianSystem<'a, R: Real> {
    problem: &'a LindbladProblem<R>,
    scratch: Vec<C<R>>,
}

impl<R: Real> OdeSystem<R, C<R>> for LiouvillianSystem<'_, R> {
    fn eval(&mut self, t: R, y: &[C<R>], dy: &mut [C<R>]) -> Result<()> {
        self.problem.apply_liouvillian(t, y, dy, &mut self.scratch);
        Ok(())
    }
}

fn check_basis<R: Real>(problem: &LindbladProblem<R>, rho: &DensityOperator<R>) -> Result<()> {
    if Arc::ptr_eq(problem.basis(), rho.basis()) || **problem.basis() == **rho.basis() {
        Ok(())
    } else {
        Err(Error::BasisMismatch)
    }
}

/// Time derivative `dρ/dt` at time `t`.
pub fn rhs<R: Real>(
    problem: &LindbladProblem<R>,
    t: R,
    rho: &DensityOperator<R>,
) -> Result<DMatrix<C<R>>> {
    check_basis(problem, rho)?;
    let d = problem.basis().dim();
    let mut out = DMatrix::zeros(d, d);
    let mut scratch = vec![c_re(R::zero()); d * d];
    problem.apply_liouvillian(t, rho.matrix().as_slice(), out.as_mut_slice(), &mut scratch);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveStats {
    pub steps: StepStats,
    /// Largest anti-Hermitian part removed after an accepted step.
    pub max_hermiticity_correction: f64,
}

/// Evolve on `t_grid`, handing every (Hermitian-projected) snapshot to `observe`.
pub fn evolve_with<R: Real>(
    problem: &LindbladProblem<R>,
    rho0: &DensityOperator<R>,
    t_grid: &[R],
    mut observe: impl FnMut(usize, R, &DensityOperator<R>) -> Result<()>,
) -> Result<EvolveStats> {
    check_basis(problem, rho0)?;
    let report = rho0.validate();
    if !report.within_tolerances() {
        return Err(Error::InvalidState(format!(
            "initial density operator violates invariants: {report:?}"
        )));
    }
    let d = problem.basis().dim();
    let system = LiouvillianSystem {
        problem,
        scratch: vec![c_re(R::zero()); d * d],
    };
    let mut max_corr = R::zero();
    let mut snapshot = rho0.clone();
    let steps = integrate_on_grid(
        system,
        rho0.matrix().as_slice().to_vec(),
        t_grid,
        StepControl::new(ABS_TOL, REL_TOL),
        |y| {
            let mut m = DMatrix::from_column_slice(d, d, y);
            let dev = hermitize_in_place(&mut m);
            if dev > max_corr {
                max_corr = dev;
            }
            y.copy_from_slice(m.as_slice());
        },
        |i, t, y| {
            let m = snapshot.matrix_mut();
            m.as_mut_slice().copy_from_slice(y);
            hermitize_in_place(m);
            observe(i, t, &snapshot)
        },
    )?;
    if max_corr > R::zero() {
        log::debug!("max hermiticity correction {:e}", max_corr.as_f64());
    }
    Ok(EvolveStats {
        steps,
        max_hermiticity_correction: max_corr.as_f64(),
    })
}

/// Evolve and keep every snapshot.
pub fn evolve<R: Real>(
    problem: &LindbladProblem<R>,
    rho0: &DensityOperator<R>,
    t_grid: &[R],
) -> Result<Vec<DensityOperator<R>>> {
    let mut out = Vec::with_capacity(t_grid.len());
    evolve_with(problem, rho0, t_grid, |_, _, rho| {
        out.push(rho.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Vectorized Liouvillian (column-major `vec(ρ)`), `dim² × dim²`.
pub fn liouvillian_matrix<R: Real>(problem: &LindbladProblem<R>, t: R) -> DMatrix<C<R>> {
    let d = problem.basis().dim();
    let n = d * d;
    let mut l = DMatrix::zeros(n, n);
    let mut unit = vec![c_re(R::zero()); n];
    let mut col = vec![c_re(R::zero()); n];
    let mut scratch = vec![c_re(R::zero()); n];
    for q in 0..n {
        unit[q] = c_re(R::one());
        problem.apply_liouvillian(t, &unit, &mut col, &mut scratch);
        l.column_mut(q).copy_from_slice(&col);
        unit[q] = c_re(R::zero());
    }
    l
}

/// Trace-one null vector of the Liouvillian by a direct dense solve, the
/// `(0,0)` population equation replaced by the normalization row.
pub fn steady_state<R: Real>(problem: &LindbladProblem<R>) -> Result<DensityOperator<R>> {
    if problem.hamiltonian_spec().is_time_dependent() {
        return Err(Error::InvalidParameter(
            "steady state requires a time-independent Hamiltonian".into(),
        ));
    }
    if !(problem.gamma() > R::zero()) {
        return Err(Error::InvalidParameter(
            "steady state requires a positive decay rate".into(),
        ));
    }
    let d = problem.basis().dim();
    let n = d * d;
    let mut l = liouvillian_matrix(problem, R::zero());
    for q in 0..n {
        l[(0, q)] = c_re(R::zero());
    }
    for i in 0..d {
        l[(0, i + i * d)] = c_re(R::one());
    }
    let mut b = DVector::<C<R>>::zeros(n);
    b[0] = c_re(R::one());
    let lu = l.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or(Error::SteadyStateNotConverged { residual: f64::INFINITY })?;

    let tol = R::lit(STEADY_RESIDUAL_TOL).max(R::machine_epsilon() * R::lit(1e4));
    let mut residual = R::zero();
    // iterative refinement on the augmented system
    for _ in 0..4 {
        let mut m = DMatrix::from_column_slice(d, d, x.as_slice());
        hermitize_in_place(&mut m);
        let tr = m.trace();
        m.iter_mut().for_each(|z| *z /= tr);
        let rho = DensityOperator::new(problem.basis().clone(), m)?;
        let r = rhs(problem, R::zero(), &rho)?;
        residual = r.iter().fold(R::zero(), |acc, z| acc.max(z.magnitude()));
        if residual <= tol {
            return Ok(rho);
        }
        let xv = DVector::from_column_slice(rho.matrix().as_slice());
        let res = &b - &l * &xv;
        match lu.solve(&res) {
            Some(dx) => x = xv + dx,
            None => break,
        }
    }
    Err(Error::SteadyStateNotConverged {
        residual: residual.as_f64(),
    })
}

/// Long-time integration fallback, used to cross-check [`steady_state`].
pub fn steady_state_by_integration<R: Real>(
    problem: &LindbladProblem<R>,
    rho0: &DensityOperator<R>,
    t_final: R,
) -> Result<DensityOperator<R>> {
    let mut last = None;
    evolve_with(problem, rho0, &[R::zero(), t_final], |i, _, rho| {
        if i == 1 {
            last = Some(rho.clone());
        }
        Ok(())
    })?;
    last.ok_or(Error::EmptySeries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{build_three_level_basis, build_two_level_basis};
    use crate::ode::uniform_grid;
    use crate::state::{all_excited_state, all_metastable_state, Expectation};

    fn decay_problem(n: usize, gamma: f64) -> LindbladProblem<f64> {
        LindbladProblem::new(build_two_level_basis(n).unwrap(), HamiltonianSpec::None, gamma)
            .unwrap()
    }

    #[test]
    fn zero_generator() {
        let p = decay_problem(3, 0.0);
        let rho = all_excited_state::<f64>(p.basis()).unwrap();
        let d = rhs(&p, 0.0, &rho).unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_atom_decay_rate() {
        let p = decay_problem(1, 1.0);
        let rho = all_excited_state::<f64>(p.basis()).unwrap();
        let d = rhs(&p, 0.0, &rho).unwrap();
        // (n_e = 0, n_e = 1) ordering
        assert!((d[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((d[(1, 1)].re + 1.0).abs() < 1e-15);
        assert!(d[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn matches_dense_formula_with_drive() {
        let b = build_three_level_basis(3).unwrap();
        let spec = HamiltonianSpec::RamanPulse {
            omega0: 1.3,
            pulse_length: 5.0,
            delta: 0.7,
        };
        let p = LindbladProblem::new(b.clone(), spec, 0.8).unwrap();
        let mut psi = all_metastable_state::<f64>(&b).unwrap();
        for (k, z) in psi.amplitudes_mut().iter_mut().enumerate() {
            *z += c(0.1 * k as f64, -0.05 * k as f64);
        }
        psi.normalize().unwrap();
        let rho = psi.to_density();
        let t = 1.7;
        let h = p.hamiltonian_at(t).into_entries();
        let j = p.jump_operator().entries().clone();
        let jd = j.adjoint();
        let r = rho.matrix();
        let i = c(0.0, 1.0);
        let expected = (&h * r - r * &h).map(|z| z * -i)
            - (&jd * &j * r + r * &jd * &j - (&j * r * &jd).map(|z| z * 2.0)).map(|z| z * 0.4);
        let got = rhs(&p, t, &rho).unwrap();
        assert!(crate::algebra::max_abs_diff(&got, &expected) < 1e-12);
        assert!(got.trace().norm() < 1e-12);
    }

    #[test]
    fn single_atom_analytic_decay() {
        let p = decay_problem(1, 1.0);
        let rho0 = all_excited_state::<f64>(p.basis()).unwrap();
        let grid = uniform_grid(10.0, 201);
        let kop = ladder_operators::<f64>(p.basis()).unwrap();
        let pm = kop.jp.matmul(&kop.jm).unwrap();
        let snaps = evolve(&p, &rho0, &grid).unwrap();
        for (t, rho) in grid.iter().zip(&snaps) {
            let v = rho.expectation(&pm).unwrap().re;
            assert!((v - (-t).exp()).abs() < 1e-6);
            assert!(rho.validate().within_tolerances());
        }
    }

    #[test]
    fn pure_decay_steady_state_is_ground() {
        let p = decay_problem(4, 0.7);
        let ss = steady_state(&p).unwrap();
        assert!((ss.matrix()[(0, 0)].re - 1.0).abs() < 1e-10);
        for k in 1..5 {
            assert!(ss.matrix()[(k, k)].norm() < 1e-10);
        }
    }

    #[test]
    fn steady_state_agrees_with_long_time_integration() {
        let b = build_two_level_basis(4).unwrap();
        let p = LindbladProblem::new(
            b.clone(),
            HamiltonianSpec::ConstantDrive {
                omega: 1.0,
                delta: 0.0,
            },
            0.6,
        )
        .unwrap();
        let ss = steady_state(&p).unwrap();
        let r = rhs(&p, 0.0, &ss).unwrap();
        assert!(r.iter().all(|z| z.norm() < 1e-9));
        let rho0 = all_excited_state::<f64>(&b).unwrap();
        let late = steady_state_by_integration(&p, &rho0, 400.0).unwrap();
        assert!(crate::algebra::max_abs_diff(ss.matrix(), late.matrix()) < 1e-5);
    }

    #[test]
    fn steady_state_rejects_pulses_and_zero_gamma() {
        let b = build_two_level_basis(2).unwrap();
        let pulse = HamiltonianSpec::RamanPulse {
            omega0: 1.0,
            pulse_length: 1.0,
            delta: 0.0,
        };
        let p = LindbladProblem::new(b.clone(), pulse, 1.0).unwrap();
        assert!(steady_state(&p).is_err());
        let p = LindbladProblem::new(b, HamiltonianSpec::None, 0.0).unwrap();
        assert!(steady_state(&p).is_err());
    }

    #[test]
    fn problem_validation() {
        let b = build_two_level_basis(2).unwrap();
        assert!(LindbladProblem::new(b.clone(), HamiltonianSpec::None, -1.0).is_err());
        let bad = HamiltonianSpec::RamanPulse {
            omega0: 1.0,
            pulse_length: 0.0,
            delta: 0.0,
        };
        assert!(LindbladProblem::new(b, bad, 1.0).is_err());
    }

    #[test]
    fn envelope_shape() {
        assert_eq!(sin2_envelope(2.0, 5.0, -0.1), 0.0);
        assert_eq!(sin2_envelope(2.0, 5.0, 5.1), 0.0);
        assert!((sin2_envelope(2.0f64, 5.0, 2.5) - 2.0).abs() < 1e-15);
        assert!(sin2_envelope(2.0f64, 5.0, 0.0).abs() < 1e-15);
    }

    #[test]
    fn generic_f32_decay() {
        let b = build_two_level_basis(1).unwrap();
        let p = LindbladProblem::<f32>::new(b.clone(), HamiltonianSpec::None, 1.0).unwrap();
        let rho0 = all_excited_state::<f32>(&b).unwrap();
        let grid = uniform_grid(3.0f32, 31);
        let snaps = evolve(&p, &rho0, &grid).unwrap();
        for (t, rho) in grid.iter().zip(&snaps) {
            assert!((rho.population(1) - (-t).exp()).abs() < 1e-4);
        }
    }
}
