//! Density operators and pure states on a collective basis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    build_three_level_basis, build_two_level_basis, max_abs_diff, BasisKind, CollectiveBasis,
    Occupation, OperatorMatrix,
};
use crate::error::{Error, Result};
use crate::scalar::{c, c_re, norm_sqr, Magnitude, Real, C};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DensityOperator<R: Real> {
    basis: Arc<CollectiveBasis>,
    matrix: DMatrix<C<R>>,
}

#[derive(Debug, Clone)]
pub struct StateVector<R: Real> {
    basis: Arc<CollectiveBasis>,
    amplitudes: DVector<C<R>>,
}

/// Invariant deviations of a state; `validate` never mutates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
    /// `| ||psi|| - 1 |` for pure states, zero for density operators.
    pub norm: f64,
}

impl StateReport {
    pub fn within_tolerances(&self) -> bool {
        self.hermiticity <= HERMITICITY_TOL
            && self.trace <= TRACE_TOL
            && self.min_eigenvalue >= -POSITIVITY_TOL
            && self.norm <= NORM_TOL
    }

    /// Worst-case merge of two reports.
    pub fn merge(self, other: StateReport) -> StateReport {
        StateReport {
            hermiticity: self.hermiticity.max(other.hermiticity),
            trace: self.trace.max(other.trace),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
            norm: self.norm.max(other.norm),
        }
    }

    pub fn clean() -> StateReport {
        StateReport {
            hermiticity: 0.0,
            trace: 0.0,
            min_eigenvalue: f64::INFINITY,
            norm: 0.0,
        }
    }
}

fn same_basis(a: &Arc<CollectiveBasis>, b: &Arc<CollectiveBasis>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::BasisMismatch)
    }
}

impl<R: Real> DensityOperator<R> {
    pub fn new(basis: Arc<CollectiveBasis>, matrix: DMatrix<C<R>>) -> Result<Self> {
        let d = basis.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::BasisMismatch);
        }
        Ok(DensityOperator { basis, matrix })
    }

    pub fn basis(&self) -> &Arc<CollectiveBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C<R>> {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<C<R>> {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C<R>> {
        self.matrix
    }

    pub fn trace(&self) -> C<R> {
        self.matrix.trace()
    }

    /// Replace the matrix by its Hermitian part; returns the deviation removed.
    pub fn hermitize(&mut self) -> R {
        
        hermitize_in_place(&mut self.matrix)
    }

    pub fn population(&self, index: usize) -> R {
        self.matrix[(index, index)].re
    }

    pub fn validate(&self) -> StateReport {
        let herm = max_abs_diff(&self.matrix, &self.matrix.adjoint()).as_f64();
        let tr = self.trace();
        let trace_dev = (tr - c_re(R::one())).magnitude().as_f64();
        let half = R::lit(0.5);
        let hpart = (&self.matrix + self.matrix.adjoint()).map(|z| z * half);
        let min_ev = hpart
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
        StateReport {
            hermiticity: herm,
            trace: trace_dev,
            min_eigenvalue: min_ev,
            norm: 0.0,
        }
    }

    pub fn to_json(&self) -> StateJson {
        StateJson::from_entries(
            &self.basis,
            Representation::Density,
            (0..self.basis.dim())
                .flat_map(|r| (0..self.basis.dim()).map(move |col| (r, col)))
                .map(|(r, col)| self.matrix[(r, col)]),
        )
    }
}

pub(crate) fn hermitize_in_place<R: Real>(m: &mut DMatrix<C<R>>) -> R {
    let d = m.nrows();
    let half = R::lit(0.5);
    let mut dev = R::zero();
    for col in 0..d {
        for r in 0..=col {
            let a = m[(r, col)];
            let b = m[(col, r)].conj();
            dev = dev.max((a - b).magnitude());
            let avg = (a + b) * half;
            m[(r, col)] = avg;
            m[(col, r)] = avg.conj();
        }
    }
    dev
}

impl<R: Real> StateVector<R> {
    pub fn new(basis: Arc<CollectiveBasis>, amplitudes: DVector<C<R>>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch);
        }
        Ok(StateVector { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<CollectiveBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C<R>> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut DVector<C<R>> {
        &mut self.amplitudes
    }

    pub fn norm_squared(&self) -> R {
        self.amplitudes
            .iter()
            .fold(R::zero(), |acc, z| acc + norm_sqr(*z))
    }

    pub fn norm(&self) -> R {
        self.norm_squared().sqrt()
    }

    pub fn normalize(&mut self) -> Result<R> {
        let n = self.norm();
        if !(n > R::zero()) || !n.is_finite() {
            return Err(Error::InvalidState("cannot normalize zero vector".into()));
        }
        let inv = R::one() / n;
        self.amplitudes.iter_mut().for_each(|z| *z *= inv);
        Ok(n)
    }

    pub fn to_density(&self) -> DensityOperator<R> {
        DensityOperator {
            basis: self.basis.clone(),
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn validate(&self) -> StateReport {
        let mut r = StateReport::clean();
        r.min_eigenvalue = 0.0;
        r.norm = (self.norm() - R::one()).abs().as_f64();
        r.trace = (self.norm_squared() - R::one()).abs().as_f64();
        r
    }

    pub fn to_json(&self) -> StateJson {
        StateJson::from_entries(
            &self.basis,
            Representation::Pure,
            self.amplitudes.iter().copied(),
        )
    }
}

/// Pure basis state with the given occupation numbers.
pub fn basis_state<R: Real>(basis: &Arc<CollectiveBasis>, occ: Occupation) -> Result<StateVector<R>> {
    let idx = basis
        .index_of(occ)
        .ok_or_else(|| Error::InvalidState(format!("occupation {occ:?} not in basis")))?;
    let mut amps = DVector::zeros(basis.dim());
    amps[idx] = c_re(R::one());
    StateVector::new(basis.clone(), amps)
}

pub fn all_excited_state<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<DensityOperator<R>> {
    basis.expect_kind(BasisKind::TwoLevel)?;
    let n = basis.n_atoms();
    Ok(basis_state::<R>(basis, Occupation { n_s: 0, n_e: n, n_g: 0 })?.to_density())
}

pub fn all_ground_state<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<StateVector<R>> {
    let n = basis.n_atoms();
    basis_state(basis, Occupation { n_s: 0, n_e: 0, n_g: n })
}

pub fn all_metastable_state<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<StateVector<R>> {
    basis.expect_kind(BasisKind::ThreeLevel)?;
    let n = basis.n_atoms();
    basis_state(basis, Occupation { n_s: n, n_e: 0, n_g: 0 })
}

pub trait Expectation<R: Real> {
    /// `tr(op ρ)` or `<psi|op|psi>`.
    fn expectation(&self, op: &OperatorMatrix<R>) -> Result<C<R>>;
}

impl<R: Real> Expectation<R> for DensityOperator<R> {
    fn expectation(&self, op: &OperatorMatrix<R>) -> Result<C<R>> {
        same_basis(&self.basis, op.basis())?;
        Ok(trace_of_product(op.entries(), &self.matrix))
    }
}

impl<R: Real> Expectation<R> for StateVector<R> {
    fn expectation(&self, op: &OperatorMatrix<R>) -> Result<C<R>> {
        same_basis(&self.basis, op.basis())?;
        let v = op.entries() * &self.amplitudes;
        Ok(self.amplitudes.dotc(&v))
    }
}

/// `tr(A B)` without forming the product.
pub(crate) fn trace_of_product<R: Real>(a: &DMatrix<C<R>>, b: &DMatrix<C<R>>) -> C<R> {
    let d = a.nrows();
    let mut acc = c(R::zero(), R::zero());
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Density,
    Pure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub n_atoms: usize,
    pub kind: BasisKind,
}

/// Checkpoint layout: basis descriptor plus row-major `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub basis: BasisDescriptor,
    pub representation: Representation,
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl StateJson {
    fn from_entries<R: Real>(
        basis: &CollectiveBasis,
        representation: Representation,
        entries: impl Iterator<Item = C<R>>,
    ) -> Self {
        StateJson {
            basis: BasisDescriptor {
                n_atoms: basis.n_atoms(),
                kind: basis.kind(),
            },
            representation,
            dim: basis.dim(),
            entries: entries.map(|z| [z.re.as_f64(), z.im.as_f64()]).collect(),
        }
    }

    pub fn build_basis(&self) -> Result<Arc<CollectiveBasis>> {
        let b = match self.basis.kind {
            BasisKind::TwoLevel => build_two_level_basis(self.basis.n_atoms)?,
            BasisKind::ThreeLevel => build_three_level_basis(self.basis.n_atoms)?,
        };
        if b.dim() != self.dim {
            return Err(Error::InvalidState(format!(
                "dimension {} does not match basis dimension {}",
                self.dim,
                b.dim()
            )));
        }
        Ok(b)
    }

    fn entry<R: Real>(&self, k: usize) -> C<R> {
        let [re, im] = self.entries[k];
        c(R::lit(re), R::lit(im))
    }

    pub fn to_density<R: Real>(&self) -> Result<DensityOperator<R>> {
        let basis = self.build_basis()?;
        let d = self.dim;
        match self.representation {
            Representation::Density => {
                if self.entries.len() != d * d {
                    return Err(Error::InvalidState("expected dim^2 entries".into()));
                }
                let m = DMatrix::from_fn(d, d, |r, col| self.entry(r * d + col));
                DensityOperator::new(basis, m)
            }
            Representation::Pure => Ok(self.to_state_vector::<R>()?.to_density()),
        }
    }

    pub fn to_state_vector<R: Real>(&self) -> Result<StateVector<R>> {
        if self.representation != Representation::Pure {
            return Err(Error::InvalidState(
                "density operators cannot be converted to pure states".into(),
            ));
        }
        if self.entries.len() != self.dim {
            return Err(Error::InvalidState("expected dim entries".into()));
        }
        let basis = self.build_basis()?;
        let v = DVector::from_fn(self.dim, |k, _| self.entry(k));
        StateVector::new(basis, v)
    }
}
