//! Full tensor-product representation for a handful of atoms.
//!
//! Operators here are assembled from single-atom matrices with Kronecker
//! products and evolved with dense matrix arithmetic, so they share no code
//! path with the symmetric-subspace construction they are used to check.

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};

use crate::algebra::{BasisKind, CollectiveBasis, Level};
use crate::error::{Error, Result};
use crate::lindblad::{HamiltonianSpec, ABS_TOL, REL_TOL};
use crate::observables::{series_from_samples, Sample, TimeSeries};
use crate::ode::{integrate_on_grid, StepControl};
use crate::scalar::{c, c_re, Real, C};
use crate::state::trace_of_product;

pub const MAX_PRODUCT_ATOMS: usize = 4;

fn local_dim(kind: BasisKind) -> usize {
    kind.level_count()
}

/// Local index of a level: two-level `g = 0, e = 1`; Λ `s = 0, e = 1, g = 2`.
fn local_index(kind: BasisKind, level: Level) -> Result<usize> {
    match (kind, level) {
        (BasisKind::TwoLevel, Level::G) => Ok(0),
        (BasisKind::TwoLevel, Level::E) => Ok(1),
        (BasisKind::TwoLevel, Level::S) => Err(Error::InvalidLevel("s".into())),
        (BasisKind::ThreeLevel, Level::S) => Ok(0),
        (BasisKind::ThreeLevel, Level::E) => Ok(1),
        (BasisKind::ThreeLevel, Level::G) => Ok(2),
    }
}

/// Single-atom `|a><b|`.
pub fn local_transition<R: Real>(kind: BasisKind, a: Level, b: Level) -> Result<DMatrix<C<R>>> {
    let l = local_dim(kind);
    let mut m = DMatrix::zeros(l, l);
    m[(local_index(kind, a)?, local_index(kind, b)?)] = c_re(R::one());
    Ok(m)
}

/// `Σ_j 1 ⊗ … ⊗ local_j ⊗ … ⊗ 1` on `n` atoms.
pub fn collective<R: Real>(n: usize, local: &DMatrix<C<R>>) -> DMatrix<C<R>> {
    let l = local.nrows();
    let dim = l.pow(n as u32);
    let mut total = DMatrix::zeros(dim, dim);
    for site in 0..n {
        let mut acc = DMatrix::<C<R>>::identity(1, 1);
        for j in 0..n {
            let factor = if j == site {
                local.clone()
            } else {
                DMatrix::identity(l, l)
            };
            acc = acc.kronecker(&factor);
        }
        total += acc;
    }
    total
}

/// Isometry from the symmetric basis into the product space: each column is
/// the normalized equal-weight superposition of product states with that
/// label's occupation numbers.
pub fn symmetric_isometry<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<DMatrix<C<R>>> {
    let n = basis.n_atoms();
    if n > MAX_PRODUCT_ATOMS + 2 {
        return Err(Error::TooManyAtoms {
            n,
            max: MAX_PRODUCT_ATOMS + 2,
        });
    }
    let kind = basis.kind();
    let l = local_dim(kind);
    let dim = l.pow(n as u32);
    let mut v = DMatrix::zeros(dim, basis.dim());
    let idx_s = local_index(kind, Level::S).ok();
    let idx_e = local_index(kind, Level::E)?;
    let idx_g = local_index(kind, Level::G)?;
    for p in 0..dim {
        let mut counts = [0usize; 3];
        let mut rem = p;
        for _ in 0..n {
            let digit = rem % l;
            rem /= l;
            if Some(digit) == idx_s {
                counts[0] += 1;
            } else if digit == idx_e {
                counts[1] += 1;
            } else if digit == idx_g {
                counts[2] += 1;
            }
        }
        let occ = crate::algebra::Occupation {
            n_s: counts[0],
            n_e: counts[1],
            n_g: counts[2],
        };
        let col = basis.index_of(occ).expect("every product state has a label");
        v[(p, col)] = c_re(R::one());
    }
    for mut col in v.column_iter_mut() {
        let norm: R = col.iter().fold(R::zero(), |a, z| a + z.re * z.re).sqrt();
        col.iter_mut().for_each(|z| *z /= norm);
    }
    Ok(v)
}

struct ProductOps<R: Real> {
    detuning: DMatrix<C<R>>,
    coupling: DMatrix<C<R>>,
    jump: DMatrix<C<R>>,
    pops: [DMatrix<C<R>>; 3],
}

fn product_ops<R: Real>(n: usize, kind: BasisKind) -> Result<ProductOps<R>> {
    let lt = |a, b| local_transition::<R>(kind, a, b).map(|m| collective(n, &m));
    let dim = local_dim(kind).pow(n as u32);
    match kind {
        BasisKind::TwoLevel => {
            let half = c_re(R::lit(0.5));
            let n_e = lt(Level::E, Level::E)?;
            let n_g = lt(Level::G, Level::G)?;
            let lower = lt(Level::G, Level::E)?;
            Ok(ProductOps {
                detuning: (&n_e - &n_g).map(|z| z * half),
                coupling: &lower + lower.adjoint(),
                jump: lower,
                pops: [DMatrix::zeros(dim, dim), n_e, n_g],
            })
        }
        BasisKind::ThreeLevel => {
            let half = c_re(R::lit(0.5));
            let n_s = lt(Level::S, Level::S)?;
            let n_e = lt(Level::E, Level::E)?;
            let n_g = lt(Level::G, Level::G)?;
            Ok(ProductOps {
                detuning: (&n_s + &n_e).map(|z| z * half),
                coupling: lt(Level::S, Level::E)? + lt(Level::E, Level::S)?,
                jump: lt(Level::G, Level::E)?,
                pops: [n_s, n_e, n_g],
            })
        }
    }
}

/// Master-equation evolution in the full `L^N`-dimensional product space,
/// starting with every atom in `initial`. Returns the same channels as the
/// symmetric-subspace observables.
pub fn evolve_full_product<R: Real>(
    n_atoms: usize,
    kind: BasisKind,
    hamiltonian: &HamiltonianSpec<R>,
    gamma: R,
    initial: Level,
    t_grid: &[R],
) -> Result<TimeSeries> {
    if n_atoms == 0 {
        return Err(Error::ZeroAtoms);
    }
    if n_atoms > MAX_PRODUCT_ATOMS {
        return Err(Error::TooManyAtoms {
            n: n_atoms,
            max: MAX_PRODUCT_ATOMS,
        });
    }
    let ops = product_ops::<R>(n_atoms, kind)?;
    let l = local_dim(kind);
    let dim = l.pow(n_atoms as u32);
    let li = local_index(kind, initial)?;
    let start: usize = (0..n_atoms).map(|j| li * l.pow(j as u32)).sum();
    let mut rho0 = DMatrix::<C<R>>::zeros(dim, dim);
    rho0[(start, start)] = c_re(R::one());

    let jd = ops.jump.adjoint();
    let decay = &jd * &ops.jump;
    let spec = *hamiltonian;
    let minus_i = c(R::zero(), -R::one());
    let half_gamma = gamma * R::lit(0.5);

    let rhs = |t: R, y: &[C<R>], dy: &mut [C<R>]| -> Result<()> {
        let rho = DMatrixView::from_slice(y, dim, dim);
        let h = ops.detuning.map(|z| z * (-spec.detuning()))
            + ops.coupling.map(|z| z * (-spec.rabi(t) * R::lit(0.5)));
        let comm = &h * rho - rho * &h;
        let anti = &decay * rho + rho * &decay;
        let sandwich = &ops.jump * rho * &jd;
        let out = comm.map(|z| z * minus_i) - anti.map(|z| z * half_gamma)
            + sandwich.map(|z| z * gamma);
        dy.copy_from_slice(out.as_slice());
        Ok(())
    };

    let mut samples = Vec::with_capacity(t_grid.len());
    integrate_on_grid(
        rhs,
        rho0.as_slice().to_vec(),
        t_grid,
        StepControl::new(ABS_TOL, REL_TOL),
        |_| {},
        |_, _, y| {
            let rho = DMatrix::from_column_slice(dim, dim, y);
            let intensity = gamma * trace_of_product(&decay, &rho).re;
            let pop = |k: usize| trace_of_product(&ops.pops[k], &rho).re.as_f64();
            samples.push(Sample {
                intensity: intensity.as_f64(),
                populations: [pop(0), pop(1), pop(2)],
            });
            Ok(())
        },
    )?;
    let t = t_grid.iter().map(|t| t.as_f64()).collect();
    series_from_samples(t, &samples, kind, n_atoms)
}
