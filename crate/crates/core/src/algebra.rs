//! Symmetric-subspace bases and collective operator matrices.
//!
//! Operators are stored unnormalized: for two-level atoms `Jz`, `J±` act as
//! spin-`j` matrices with `j = N/2`, and for three-level atoms `J_ab` moves a
//! single atom from level `b` to level `a` (Schwinger-boson amplitudes).
//! Quantities "per atom" are formed in [`crate::observables`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, c_re, Magnitude, Real, C};

/// Single-atom level of a Λ atom. Two-level atoms use only `E` and `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    /// Metastable initial level.
    S,
    /// Excited level.
    E,
    /// Ground level.
    G,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::S, Level::E, Level::G];

    fn slot(self) -> usize {
        match self {
            Level::S => 0,
            Level::E => 1,
            Level::G => 2,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::S => "s",
            Level::E => "e",
            Level::G => "g",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" | "S" => Ok(Level::S),
            "e" | "E" => Ok(Level::E),
            "g" | "G" => Ok(Level::G),
            other => Err(Error::InvalidLevel(other.to_string())),
        }
    }
}

/// Occupation numbers of one symmetric basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occupation {
    pub n_s: usize,
    pub n_e: usize,
    pub n_g: usize,
}

impl Occupation {
    pub fn count(&self, level: Level) -> usize {
        match level {
            Level::S => self.n_s,
            Level::E => self.n_e,
            Level::G => self.n_g,
        }
    }

    fn counts(&self) -> [usize; 3] {
        [self.n_s, self.n_e, self.n_g]
    }

    fn from_counts(c: [usize; 3]) -> Self {
        Occupation {
            n_s: c[0],
            n_e: c[1],
            n_g: c[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    TwoLevel,
    ThreeLevel,
}

impl BasisKind {
    pub fn level_count(self) -> usize {
        match self {
            BasisKind::TwoLevel => 2,
            BasisKind::ThreeLevel => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::TwoLevel => "two-level",
            BasisKind::ThreeLevel => "three-level",
        }
    }
}

/// Permutation-symmetric basis of `N` identical atoms.
///
/// Two-level labels run over ascending `n_e` (index 0 is all atoms in `|g>`).
/// Three-level labels are lexicographic in `(n_s, n_e)` with `n_g` implied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectiveBasis {
    n_atoms: usize,
    kind: BasisKind,
    labels: Vec<Occupation>,
}

impl CollectiveBasis {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn level_count(&self) -> usize {
        self.kind.level_count()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Occupation] {
        &self.labels
    }

    /// Spin quantum number `j = N/2` of the two-level representation.
    pub fn spin<R: Real>(&self) -> R {
        R::from_usize_exact(self.n_atoms) / R::lit(2.0)
    }

    pub fn index_of(&self, occ: Occupation) -> Option<usize> {
        let n = self.n_atoms;
        if occ.n_s + occ.n_e + occ.n_g != n {
            return None;
        }
        match self.kind {
            BasisKind::TwoLevel => (occ.n_s == 0).then_some(occ.n_e),
            BasisKind::ThreeLevel => {
                let s = occ.n_s;
                let offset = s * (n + 1) - s * s.saturating_sub(1) / 2;
                Some(offset + occ.n_e)
            }
        }
    }

    pub(crate) fn expect_kind(&self, kind: BasisKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::WrongBasisKind {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }
}

pub fn build_two_level_basis(n_atoms: usize) -> Result<Arc<CollectiveBasis>> {
    if n_atoms == 0 {
        return Err(Error::ZeroAtoms);
    }
    let labels = (0..=n_atoms)
        .map(|n_e| Occupation {
            n_s: 0,
            n_e,
            n_g: n_atoms - n_e,
        })
        .collect();
    Ok(Arc::new(CollectiveBasis {
        n_atoms,
        kind: BasisKind::TwoLevel,
        labels,
    }))
}

pub fn build_three_level_basis(n_atoms: usize) -> Result<Arc<CollectiveBasis>> {
    if n_atoms == 0 {
        return Err(Error::ZeroAtoms);
    }
    let mut labels = Vec::with_capacity((n_atoms + 1) * (n_atoms + 2) / 2);
    for n_s in 0..=n_atoms {
        for n_e in 0..=(n_atoms - n_s) {
            labels.push(Occupation {
                n_s,
                n_e,
                n_g: n_atoms - n_s - n_e,
            });
        }
    }
    Ok(Arc::new(CollectiveBasis {
        n_atoms,
        kind: BasisKind::ThreeLevel,
        labels,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OperatorLabel {
    Jp,
    Jm,
    Jz,
    Jx,
    Jy,
    Transfer(Level, Level),
    Identity,
    Derived(String),
}

impl fmt::Display for OperatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorLabel::Jp => f.write_str("Jp"),
            OperatorLabel::Jm => f.write_str("Jm"),
            OperatorLabel::Jz => f.write_str("Jz"),
            OperatorLabel::Jx => f.write_str("Jx"),
            OperatorLabel::Jy => f.write_str("Jy"),
            OperatorLabel::Transfer(a, b) => write!(f, "J_{a}{b}"),
            OperatorLabel::Identity => f.write_str("I"),
            OperatorLabel::Derived(s) => f.write_str(s),
        }
    }
}

/// Dense collective operator tied to the basis it acts on.
#[derive(Debug, Clone)]
pub struct OperatorMatrix<R: Real> {
    basis: Arc<CollectiveBasis>,
    label: OperatorLabel,
    entries: DMatrix<C<R>>,
}

impl<R: Real> OperatorMatrix<R> {
    pub fn new(
        basis: Arc<CollectiveBasis>,
        label: OperatorLabel,
        entries: DMatrix<C<R>>,
    ) -> Result<Self> {
        let d = basis.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::BasisMismatch);
        }
        Ok(OperatorMatrix {
            basis,
            label,
            entries,
        })
    }

    pub fn identity(basis: &Arc<CollectiveBasis>) -> Self {
        let d = basis.dim();
        OperatorMatrix {
            basis: basis.clone(),
            label: OperatorLabel::Identity,
            entries: DMatrix::identity(d, d),
        }
    }

    pub fn basis(&self) -> &Arc<CollectiveBasis> {
        &self.basis
    }

    pub fn label(&self) -> &OperatorLabel {
        &self.label
    }

    pub fn entries(&self) -> &DMatrix<C<R>> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C<R>> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    fn check_same_basis(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.basis, &other.basis) || *self.basis == *other.basis {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix {
            basis: self.basis.clone(),
            label: OperatorLabel::Derived(format!("({})^dag", self.label)),
            entries: self.entries.adjoint(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_same_basis(rhs)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            label: OperatorLabel::Derived(format!("{} {}", self.label, rhs.label)),
            entries: &self.entries * &rhs.entries,
        })
    }

    /// Linear combination `a·self + b·other`.
    pub fn combine(&self, a: C<R>, other: &Self, b: C<R>) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            label: OperatorLabel::Derived(format!("lin({}, {})", self.label, other.label)),
            entries: self.entries.map(|z| z * a) + other.entries.map(|z| z * b),
        })
    }

    pub fn scaled(&self, s: C<R>) -> Self {
        OperatorMatrix {
            basis: self.basis.clone(),
            label: self.label.clone(),
            entries: self.entries.map(|z| z * s),
        }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix {
            basis: self.basis.clone(),
            label: OperatorLabel::Derived(format!("[{}, {}]", self.label, other.label)),
            entries: &self.entries * &other.entries - &other.entries * &self.entries,
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> R {
        max_abs_diff(&self.entries, &other.entries)
    }

    /// Largest entrywise deviation from the conjugate transpose.
    pub fn hermiticity_deviation(&self) -> R {
        max_abs_diff(&self.entries, &self.entries.adjoint())
    }
}

pub(crate) fn max_abs_diff<R: Real>(a: &DMatrix<C<R>>, b: &DMatrix<C<R>>) -> R {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).magnitude())
        .fold(R::zero(), |m, v| if v > m { v } else { m })
}

/// The five two-level collective operators.
#[derive(Debug, Clone)]
pub struct LadderOperators<R: Real> {
    pub jp: OperatorMatrix<R>,
    pub jm: OperatorMatrix<R>,
    pub jz: OperatorMatrix<R>,
    pub jx: OperatorMatrix<R>,
    pub jy: OperatorMatrix<R>,
}

pub fn ladder_operators<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<LadderOperators<R>> {
    basis.expect_kind(BasisKind::TwoLevel)?;
    let d = basis.dim();
    let j: R = basis.spin();
    let half = R::lit(0.5);

    let mut jm = DMatrix::<C<R>>::zeros(d, d);
    let mut jz = DMatrix::<C<R>>::zeros(d, d);
    for k in 0..d {
        // m = n_e - j
        let m = R::from_usize_exact(k) - j;
        jz[(k, k)] = c_re(m);
        if k > 0 {
            let amp = (j * (j + R::one()) - m * (m - R::one())).sqrt();
            jm[(k - 1, k)] = c_re(amp);
        }
    }
    let jp = jm.adjoint();
    let jx = (&jp + &jm).map(|z| z * half);
    // (Jp - Jm) / 2i = -i/2 (Jp - Jm)
    let jy = (&jp - &jm).map(|z| z * c(R::zero(), -half));

    let mk = |label, entries| OperatorMatrix {
        basis: basis.clone(),
        label,
        entries,
    };
    Ok(LadderOperators {
        jp: mk(OperatorLabel::Jp, jp),
        jm: mk(OperatorLabel::Jm, jm),
        jz: mk(OperatorLabel::Jz, jz),
        jx: mk(OperatorLabel::Jx, jx),
        jy: mk(OperatorLabel::Jy, jy),
    })
}

/// `J_ab` on a three-level basis: moves one atom from `b` into `a`.
pub fn transfer_operator<R: Real>(
    basis: &Arc<CollectiveBasis>,
    a: Level,
    b: Level,
) -> Result<OperatorMatrix<R>> {
    basis.expect_kind(BasisKind::ThreeLevel)?;
    let d = basis.dim();
    let mut m = DMatrix::<C<R>>::zeros(d, d);
    for (col, occ) in basis.labels().iter().enumerate() {
        if a == b {
            m[(col, col)] = c_re(R::from_usize_exact(occ.count(a)));
            continue;
        }
        let n_b = occ.count(b);
        if n_b == 0 {
            continue;
        }
        let n_a = occ.count(a);
        let mut counts = occ.counts();
        counts[b.slot()] -= 1;
        counts[a.slot()] += 1;
        let row = basis
            .index_of(Occupation::from_counts(counts))
            .expect("target occupation lies in the basis");
        m[(row, col)] = c_re(R::from_usize_exact(n_b * (n_a + 1)).sqrt());
    }
    Ok(OperatorMatrix {
        basis: basis.clone(),
        label: OperatorLabel::Transfer(a, b),
        entries: m,
    })
}

/// All nine `J_ab`, indexed `[a][b]` in `s, e, g` order.
pub fn transfer_operators<R: Real>(
    basis: &Arc<CollectiveBasis>,
) -> Result<[[OperatorMatrix<R>; 3]; 3]> {
    let row = |a| -> Result<[OperatorMatrix<R>; 3]> {
        Ok([
            transfer_operator(basis, a, Level::S)?,
            transfer_operator(basis, a, Level::E)?,
            transfer_operator(basis, a, Level::G)?,
        ])
    };
    Ok([row(Level::S)?, row(Level::E)?, row(Level::G)?])
}

/// Collective lowering operator that carries the emitted light:
/// `Jm` for two-level atoms, `J_ge` (|e> to |g>) for Λ atoms.
pub fn emission_operator<R: Real>(basis: &Arc<CollectiveBasis>) -> Result<OperatorMatrix<R>> {
    match basis.kind() {
        BasisKind::TwoLevel => Ok(ladder_operators(basis)?.jm),
        BasisKind::ThreeLevel => transfer_operator(basis, Level::G, Level::E),
    }
}

/// Maximum absolute deviations of the collective commutation relations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub n_atoms: usize,
    pub kind: BasisKind,
    /// `(relation, max |deviation|)` pairs.
    pub deviations: Vec<(String, f64)>,
}

impl AlgebraReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations
            .iter()
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }
}

pub fn verify_algebra<R: Real>(basis: &Arc<CollectiveBasis>) -> AlgebraReport {
    let deviations = match basis.kind() {
        BasisKind::TwoLevel => verify_two_level::<R>(basis),
        BasisKind::ThreeLevel => verify_three_level::<R>(basis),
    };
    AlgebraReport {
        n_atoms: basis.n_atoms(),
        kind: basis.kind(),
        deviations,
    }
}

fn verify_two_level<R: Real>(basis: &Arc<CollectiveBasis>) -> Vec<(String, f64)> {
    let ops = ladder_operators::<R>(basis).expect("two-level basis");
    let j: R = basis.spin();
    let one = c_re(R::one());
    let dev = |lhs: &DMatrix<C<R>>, rhs: &DMatrix<C<R>>| max_abs_diff(lhs, rhs).as_f64();

    let zp = ops.jz.commutator(&ops.jp).unwrap();
    let zm = ops.jz.commutator(&ops.jm).unwrap();
    let pm = ops.jp.commutator(&ops.jm).unwrap();
    let two_jz = ops.jz.entries().map(|z| z * R::lit(2.0));
    let casimir = ops.jx.entries() * ops.jx.entries()
        + ops.jy.entries() * ops.jy.entries()
        + ops.jz.entries() * ops.jz.entries();
    let d = basis.dim();
    let casimir_expected = DMatrix::<C<R>>::identity(d, d).map(|z| z * one * (j * (j + R::one())));

    vec![
        ("[Jz,Jp] - Jp".into(), dev(zp.entries(), ops.jp.entries())),
        (
            "[Jz,Jm] + Jm".into(),
            dev(zm.entries(), &ops.jm.entries().map(|z| -z)),
        ),
        ("[Jp,Jm] - 2Jz".into(), dev(pm.entries(), &two_jz)),
        (
            "Jx^2+Jy^2+Jz^2 - j(j+1)".into(),
            dev(&casimir, &casimir_expected),
        ),
    ]
}

fn verify_three_level<R: Real>(basis: &Arc<CollectiveBasis>) -> Vec<(String, f64)> {
    let ops = transfer_operators::<R>(basis).expect("three-level basis");
    let d = basis.dim();
    let mut worst_comm = R::zero();
    let mut worst_adj = R::zero();
    for a in Level::ALL {
        for b in Level::ALL {
            let ab = &ops[a.slot()][b.slot()];
            let ba = &ops[b.slot()][a.slot()];
            worst_adj = worst_adj.max(max_abs_diff(ab.entries(), &ba.entries().adjoint()));
            for cc in Level::ALL {
                for dd in Level::ALL {
                    let cd = &ops[cc.slot()][dd.slot()];
                    let comm = ab.entries() * cd.entries() - cd.entries() * ab.entries();
                    let mut expected = DMatrix::<C<R>>::zeros(d, d);
                    if b == cc {
                        expected += ops[a.slot()][dd.slot()].entries();
                    }
                    if dd == a {
                        expected -= ops[cc.slot()][b.slot()].entries();
                    }
                    worst_comm = worst_comm.max(max_abs_diff(&comm, &expected));
                }
            }
        }
    }
    let number = ops[0][0].entries() + ops[1][1].entries() + ops[2][2].entries();
    let n_identity =
        DMatrix::<C<R>>::identity(d, d).map(|z| z * R::from_usize_exact(basis.n_atoms()));
    vec![
        (
            "[J_ab,J_cd] - (d_bc J_ad - d_da J_cb)".into(),
            worst_comm.as_f64(),
        ),
        ("J_ab - J_ba^dag".into(), worst_adj.as_f64()),
        (
            "J_ss+J_ee+J_gg - N".into(),
            max_abs_diff(&number, &n_identity).as_f64(),
        ),
    ]
}
