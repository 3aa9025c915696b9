//! Self-checks behind the `verify` subcommand: exact operator algebra,
//! agreement with the full product-space oracle and the single-atom law.

use serde::{Deserialize, Serialize};

use super::run::{master_series, Conservation};
use crate::algebra::{build_three_level_basis, build_two_level_basis, verify_algebra, BasisKind, Level};
use crate::error::Result;
use crate::lindblad::{HamiltonianSpec, LindbladProblem};
use crate::ode::uniform_grid;
use crate::product::evolve_full_product;
use crate::state::{all_excited_state, all_metastable_state};

pub const ALGEBRA_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-6;
pub const ANALYTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Largest deviation of any observable channel between the symmetric
/// master equation and the product-space oracle, starting with every atom
/// in `initial`, plus the invariant report of the symmetric run.
pub fn oracle_deviation(
    n_atoms: usize,
    kind: BasisKind,
    hamiltonian: HamiltonianSpec<f64>,
    gamma: f64,
    initial: Level,
    t_grid: &[f64],
) -> Result<(f64, Conservation)> {
    let (basis, rho0) = match kind {
        BasisKind::TwoLevel => {
            let b = build_two_level_basis(n_atoms)?;
            let rho = all_excited_state(&b)?;
            (b, rho)
        }
        BasisKind::ThreeLevel => {
            let b = build_three_level_basis(n_atoms)?;
            let rho = all_metastable_state(&b)?.to_density();
            (b, rho)
        }
    };
    debug_assert!(matches!(
        (kind, initial),
        (BasisKind::TwoLevel, Level::E) | (BasisKind::ThreeLevel, Level::S)
    ));
    let problem = LindbladProblem::new(basis, hamiltonian, gamma)?;
    let (sym, cons) = master_series(&problem, &rho0, t_grid)?;
    let full = evolve_full_product(n_atoms, kind, &hamiltonian, gamma, initial, t_grid)?;
    let mut dev = 0.0f64;
    for ch in &sym.channels {
        let other = full.channel(&ch.name).expect("same channel layout");
        for (a, b) in ch.values.iter().zip(other) {
            dev = dev.max((a - b).abs());
        }
    }
    Ok((dev, cons))
}

/// Largest `|I(t) - γ e^{-γt}|` for one atom with `γ = 1` over `[0, 10]`.
pub fn single_atom_deviation() -> Result<f64> {
    let b = build_two_level_basis(1)?;
    let problem = LindbladProblem::new(b.clone(), HamiltonianSpec::None, 1.0)?;
    let grid = uniform_grid(10.0, 201);
    let (series, _) = master_series(&problem, &all_excited_state(&b)?, &grid)?;
    Ok(series
        .t
        .iter()
        .zip(series.intensity()?)
        .map(|(t, i)| (i - (-t).exp()).abs())
        .fold(0.0, f64::max))
}

pub fn run_verify() -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let two = (1..=30)
        .map(|n| build_two_level_basis(n).map(|b| verify_algebra::<f64>(&b).max_deviation()))
        .collect::<Result<Vec<_>>>()?;
    checks.push(Check::at_most(
        "two-level algebra, N = 1..30",
        two.into_iter().fold(0.0, f64::max),
        ALGEBRA_TOL,
    ));
    let three = (1..=10)
        .map(|n| build_three_level_basis(n).map(|b| verify_algebra::<f64>(&b).max_deviation()))
        .collect::<Result<Vec<_>>>()?;
    checks.push(Check::at_most(
        "three-level algebra, N = 1..10",
        three.into_iter().fold(0.0, f64::max),
        ALGEBRA_TOL,
    ));

    let grid = uniform_grid(8.0, 161);
    for n in [2, 3] {
        let (d, _) = oracle_deviation(n, BasisKind::TwoLevel, HamiltonianSpec::None, 1.0, Level::E, &grid)?;
        checks.push(Check::at_most(format!("product oracle, free decay, N = {n}"), d, ORACLE_TOL));
        let drive = HamiltonianSpec::ConstantDrive { omega: 1.5, delta: 0.3 };
        let (d, _) = oracle_deviation(n, BasisKind::TwoLevel, drive, 1.0, Level::E, &grid)?;
        checks.push(Check::at_most(format!("product oracle, driven, N = {n}"), d, ORACLE_TOL));
    }
    let raman = HamiltonianSpec::RamanPulse { omega0: 1.0, pulse_length: 5.0, delta: 1.0 };
    let (d, _) = oracle_deviation(2, BasisKind::ThreeLevel, raman, 1.0, Level::S, &uniform_grid(7.5, 151))?;
    checks.push(Check::at_most("product oracle, Raman pulse, N = 2", d, ORACLE_TOL));
    checks.push(Check::at_most(
        "single atom, I(t) = exp(-t)",
        single_atom_deviation()?,
        ANALYTIC_TOL,
    ));
    Ok(VerifyReport { checks })
}
