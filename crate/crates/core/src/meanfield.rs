//! Mean-field limit of the driven Dicke model.
//!
//! ```text
//! dJ₊/dt = -iΔJ₊ + iΩJz + γJ₊Jz
//! dJz/dt = i(Ω/2)(J₊ - J₋) - γJ₊J₋
//! ```
//! with `J₋ = conj(J₊)`. The Bloch radius `|J₊|² + Jz²` is conserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{check_grid, integrate_on_grid, StepControl};
use crate::scalar::{c, norm_sqr, Real, C};

pub const ABS_TOL: f64 = 1e-12;
pub const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState<R: Real> {
    pub j_plus: C<R>,
    pub j_z: R,
}

impl<R: Real> MeanFieldState<R> {
    pub fn j_minus(&self) -> C<R> {
        self.j_plus.conj()
    }

    /// `J₊J₋ = |J₊|²`
    pub fn j_plus_j_minus(&self) -> R {
        norm_sqr(self.j_plus)
    }

    pub fn bloch_radius_sq(&self) -> R {
        self.j_plus_j_minus() + self.j_z * self.j_z
    }

    /// Bloch vector of length `N/2` at polar angle `theta` from the north pole.
    pub fn tipped(n_atoms: R, theta: R) -> Self {
        let r = n_atoms * R::lit(0.5);
        MeanFieldState {
            j_plus: c(r * theta.sin(), R::zero()),
            j_z: r * theta.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldDerivative<R: Real> {
    pub d_j_plus: C<R>,
    pub d_j_z: R,
}

pub fn mf_rhs<R: Real>(state: &MeanFieldState<R>, omega: R, delta: R, gamma: R) -> MeanFieldDerivative<R> {
    let i = c(R::zero(), R::one());
    let jp = state.j_plus;
    let jz = state.j_z;
    let d_j_plus = i * jp * (-delta) + i * (omega * jz) + jp * (gamma * jz);
    // i(Ω/2)(J₊ - J₋) = -Ω Im J₊
    let d_j_z = -omega * jp.im - gamma * state.j_plus_j_minus();
    MeanFieldDerivative { d_j_plus, d_j_z }
}

/// Fluctuation-seeded tipping angle `2/√N`.
pub fn default_tipping_angle<R: Real>(n_atoms: R) -> R {
    R::lit(2.0) / n_atoms.sqrt()
}

pub fn mf_evolve<R: Real>(
    omega: R,
    delta: R,
    gamma: R,
    n_atoms: R,
    theta0: R,
    t_grid: &[R],
) -> Result<Vec<MeanFieldState<R>>> {
    if !(theta0 > R::zero() && theta0 <= R::pi()) {
        return Err(Error::InvalidParameter(format!(
            "tipping angle must lie in (0, pi], got {theta0:?}"
        )));
    }
    check_grid(t_grid)?;
    let s0 = MeanFieldState::tipped(n_atoms, theta0);
    let unpack = |y: &[R]| MeanFieldState {
        j_plus: c(y[0], y[1]),
        j_z: y[2],
    };
    let rhs = |_t: R, y: &[R], dy: &mut [R]| -> Result<()> {
        let d = mf_rhs(&unpack(y), omega, delta, gamma);
        dy[0] = d.d_j_plus.re;
        dy[1] = d.d_j_plus.im;
        dy[2] = d.d_j_z;
        Ok(())
    };
    let mut out = Vec::with_capacity(t_grid.len());
    integrate_on_grid(
        rhs,
        vec![s0.j_plus.re, s0.j_plus.im, s0.j_z],
        t_grid,
        StepControl::new(ABS_TOL, REL_TOL),
        |_| {},
        |_, _, y| {
            out.push(unpack(y));
            Ok(())
        },
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyRegime {
    /// `γN ≤ 2Ω`: strong driving, vanishing imbalance.
    Disordered,
    /// `γN > 2Ω`: negative imbalance.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldSteady<R: Real> {
    pub j_z: R,
    pub j_plus_j_minus: R,
    /// A representative `J₊` on the fixed point.
    pub j_plus: C<R>,
    pub regime: SteadyRegime,
}

/// Resonant (`Δ = 0`) mean-field fixed point on the Bloch sphere.
pub fn mf_steady<R: Real>(omega: R, gamma: R, n_atoms: R) -> Result<MeanFieldSteady<R>> {
    if !(omega >= R::zero()) || !(gamma > R::zero()) || !(n_atoms > R::zero()) {
        return Err(Error::InvalidParameter(
            "mean-field steady state needs omega >= 0, gamma > 0, N > 0".into(),
        ));
    }
    let r = n_atoms * R::lit(0.5);
    let two = R::lit(2.0);
    if gamma * n_atoms <= two * omega {
        // |J₊| = N/2 and -Ω Im J₊ = γ|J₊|²
        let im = -gamma * r * r / omega;
        let re = (r * r - im * im).max(R::zero()).sqrt();
        Ok(MeanFieldSteady {
            j_z: R::zero(),
            j_plus_j_minus: r * r,
            j_plus: c(re, im),
            regime: SteadyRegime::Disordered,
        })
    } else {
        let ratio = omega / gamma;
        let pm = ratio * ratio;
        Ok(MeanFieldSteady {
            j_z: -(r * r - pm).max(R::zero()).sqrt(),
            j_plus_j_minus: pm,
            j_plus: c(R::zero(), -ratio),
            regime: SteadyRegime::Ordered,
        })
    }
}

/// Delay time `ln N / (γN)`.
pub fn mf_delay<R: Real>(gamma: R, n_atoms: R) -> R {
    n_atoms.ln() / (gamma * n_atoms)
}
