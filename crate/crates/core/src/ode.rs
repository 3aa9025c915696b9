//! Adaptive Dormand–Prince 5(4) integrator with PI step control and
//! 4th-order dense output.
//!
//! The state is a flat slice of [`Magnitude`] elements so the same stepper
//! serves density matrices (column-major), wave functions and the real
//! mean-field system.

use std::ops::{Add, Mul, Sub};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::{Magnitude, Real};

pub trait Element<R: Real>:
    Magnitude<R> + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<R, Output = Self>
{
}

impl<R: Real, E> Element<R> for E where
    E: Magnitude<R> + Zero + Add<Output = E> + Sub<Output = E> + Mul<R, Output = E>
{
}

/// Right-hand side `dy = f(t, y)`.
pub trait OdeSystem<R: Real, E> {
    fn eval(&mut self, t: R, y: &[E], dy: &mut [E]) -> Result<()>;
}

impl<R: Real, E, F> OdeSystem<R, E> for F
where
    F: FnMut(R, &[E], &mut [E]) -> Result<()>,
{
    fn eval(&mut self, t: R, y: &[E], dy: &mut [E]) -> Result<()> {
        self(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl<R> {
    pub abs_tol: R,
    pub rel_tol: R,
    pub h_max: Option<R>,
    pub h_init: Option<R>,
    pub max_steps: usize,
}

impl<R: Real> StepControl<R> {
    /// Tolerances are clamped to what the scalar type can resolve.
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        let floor = R::machine_epsilon() * R::lit(10.0);
        let rel = R::lit(rel_tol).max(floor);
        StepControl {
            abs_tol: R::lit(abs_tol).max(floor * floor),
            rel_tol: rel,
            h_max: None,
            h_init: None,
            max_steps: 5_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: R) -> Self {
        self.h_max = Some(h_max);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
struct Coeffs<R> {
    c: [R; 4],
    a: [R; 20],
    e: [R; 6],
    d: [R; 6],
}

impl<R: Real> Coeffs<R> {
    fn new() -> Self {
        let l = R::lit;
        Coeffs {
            c: [l(C2), l(C3), l(C4), l(C5)],
            a: [
                l(A21),
                l(A31),
                l(A32),
                l(A41),
                l(A42),
                l(A43),
                l(A51),
                l(A52),
                l(A53),
                l(A54),
                l(A61),
                l(A62),
                l(A63),
                l(A64),
                l(A65),
                l(A71),
                l(A73),
                l(A74),
                l(A75),
                l(A76),
            ],
            e: [l(E1), l(E3), l(E4), l(E5), l(E6), l(E7)],
            d: [l(D1), l(D3), l(D4), l(D5), l(D6), l(D7)],
        }
    }
}

/// Single-trajectory Dormand–Prince stepper.
pub struct Dopri5<R: Real, E: Element<R>, F: OdeSystem<R, E>> {
    f: F,
    control: StepControl<R>,
    co: Coeffs<R>,
    t: R,
    y: Vec<E>,
    h: R,
    k: [Vec<E>; 7],
    stage: Vec<E>,
    y_new: Vec<E>,
    fsal_valid: bool,
    err_old: R,
    last_rejected: bool,
    // dense output of the last accepted step
    t_old: R,
    h_last: R,
    rcont: [Vec<E>; 5],
    has_dense: bool,
    stats: StepStats,
}

impl<R: Real, E: Element<R>, F: OdeSystem<R, E>> Dopri5<R, E, F> {
    pub fn new(f: F, t0: R, y0: Vec<E>, control: StepControl<R>) -> Self {
        let n = y0.len();
        let z = || vec![E::zero(); n];
        Dopri5 {
            f,
            control,
            co: Coeffs::new(),
            t: t0,
            y: y0,
            h: R::zero(),
            k: [z(), z(), z(), z(), z(), z(), z()],
            stage: z(),
            y_new: z(),
            fsal_valid: false,
            err_old: R::lit(1e-4),
            last_rejected: false,
            t_old: t0,
            h_last: R::zero(),
            rcont: [z(), z(), z(), z(), z()],
            has_dense: false,
            stats: StepStats::default(),
        }
    }

    pub fn t(&self) -> R {
        self.t
    }

    pub fn y(&self) -> &[E] {
        &self.y
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn system(&self) -> &F {
        &self.f
    }

    pub fn system_mut(&mut self) -> &mut F {
        &mut self.f
    }

    /// Start of the last accepted step.
    pub fn t_prev(&self) -> R {
        self.t_old
    }

    /// Mutable state access; the cached derivative is discarded.
    pub fn y_mut(&mut self) -> &mut [E] {
        self.fsal_valid = false;
        &mut self.y
    }

    /// Restart from a new state at the current time (e.g. after a jump).
    pub fn reset(&mut self, y: &[E]) {
        self.y.copy_from_slice(y);
        self.fsal_valid = false;
        self.has_dense = false;
        self.last_rejected = false;
    }

    /// Restart from state `y` at time `t`, keeping the current step size.
    pub fn restart_at(&mut self, t: R, y: &[E]) {
        self.t = t;
        self.reset(y);
    }

    /// Multiply the state, the cached derivative and the dense output by `s`.
    /// Only valid for linear systems, where the derivative scales alongside.
    pub fn scale_linear(&mut self, s: R) {
        self.y.iter_mut().for_each(|v| *v = *v * s);
        if self.fsal_valid {
            self.k[0].iter_mut().for_each(|v| *v = *v * s);
        }
        if self.has_dense {
            for r in self.rcont.iter_mut() {
                r.iter_mut().for_each(|v| *v = *v * s);
            }
        }
    }

    fn sk(&self, a: E, b: E) -> R {
        let m = a.magnitude().max(b.magnitude());
        self.control.abs_tol + self.control.rel_tol * m
    }

    fn rms(&self, v: &[E], scale_ref: &[E]) -> R {
        let n = v.len().max(1);
        let mut acc = R::zero();
        for (x, y) in v.iter().zip(scale_ref) {
            let s = self.sk(*y, *y);
            let q = x.magnitude() / s;
            acc += q * q;
        }
        (acc / R::from_usize_exact(n)).sqrt()
    }

    fn eval(&mut self, t: R, which: usize, from_stage: bool) -> Result<()> {
        let src = if from_stage { &self.stage } else { &self.y };
        // split borrow
        let (f, k) = (&mut self.f, &mut self.k[which]);
        f.eval(t, src, k)?;
        self.stats.evaluations += 1;
        Ok(())
    }

    fn ensure_fsal(&mut self) -> Result<()> {
        if !self.fsal_valid {
            self.eval(self.t, 0, false)?;
            self.fsal_valid = true;
        }
        Ok(())
    }

    fn initial_step(&mut self, t_end: R) -> Result<R> {
        if let Some(h) = self.control.h_init {
            return Ok(h);
        }
        self.ensure_fsal()?;
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k[0], &self.y);
        let small = R::lit(1e-10);
        let mut h0 = if d0 < small || d1 < small {
            R::lit(1e-6)
        } else {
            R::lit(0.01) * d0 / d1
        };
        let span = (t_end - self.t).abs();
        h0 = h0.min(span);
        if let Some(hm) = self.control.h_max {
            h0 = h0.min(hm);
        }
        for i in 0..self.y.len() {
            self.stage[i] = self.y[i] + self.k[0][i] * h0;
        }
        self.eval(self.t + h0, 1, true)?;
        let diff: Vec<E> = self.k[1]
            .iter()
            .zip(&self.k[0])
            .map(|(a, b)| *a - *b)
            .collect();
        let d2 = self.rms(&diff, &self.y) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= R::lit(1e-15) {
            R::lit(1e-6).max(h0 * R::lit(1e-3))
        } else {
            (R::lit(0.01) / dm).powf(R::lit(0.2))
        };
        let mut h = (R::lit(100.0) * h0).min(h1).min(span);
        if let Some(hm) = self.control.h_max {
            h = h.min(hm);
        }
        Ok(h)
    }

    /// Take one accepted step, never stepping past `t_end`.
    pub fn step(&mut self, t_end: R) -> Result<()> {
        if self.h == R::zero() {
            self.h = self.initial_step(t_end)?;
        }
        self.ensure_fsal()?;
        let n = self.y.len();
        let co = self.co;
        let a = co.a;
        loop {
            if self.stats.accepted + self.stats.rejected >= self.control.max_steps {
                return Err(Error::StepBudgetExhausted {
                    t: self.t.as_f64(),
                    max_steps: self.control.max_steps,
                });
            }
            let mut h = self.h;
            if let Some(hm) = self.control.h_max {
                h = h.min(hm);
            }
            let remaining = t_end - self.t;
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let h_floor = R::machine_epsilon() * R::lit(10.0) * self.t.abs().max(R::one());
            if h < h_floor {
                return Err(Error::StepSizeUnderflow {
                    t: self.t.as_f64(),
                    h: h.as_f64(),
                });
            }
            let t = self.t;

            macro_rules! stage {
                ($dst:expr, $c:expr, [$(($kidx:expr, $coef:expr)),*]) => {{
                    for i in 0..n {
                        let mut acc = self.y[i];
                        $( acc = acc + self.k[$kidx][i] * (h * $coef); )*
                        self.stage[i] = acc;
                    }
                    self.eval(t + $c * h, $dst, true)?;
                }};
            }
            stage!(1, co.c[0], [(0, a[0])]);
            stage!(2, co.c[1], [(0, a[1]), (1, a[2])]);
            stage!(3, co.c[2], [(0, a[3]), (1, a[4]), (2, a[5])]);
            stage!(4, co.c[3], [(0, a[6]), (1, a[7]), (2, a[8]), (3, a[9])]);
            stage!(
                5,
                R::one(),
                [(0, a[10]), (1, a[11]), (2, a[12]), (3, a[13]), (4, a[14])]
            );
            for i in 0..n {
                self.y_new[i] = self.y[i]
                    + self.k[0][i] * (h * a[15])
                    + self.k[2][i] * (h * a[16])
                    + self.k[3][i] * (h * a[17])
                    + self.k[4][i] * (h * a[18])
                    + self.k[5][i] * (h * a[19]);
            }
            {
                let (f, k6) = (&mut self.f, &mut self.k[6]);
                f.eval(t + h, &self.y_new, k6)?;
                self.stats.evaluations += 1;
            }

            let e = co.e;
            let mut acc = R::zero();
            let mut finite = true;
            for i in 0..n {
                let err = (self.k[0][i] * e[0]
                    + self.k[2][i] * e[1]
                    + self.k[3][i] * e[2]
                    + self.k[4][i] * e[3]
                    + self.k[5][i] * e[4]
                    + self.k[6][i] * e[5])
                    * h;
                let s = self.sk(self.y[i], self.y_new[i]);
                let q = err.magnitude() / s;
                if !q.is_finite() {
                    finite = false;
                }
                acc += q * q;
            }
            let err = (acc / R::from_usize_exact(n.max(1))).sqrt();
            if !finite || !err.is_finite() {
                // shrink hard and retry; a persistent blow-up ends in underflow
                self.stats.rejected += 1;
                self.h = h * R::lit(0.1);
                self.last_rejected = true;
                continue;
            }

            let expo1 = R::lit(0.2 - BETA * 0.75);
            let fac11 = err.powf(expo1);
            let safe = R::lit(SAFETY);
            if err <= R::one() {
                let mut fac = fac11 / self.err_old.powf(R::lit(BETA));
                fac = (fac / safe)
                    .min(R::lit(1.0 / FAC_MIN))
                    .max(R::lit(1.0 / FAC_MAX));
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.err_old = err.max(R::lit(1e-4));
                self.build_dense(h);
                self.t_old = t;
                self.h_last = h;
                self.t = if last { t_end } else { t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.fsal_valid = true;
                self.has_dense = true;
                self.last_rejected = false;
                self.stats.accepted += 1;
                // keep the free-running step proposal when clamped to t_end
                if !last || h_new < self.h {
                    self.h = h_new;
                }
                return Ok(());
            } else {
                let fac = (fac11 / safe).min(R::lit(1.0 / FAC_MIN));
                self.h = h / fac;
                self.last_rejected = true;
                self.stats.rejected += 1;
            }
        }
    }

    fn build_dense(&mut self, h: R) {
        let d = self.co.d;
        for i in 0..self.y.len() {
            let y0 = self.y[i];
            let y1 = self.y_new[i];
            let ydiff = y1 - y0;
            let bspl = self.k[0][i] * h - ydiff;
            self.rcont[0][i] = y0;
            self.rcont[1][i] = ydiff;
            self.rcont[2][i] = bspl;
            self.rcont[3][i] = ydiff - self.k[6][i] * h - bspl;
            self.rcont[4][i] = (self.k[0][i] * d[0]
                + self.k[2][i] * d[1]
                + self.k[3][i] * d[2]
                + self.k[4][i] * d[3]
                + self.k[5][i] * d[4]
                + self.k[6][i] * d[5])
                * h;
        }
    }

    /// Evaluate the dense output of the last accepted step at `t`
    /// (`t_prev() <= t <= t()`).
    pub fn interpolate(&self, t: R, out: &mut [E]) {
        if !self.has_dense || t >= self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        let theta = (t - self.t_old) / self.h_last;
        let theta1 = R::one() - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rcont[0][i]
                + (self.rcont[1][i]
                    + (self.rcont[2][i]
                        + (self.rcont[3][i] + self.rcont[4][i] * theta1) * theta)
                        * theta1)
                    * theta;
        }
    }
}

/// Integrate from `t_grid[0]` across the grid, calling `observe` at every
/// grid time. `post_step` may project the state after each accepted step.
pub fn integrate_on_grid<R, E, F>(
    f: F,
    y0: Vec<E>,
    t_grid: &[R],
    control: StepControl<R>,
    mut post_step: impl FnMut(&mut [E]),
    mut observe: impl FnMut(usize, R, &[E]) -> Result<()>,
) -> Result<StepStats>
where
    R: Real,
    E: Element<R>,
    F: OdeSystem<R, E>,
{
    check_grid(t_grid)?;
    let t_end = *t_grid.last().unwrap();
    let mut solver = Dopri5::new(f, t_grid[0], y0, control);
    observe(0, t_grid[0], solver.y())?;
    let mut next = 1;
    let mut buf = solver.y().to_vec();
    while next < t_grid.len() {
        solver.step(t_end)?;
        while next < t_grid.len() && t_grid[next] <= solver.t() {
            solver.interpolate(t_grid[next], &mut buf);
            observe(next, t_grid[next], &buf)?;
            next += 1;
        }
        post_step(solver.y_mut());
    }
    Ok(solver.stats())
}

pub fn check_grid<R: Real>(t_grid: &[R]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    if t_grid[0] < R::zero() {
        return Err(Error::InvalidParameter("time grid starts before t = 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "time grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// `n` equally spaced samples on `[0, t_max]`.
pub fn uniform_grid<R: Real>(t_max: R, n: usize) -> Vec<R> {
    if n < 2 {
        return vec![R::zero()];
    }
    let step = t_max / R::from_usize_exact(n - 1);
    (0..n)
        .map(|k| {
            if k == n - 1 {
                t_max
            } else {
                step * R::from_usize_exact(k)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{c, C};

    #[test]
    fn exponential_decay_on_grid() {
        let grid = uniform_grid(5.0f64, 51);
        let mut worst = 0.0f64;
        integrate_on_grid(
            |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = -y[0];
                Ok(())
            },
            vec![1.0],
            &grid,
            StepControl::new(1e-12, 1e-10),
            |_| {},
            |_, t, y| {
                worst = worst.max((y[0] - (-t).exp()).abs());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn harmonic_oscillator_complex_phase() {
        // dy/dt = -i w y
        let w = 3.0;
        let grid = uniform_grid(10.0f64, 101);
        let mut worst = 0.0f64;
        integrate_on_grid(
            move |_t: f64, y: &[C<f64>], dy: &mut [C<f64>]| {
                dy[0] = c(0.0, -w) * y[0];
                Ok(())
            },
            vec![c(1.0, 0.0)],
            &grid,
            StepControl::new(1e-12, 1e-10),
            |_| {},
            |_, t, y| {
                let exact = c((w * t).cos(), -(w * t).sin());
                worst = worst.max((y[0] - exact).norm());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn dense_output_is_fourth_order_accurate() {
        // coarse steps, compare interpolant mid-step against exact
        let mut control = StepControl::<f64>::new(1e-6, 1e-6);
        control.h_max = Some(0.5);
        let mut s = Dopri5::new(
            |t: f64, _y: &[f64], dy: &mut [f64]| {
                dy[0] = t.cos();
                Ok(())
            },
            0.0,
            vec![0.0],
            control,
        );
        let mut out = vec![0.0];
        let mut worst = 0.0f64;
        while s.t() < 3.0 {
            s.step(3.0).unwrap();
            for q in 1..10 {
                let tt = s.t_prev() + (s.t() - s.t_prev()) * q as f64 / 10.0;
                s.interpolate(tt, &mut out);
                worst = worst.max((out[0] - tt.sin()).abs());
            }
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid::<f64>(&[]).is_err());
        assert!(check_grid(&[-1.0, 0.0]).is_err());
        assert!(check_grid(&[0.0, 1.0, 1.0]).is_err());
        assert!(check_grid(&[0.0, 0.5, 1.0]).is_ok());
        let g = uniform_grid(2.0f64, 5);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn blow_up_reports_failure() {
        let grid = vec![0.0, 2.0];
        let r = integrate_on_grid(
            |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            vec![1.0],
            &grid,
            StepControl::new(1e-10, 1e-10),
            |_| {},
            |_, _, _| Ok(()),
        );
        assert!(matches!(
            r,
            Err(Error::StepSizeUnderflow { .. }) | Err(Error::StepBudgetExhausted { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let grid = uniform_grid(2.0f32, 11);
        let mut worst = 0.0f32;
        integrate_on_grid(
            |_t: f32, y: &[f32], dy: &mut [f32]| {
                dy[0] = -2.0 * y[0];
                Ok(())
            },
            vec![1.0f32],
            &grid,
            StepControl::new(1e-7, 1e-6),
            |_| {},
            |_, t, y| {
                worst = worst.max((y[0] - (-2.0 * t).exp()).abs());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 1e-4, "{worst}");
    }
}
