//! Measured quantities: emitted intensity, populations, uncertainties and
//! pulse timing. Per-atom normalization happens here and nowhere else.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{emission_operator, ladder_operators, BasisKind, CollectiveBasis};
use crate::error::{Error, Result};
use crate::scalar::{norm_sqr, Real};
use crate::state::{DensityOperator, Expectation, StateVector};

pub const INTENSITY: &str = "intensity";
pub const INTENSITY_PER_ATOM: &str = "intensity_per_atom";
pub const JZ_PER_N: &str = "jz_per_n";
pub const JS_PER_N: &str = "js_per_n";
pub const JE_PER_N: &str = "je_per_n";
pub const JG_PER_N: &str = "jg_per_n";

/// Suffix of the standard-error companion of a channel.
pub const SE_SUFFIX: &str = "_se";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// Sampled observable record on a common time grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub channels: Vec<Channel>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>) -> Self {
        TimeSeries {
            t,
            channels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.t.len() {
            return Err(Error::InvalidParameter(format!(
                "channel length {} does not match time grid length {}",
                values.len(),
                self.t.len()
            )));
        }
        self.channels.push(Channel {
            name: name.into(),
            values,
        });
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    pub fn intensity(&self) -> Result<&[f64]> {
        self.channel(INTENSITY).ok_or(Error::EmptySeries)
    }

    /// Pulse summary of the intensity channel.
    pub fn pulse_summary(&self) -> Result<PulseSummary> {
        delay_time(&self.t, self.intensity()?)
    }
}

/// Per-sample expectation values in raw (unnormalized) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub intensity: f64,
    /// `<n_s>, <n_e>, <n_g>`
    pub populations: [f64; 3],
}

impl Sample {
    pub fn jz(&self) -> f64 {
        0.5 * (self.populations[1] - self.populations[2])
    }

    /// Channel values in the fixed order of [`channel_names`].
    pub fn channel_values(&self, kind: BasisKind, n_atoms: usize) -> Vec<f64> {
        let n = n_atoms as f64;
        match kind {
            BasisKind::TwoLevel => vec![self.intensity, self.intensity / n, self.jz() / n],
            BasisKind::ThreeLevel => vec![
                self.intensity,
                self.intensity / n,
                self.populations[0] / n,
                self.populations[1] / n,
                self.populations[2] / n,
            ],
        }
    }
}

pub fn channel_names(kind: BasisKind) -> &'static [&'static str] {
    match kind {
        BasisKind::TwoLevel => &[INTENSITY, INTENSITY_PER_ATOM, JZ_PER_N],
        BasisKind::ThreeLevel => &[INTENSITY, INTENSITY_PER_ATOM, JS_PER_N, JE_PER_N, JG_PER_N],
    }
}

/// Assemble a [`TimeSeries`] from per-time samples.
pub fn series_from_samples(
    t: Vec<f64>,
    samples: &[Sample],
    kind: BasisKind,
    n_atoms: usize,
) -> Result<TimeSeries> {
    let names = channel_names(kind);
    let mut cols = vec![Vec::with_capacity(samples.len()); names.len()];
    for s in samples {
        for (col, v) in cols.iter_mut().zip(s.channel_values(kind, n_atoms)) {
            col.push(v);
        }
    }
    let mut ts = TimeSeries::new(t);
    for (name, col) in names.iter().zip(cols) {
        ts.push_channel(*name, col)?;
    }
    Ok(ts)
}

/// Cached diagonal observables of a basis. `J₊J₋` (or `J_eg J_ge`) and the
/// level occupations are diagonal in the collective basis.
#[derive(Debug, Clone)]
pub struct Probe<R: Real> {
    basis: Arc<CollectiveBasis>,
    gamma: R,
    decay_diag: Vec<R>,
}

impl<R: Real> Probe<R> {
    pub fn new(basis: &Arc<CollectiveBasis>, gamma: R) -> Result<Self> {
        // (J†J)_ii is the squared norm of column i of J
        let j = emission_operator::<R>(basis)?;
        let decay_diag = j
            .entries()
            .column_iter()
            .map(|col| col.iter().fold(R::zero(), |a, z| a + norm_sqr(*z)))
            .collect();
        Ok(Probe {
            basis: basis.clone(),
            gamma,
            decay_diag,
        })
    }

    pub fn basis(&self) -> &Arc<CollectiveBasis> {
        &self.basis
    }

    fn weighted<F: Fn(usize) -> R>(&self, weight: impl Fn(usize) -> R, prob: F) -> R {
        (0..self.basis.dim()).fold(R::zero(), |acc, i| acc + weight(i) * prob(i))
    }

    fn sample_with(&self, prob: impl Fn(usize) -> R) -> Sample {
        let labels = self.basis.labels();
        let intensity = self.gamma * self.weighted(|i| self.decay_diag[i], &prob);
        let pop = |f: fn(&crate::algebra::Occupation) -> usize| {
            self.weighted(|i| R::from_usize_exact(f(&labels[i])), &prob)
                .as_f64()
        };
        Sample {
            intensity: intensity.as_f64(),
            populations: [pop(|o| o.n_s), pop(|o| o.n_e), pop(|o| o.n_g)],
        }
    }

    pub fn sample_density(&self, rho: &DensityOperator<R>) -> Sample {
        self.sample_with(|i| rho.matrix()[(i, i)].re)
    }

    /// Samples a pure state after normalizing it.
    pub fn sample_pure(&self, psi: &StateVector<R>) -> Sample {
        let n2 = psi.norm_squared();
        self.sample_with(|i| norm_sqr(psi.amplitudes()[i]) / n2)
    }

    pub fn intensity_density(&self, rho: &DensityOperator<R>) -> R {
        self.gamma * self.weighted(|i| self.decay_diag[i], |i| rho.matrix()[(i, i)].re)
    }
}

/// `I = γ <J₊J₋>` (`γ <J_eg J_ge>` for Λ atoms). The imaginary residue is
/// checked to be below `1e-10` and then discarded.
pub fn intensity<R: Real, S: Expectation<R>>(
    state: &S,
    basis: &Arc<CollectiveBasis>,
    gamma: R,
) -> Result<R> {
    let j = emission_operator::<R>(basis)?;
    let k = j.adjoint().matmul(&j)?;
    let v = state.expectation(&k)?;
    let scale = v.re.abs().max(R::one());
    if v.im.abs() > R::lit(1e-10) * scale {
        return Err(Error::InvalidState(format!(
            "intensity has imaginary part {:e}",
            v.im.as_f64()
        )));
    }
    Ok(gamma * v.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainties {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

/// Standard deviations of `Jx`, `Jy`, `Jz` (two-level only).
pub fn uncertainties<R: Real, S: Expectation<R>>(
    state: &S,
    basis: &Arc<CollectiveBasis>,
) -> Result<Uncertainties> {
    let ops = ladder_operators::<R>(basis)?;
    let sd = |op: &crate::algebra::OperatorMatrix<R>| -> Result<f64> {
        let m1 = state.expectation(op)?.re;
        let m2 = state.expectation(&op.matmul(op)?)?.re;
        let var = (m2 - m1 * m1).max(R::zero());
        Ok(var.sqrt().as_f64())
    };
    Ok(Uncertainties {
        dx: sd(&ops.jx)?,
        dy: sd(&ops.jy)?,
        dz: sd(&ops.jz)?,
    })
}

/// Timing of the intensity maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSummary {
    pub peak_time: f64,
    pub peak_value: f64,
    pub delay_time: f64,
    /// Maximum sits on the first or last sample (no interior peak).
    pub boundary: bool,
    /// Index of the largest sample.
    pub peak_index: usize,
}

/// Locate the maximum by a three-point quadratic through the largest sample
/// and its neighbours; nonuniform spacing is allowed.
pub fn delay_time(t: &[f64], values: &[f64]) -> Result<PulseSummary> {
    if t.is_empty() || t.len() != values.len() {
        return Err(Error::EmptySeries);
    }
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[k] {
            k = i;
        }
    }
    let last = t.len() - 1;
    if k == 0 || k == last {
        return Ok(PulseSummary {
            peak_time: t[k],
            peak_value: values[k],
            delay_time: t[k],
            boundary: true,
            peak_index: k,
        });
    }
    let (t0, t1, t2) = (t[k - 1], t[k], t[k + 1]);
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    let h1 = t1 - t0;
    let h2 = t2 - t1;
    let d1 = (y1 - y0) / h1;
    let d2 = (y2 - y1) / h2;
    let curv = (d2 - d1) / (h1 + h2);
    let (peak_time, peak_value) = if curv < 0.0 {
        let slope = d1 + curv * h1;
        let dt = -slope / (2.0 * curv);
        (t1 + dt, y1 - slope * slope / (4.0 * curv))
    } else {
        (t1, y1)
    };
    Ok(PulseSummary {
        peak_time,
        peak_value,
        delay_time: peak_time,
        boundary: false,
        peak_index: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub value: f64,
    pub time: f64,
    /// Standard error at the peak sample, when the series carries one.
    pub se: Option<f64>,
}

/// Interpolated maximum of `intensity / N`.
pub fn peak_intensity_per_atom(series: &TimeSeries, n_atoms: usize) -> Result<PeakEstimate> {
    let values = series.intensity()?;
    let s = delay_time(&series.t, values)?;
    let n = n_atoms as f64;
    let se = series
        .channel(&format!("{INTENSITY}{SE_SUFFIX}"))
        .map(|se| se[s.peak_index] / n);
    Ok(PeakEstimate {
        value: s.peak_value / n,
        time: s.peak_time,
        se,
    })
}

/// Trapezoidal quadrature on the sample grid.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{build_three_level_basis, build_two_level_basis};
    use crate::state::{all_excited_state, all_ground_state, all_metastable_state};

    #[test]
    fn intensity_examples() {
        let b = build_two_level_basis(7).unwrap();
        let g = all_ground_state::<f64>(&b).unwrap();
        assert_eq!(intensity(&g, &b, 1.3).unwrap(), 0.0);
        let e = all_excited_state::<f64>(&b).unwrap();
        let i = intensity(&e, &b, 0.5).unwrap();
        assert!((i - 0.5 * 7.0).abs() < 1e-12);
        let probe = Probe::new(&b, 0.5).unwrap();
        let s = probe.sample_density(&e);
        assert!((s.intensity - 3.5).abs() < 1e-12);
        assert!((s.channel_values(BasisKind::TwoLevel, 7)[1] - 0.5).abs() < 1e-12);
        assert!((s.jz() - 3.5).abs() < 1e-12);

        let b3 = build_three_level_basis(4).unwrap();
        let m = all_metastable_state::<f64>(&b3).unwrap();
        assert_eq!(intensity(&m, &b3, 2.0).unwrap(), 0.0);
        let s = Probe::new(&b3, 2.0).unwrap().sample_pure(&m);
        assert_eq!(s.populations, [4.0, 0.0, 0.0]);
    }

    #[test]
    fn emission_rate_operator_is_diagonal() {
        for b in [build_two_level_basis(5).unwrap(), build_three_level_basis(4).unwrap()] {
            let j = emission_operator::<f64>(&b).unwrap();
            let k = j.adjoint().matmul(&j).unwrap();
            let probe = Probe::new(&b, 1.0).unwrap();
            for r in 0..b.dim() {
                for c in 0..b.dim() {
                    let expect = if r == c { probe.decay_diag[r] } else { 0.0 };
                    assert!((k.entries()[(r, c)].re - expect).abs() < 1e-12);
                    assert_eq!(k.entries()[(r, c)].im, 0.0);
                }
            }
        }
    }

    #[test]
    fn uncertainty_examples() {
        for n in [1usize, 5, 20] {
            let b = build_two_level_basis(n).unwrap();
            let e = all_excited_state::<f64>(&b).unwrap();
            let u = uncertainties(&e, &b).unwrap();
            let expected = (n as f64).sqrt() / 2.0;
            assert!((u.dx - expected).abs() < 1e-12);
            assert!((u.dy - expected).abs() < 1e-12);
            assert!(u.dz.abs() < 1e-7);
            let g = all_ground_state::<f64>(&b).unwrap();
            let u = uncertainties(&g, &b).unwrap();
            assert!((u.dx - expected).abs() < 1e-12);
            assert!((u.dy - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_decay_is_flagged_at_boundary() {
        let t: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let s = delay_time(&t, &y).unwrap();
        assert!(s.boundary);
        assert_eq!(s.peak_time, 0.0);
    }

    #[test]
    fn parabola_peak_is_exact() {
        let t: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1 + 0.03).collect();
        let y: Vec<f64> = t.iter().map(|t| 5.0 - 3.0 * (t - 2.0) * (t - 2.0)).collect();
        let s = delay_time(&t, &y).unwrap();
        assert!(!s.boundary);
        assert!((s.peak_time - 2.0).abs() < 1e-9);
        assert!((s.peak_value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn empty_series_errors() {
        assert!(matches!(delay_time(&[], &[]), Err(Error::EmptySeries)));
        let ts = TimeSeries::new(vec![]);
        assert!(peak_intensity_per_atom(&ts, 3).is_err());
    }

    #[test]
    fn constant_series_peak() {
        let mut ts = TimeSeries::new(vec![0.0, 1.0, 2.0, 3.0]);
        ts.push_channel(INTENSITY, vec![2.0; 4]).unwrap();
        let p = peak_intensity_per_atom(&ts, 4).unwrap();
        assert_eq!(p.value, 0.5);
        assert!(ts.push_channel("bad", vec![1.0]).is_err());
    }

    #[test]
    fn trapezoid_linear() {
        let t = [0.0, 1.0, 3.0];
        let y = [0.0, 1.0, 3.0];
        assert!((trapezoid(&t, &y) - 4.5).abs() < 1e-15);
    }
}
