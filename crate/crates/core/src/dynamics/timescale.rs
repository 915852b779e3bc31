use super::MasterHistory;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum coefficient of determination accepted by the exponential fit.
pub const MIN_R_SQUARED: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    /// Decay time `τ` in `|ρ_jk(t)| ≈ A exp(-t / τ)`.
    pub tau: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln y = a + b t`; returns `(a, b, R²)`.
fn log_linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(&ly) {
        sxy += (a - mt) * (b - my);
        sxx += (a - mt) * (a - mt);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (my - slope * mt, slope, r2)
}

/// Fits an exponential to `|ρ_jk(t)|` over a recorded master-equation run.
pub fn decoherence_timescale<T: Real>(history: &MasterHistory<T>, j: usize, k: usize) -> Result<DecayFit> {
    let mags = history.element_magnitudes(j, k)?;
    let t: Vec<f64> = history.times.iter().map(|t| t.to_f64_lossy()).collect();
    let y: Vec<f64> = mags.iter().map(|m| m.to_f64_lossy()).collect();
    fit_decay(&t, &y)
}

/// Exponential fit of a positive, decaying series.
pub fn fit_decay(t: &[f64], y: &[f64]) -> Result<DecayFit> {
    if t.len() < 3 || t.len() != y.len() {
        return Err(Error::HistoryTooShort(format!("{} samples; need >= 3", t.len())));
    }
    let peak = y.iter().copied().fold(0.0, f64::max);
    // stop at the numerical floor so round-off does not bend the fit
    let usable = y.iter().take_while(|v| **v > peak * 1e-12).count();
    if usable < 3 {
        return Err(Error::PoorFit("element vanishes before three samples".into()));
    }
    let (t, y) = (&t[..usable], &y[..usable]);
    let drop = (y[0] / y[usable - 1]).ln();
    if !(drop > 1e-9) {
        return Err(Error::NoDecoherence(format!(
            "element changed by a factor {:e} over the history",
            (-drop).exp()
        )));
    }
    let (a, b, r2) = log_linear_fit(t, y);
    if r2 < MIN_R_SQUARED {
        return Err(Error::PoorFit(format!("R² = {r2:.3} < {MIN_R_SQUARED}")));
    }
    if !(b < 0.0) {
        return Err(Error::NoDecoherence(format!("fitted slope {b:e} is not negative")));
    }
    Ok(DecayFit {
        tau: -1.0 / b,
        amplitude: a.exp(),
        r_squared: r2,
    })
}

/// Best-fit `Λ` for coherences obeying `|c(t)| = |c(0)| exp(-Λ d² t)`,
/// by least squares on `ln |c(t)/c(0)|` through the origin.
pub fn fit_dephasing_rate(times: &[f64], coherence: &[f64], separation: f64) -> Result<f64> {
    if times.len() < 2 || times.len() != coherence.len() {
        return Err(Error::HistoryTooShort(format!("{} samples; need >= 2", times.len())));
    }
    let c0 = coherence[0];
    if !(c0 > 0.0) || separation == 0.0 {
        return Err(Error::InvalidSpec("initial coherence and separation must be nonzero".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (t, c) in times.iter().zip(coherence) {
        let dt = t - times[0];
        if *c > 0.0 {
            num += dt * (c / c0).ln();
            den += dt * dt;
        }
    }
    let rate = -num / (den * separation * separation);
    if !(rate > 0.0) {
        return Err(Error::NoDecoherence(format!("fitted rate {rate:e} is not positive")));
    }
    Ok(rate)
}
