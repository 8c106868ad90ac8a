//! Ensemble statistics with standard errors.
//!
//! Sums run sequentially in trajectory order with compensated summation, so
//! every statistic is a deterministic function of the ensemble.

use serde::{Deserialize, Serialize};

use super::{PathEnsemble, SimError};

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::default();
    for x in xs {
        s.add(x);
    }
    s.value()
}

fn mean(xs: &[f64]) -> f64 {
    sum(xs.iter().copied()) / xs.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean of the samples with its standard error.
    pub fn mean_of(xs: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let m = mean(xs);
        let var = sum(xs.iter().map(|x| (x - m).powi(2))) / (n - 1.0).max(1.0);
        Estimate {
            value: m,
            std_error: (var / n).sqrt(),
        }
    }

    /// Unbiased covariance with the standard error of the mean product.
    pub fn covariance_of(xs: &[f64], ys: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let (mx, my) = (mean(xs), mean(ys));
        let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
        let e = Estimate::mean_of(&products);
        Estimate {
            value: e.value * n / (n - 1.0).max(1.0),
            std_error: e.std_error,
        }
    }

    /// Pearson correlation with standard error `√((1-r²)/(n-2))`.
    pub fn correlation_of(xs: &[f64], ys: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        let (mx, my) = (mean(xs), mean(ys));
        let sxy = sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
        let sxx = sum(xs.iter().map(|x| (x - mx).powi(2)));
        let syy = sum(ys.iter().map(|y| (y - my).powi(2)));
        let r = if sxx > 0.0 && syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
        Estimate {
            value: r,
            std_error: ((1.0 - r * r) / (n - 2.0).max(1.0)).sqrt(),
        }
    }

    pub fn scaled(self, c: f64) -> Estimate {
        Estimate {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
        }
    }

    /// Number of standard errors between the estimate and `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.value - target) / self.std_error
        } else if self.value == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }
}

/// Increment statistics of a hierarchy ensemble over one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementStatistics {
    pub window: Window,
    pub samples: usize,
    /// `E[Δy_m]/Δt`.
    pub drift: Vec<Estimate>,
    /// `Cov(Δy_k, Δy_l)/Δt`.
    pub covariance: Vec<Vec<Estimate>>,
    /// `corr(ΔW, Δy_m)`.
    pub corr_w: Vec<Estimate>,
    /// `corr(ΔŴ, Δy_m)`.
    pub corr_w_hat: Vec<Estimate>,
}

fn increments(e: &PathEnsemble, var: usize, r0: usize, r1: usize) -> Vec<f64> {
    (0..e.trajectories())
        .map(|i| e.value(i, r1, var) - e.value(i, r0, var))
        .collect()
}

fn window_records(e: &PathEnsemble, window: Window) -> Result<(usize, usize), SimError> {
    let last = e.times.last().copied().unwrap_or(0.0);
    if window.start < 0.0 || window.is_empty() {
        return Err(SimError::Window(format!(
            "window [{}, {}] must satisfy 0 <= start < end",
            window.start, window.end
        )));
    }
    if window.end > last + 1e-9 {
        return Err(SimError::Window(format!(
            "window ends at {} but the run stops at {last}",
            window.end
        )));
    }
    let find = |t: f64| {
        e.record_at(t)
            .ok_or_else(|| SimError::Window(format!("t = {t} is not on the recording grid")))
    };
    Ok((find(window.start)?, find(window.end)?))
}

/// Drift, covariance and driving-noise correlations of the increments of
/// `y_1 … y_n` over `window`, one sample per trajectory.
pub fn increment_statistics(e: &PathEnsemble, window: Window) -> Result<IncrementStatistics, SimError> {
    let (r0, r1) = window_records(e, window)?;
    if e.trajectories() < 3 {
        return Err(SimError::Window("at least three trajectories are needed".into()));
    }
    let dt = window.len();
    let ys: Vec<usize> = (1..)
        .map_while(|m| e.column(&format!("y{m}")))
        .collect();
    let w = e
        .column("W")
        .ok_or_else(|| SimError::Unsupported("ensemble has no W column".into()))?;
    let w_hat = e
        .column("W_hat")
        .ok_or_else(|| SimError::Unsupported("ensemble has no W_hat column".into()))?;
    let dy: Vec<Vec<f64>> = ys.iter().map(|&c| increments(e, c, r0, r1)).collect();
    let dw = increments(e, w, r0, r1);
    let dw_hat = increments(e, w_hat, r0, r1);
    Ok(IncrementStatistics {
        window,
        samples: e.trajectories(),
        drift: dy.iter().map(|d| Estimate::mean_of(d).scaled(1.0 / dt)).collect(),
        covariance: dy
            .iter()
            .map(|a| dy.iter().map(|b| Estimate::covariance_of(a, b).scaled(1.0 / dt)).collect())
            .collect(),
        corr_w: dy.iter().map(|d| Estimate::correlation_of(&dw, d)).collect(),
        corr_w_hat: dy.iter().map(|d| Estimate::correlation_of(&dw_hat, d)).collect(),
    })
}

fn per_trajectory_average(e: &PathEnsemble, t_from: f64, f: impl Fn(&[f64]) -> f64) -> Result<Vec<f64>, SimError> {
    let first = e
        .times
        .iter()
        .position(|&t| t >= t_from - 1e-12)
        .ok_or_else(|| SimError::Window(format!("no records after t = {t_from}")))?;
    let d = e.dim();
    Ok(e
        .paths
        .iter()
        .map(|p| {
            let vals = (first..e.times.len()).map(|r| f(&p[r * d..(r + 1) * d]));
            sum(vals) / (e.times.len() - first) as f64
        })
        .collect())
}

/// Stationary `E[x_a x_b]` from records at `t >= t_from`, with the
/// standard error across trajectories.
pub fn stationary_moment(e: &PathEnsemble, a: usize, b: usize, t_from: f64) -> Result<Estimate, SimError> {
    let avgs = per_trajectory_average(e, t_from, |x| x[a] * x[b])?;
    Ok(Estimate::mean_of(&avgs))
}

/// Stationary mean of one state.
pub fn stationary_mean(e: &PathEnsemble, a: usize, t_from: f64) -> Result<Estimate, SimError> {
    let avgs = per_trajectory_average(e, t_from, |x| x[a])?;
    Ok(Estimate::mean_of(&avgs))
}

/// Equal-width histogram of one state over records at `t >= t_from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Samples outside `[lo, hi)`.
    pub outside: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            outside: 0,
        }
    }

    pub fn from_ensemble(e: &PathEnsemble, var: usize, t_from: f64, lo: f64, hi: f64, bins: usize) -> Self {
        let mut h = Histogram::new(lo, hi, bins);
        let d = e.dim();
        for p in &e.paths {
            for (r, &t) in e.times.iter().enumerate() {
                if t >= t_from - 1e-12 {
                    h.add(p[r * d + var]);
                }
            }
        }
        h
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn add(&mut self, x: f64) {
        let b = ((x - self.lo) / self.bin_width()).floor();
        if b >= 0.0 && (b as usize) < self.counts.len() {
            self.counts[b as usize] += 1;
        } else {
            self.outside += 1;
        }
    }

    pub fn centres(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    /// Probability density per bin, normalised over all samples.
    pub fn density(&self) -> Vec<f64> {
        let total = self.counts.iter().sum::<u64>() + self.outside;
        let w = self.bin_width();
        self.counts.iter().map(|&c| c as f64 / (total as f64 * w)).collect()
    }

    /// Centres of local maxima of the density after a centred moving average
    /// over `2 * half_width + 1` bins. A maximum counts only if it rises at
    /// least `prominence` times the peak density above the deepest dip
    /// separating it from any higher maximum (or the histogram edge).
    pub fn modes(&self, half_width: usize, prominence: f64) -> Vec<f64> {
        let d = self.density();
        let n = d.len();
        let smooth: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half_width);
                let hi = (i + half_width + 1).min(n);
                sum(d[lo..hi].iter().copied()) / (hi - lo) as f64
            })
            .collect();
        let peak = smooth.iter().copied().fold(0.0, f64::max);
        let c = self.centres();
        (0..n)
            .filter(|&i| {
                let left = if i == 0 { f64::NEG_INFINITY } else { smooth[i - 1] };
                let right = if i + 1 == n { f64::NEG_INFINITY } else { smooth[i + 1] };
                if !(smooth[i] > left && smooth[i] >= right && smooth[i] > 0.0) {
                    return false;
                }
                let dip = |range: &mut dyn Iterator<Item = usize>| {
                    let mut low = smooth[i];
                    for j in range {
                        if smooth[j] > smooth[i] {
                            return low;
                        }
                        low = low.min(smooth[j]);
                    }
                    0.0
                };
                let base = dip(&mut (0..i).rev()).max(dip(&mut (i + 1..n)));
                smooth[i] - base >= prominence * peak
            })
            .map(|i| c[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_summation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(xs), 2.0);
    }

    #[test]
    fn estimators() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        let m = Estimate::mean_of(&xs);
        assert_eq!(m.value, 2.5);
        assert!((Estimate::covariance_of(&xs, &ys).value - 10.0 / 3.0).abs() < 1e-12);
        assert!((Estimate::correlation_of(&xs, &ys).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_modes() {
        let mut h = Histogram::new(-1.0, 1.0, 20);
        for (i, c) in h.centres().iter().enumerate() {
            let n = (1000.0 * ((-(c - 0.5).powi(2) / 0.02).exp() + (-(c + 0.5).powi(2) / 0.02).exp())) as usize;
            for _ in 0..n {
                h.add(h.centres()[i]);
            }
        }
        let modes = h.modes(1, 0.05);
        assert_eq!(modes.len(), 2);
        assert!((modes[0] + 0.5).abs() < 0.06 && (modes[1] - 0.5).abs() < 0.06);
    }

    #[test]
    fn ripples_on_a_plateau_are_not_modes() {
        let mut h = Histogram::new(-1.0, 1.0, 40);
        for (i, c) in h.centres().iter().enumerate() {
            let n = (1000.0 * (1.0 - c.powi(4)) + ((i * 37) % 11) as f64) as usize;
            for _ in 0..n {
                h.add(*c);
            }
        }
        assert_eq!(h.modes(1, 0.05).len(), 1);
    }
}
