//! Relative hedging PnL, tail risk measures and Gaussian kernel density
//! estimates.
//!
//! VaR at level `α` is the left-tail order statistic `x_(⌈(1−α) n⌉)`, so
//! `VaR_95` is the 5th percentile of the PnL. ES averages the observations
//! strictly below VaR.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hedging::HedgeLedger;

/// Smallest sample accepted by [`risk_measures`].
pub const MIN_TAIL_SAMPLE: usize = 20;
/// Multiplier applied to Scott's bandwidth factor in [`kde`].
pub const KDE_BANDWIDTH_SCALE: f64 = 1.8;

/// Discounted relative PnL per included path.
#[derive(Debug, Clone, PartialEq)]
pub struct PnlSample {
    pub values: Vec<f64>,
    /// `Σ_j Ŷ_0^j`.
    pub normalizer: f64,
    /// Paths dropped for numerical failures.
    pub excluded: usize,
}

/// `e^{−r t} P_t / normalizer` for each `(P_t, t)` pair.
pub fn relative_pnl(values: &[(f64, f64)], rate: f64, normalizer: f64) -> Result<Vec<f64>> {
    if !(normalizer > 1e-12) {
        return Err(Error::ZeroNormalizer(normalizer));
    }
    Ok(values.iter().map(|(p, t)| (-rate * t).exp() * p / normalizer).collect())
}

/// Relative PnL of every non-excluded path of a ledger at its reporting horizon.
pub fn pnl(ledger: &HedgeLedger) -> Result<PnlSample> {
    let normalizer: f64 = ledger.initial_prices.iter().sum();
    let kept: Vec<(f64, f64)> = ledger
        .paths
        .iter()
        .filter(|p| !p.excluded && p.value.is_finite())
        .map(|p| (p.value, p.horizon_time))
        .collect();
    let excluded = ledger.paths.len() - kept.len();
    Ok(PnlSample { values: relative_pnl(&kept, ledger.rate, normalizer)?, normalizer, excluded })
}

/// VaR and ES at one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMeasure {
    pub level: f64,
    pub var: f64,
    pub es: f64,
}

/// Moments and tail measures of a PnL sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    /// Mean squared deviation over the observations below the mean.
    pub semivariance: f64,
    pub tails: Vec<TailMeasure>,
    pub n_paths: usize,
    pub excluded: usize,
}

impl RiskReport {
    /// Tail measures at `level`, if computed.
    pub fn tail(&self, level: f64) -> Option<&TailMeasure> {
        self.tails.iter().find(|t| (t.level - level).abs() < 1e-12)
    }
}

/// Zero-based index of the left-tail order statistic `⌈(1−α) n⌉` in a sorted sample.
pub fn var_index(level: f64, n: usize) -> usize {
    let k = ((1.0 - level) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    k.min(n) - 1
}

/// Mean, variance, semivariance and VaR/ES at each of `levels`.
pub fn risk_measures(sample: &[f64], levels: &[f64]) -> Result<RiskReport> {
    let n = sample.len();
    if n < MIN_TAIL_SAMPLE {
        return Err(Error::InsufficientSample { got: n, need: MIN_TAIL_SAMPLE });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("PnL sample contains non-finite values".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Config(format!("confidence level {l} outside (0, 1)")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let variance = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let below: Vec<f64> = sample.iter().filter(|x| **x < mean).map(|x| (x - mean).powi(2)).collect();
    let semivariance = if below.is_empty() { 0.0 } else { below.iter().sum::<f64>() / below.len() as f64 };
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tails = levels
        .iter()
        .map(|&level| {
            let var = sorted[var_index(level, n)];
            let tail: Vec<f64> = sorted.iter().copied().take_while(|x| *x < var).collect();
            let es = if tail.is_empty() { var } else { tail.iter().sum::<f64>() / tail.len() as f64 };
            TailMeasure { level, var, es }
        })
        .collect();
    Ok(RiskReport { mean, variance, semivariance, tails, n_paths: n, excluded: 0 })
}

/// Risk measures of a ledger's PnL sample, carrying its exclusion count.
pub fn report_for(sample: &PnlSample, levels: &[f64]) -> Result<RiskReport> {
    let mut r = risk_measures(&sample.values, levels)?;
    r.excluded = sample.excluded;
    Ok(r)
}

/// Gaussian kernel density estimate on `points` equally spaced abscissae
/// spanning `[min − 3h, max + 3h]`, with bandwidth `h = 1.8 n^{−1/5} s`.
pub fn kde(sample: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientSample { got: n, need: 2 });
    }
    if points < 2 {
        return Err(Error::Config("a density curve needs at least two points".into()));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let std = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::DegenerateSample);
    }
    let h = KDE_BANDWIDTH_SCALE * nf.powf(-0.2) * std;
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (nf * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..points)
        .into_par_iter()
        .map(|k| {
            let x = if k == points - 1 { hi } else { lo + k as f64 * step };
            let dens = sample.iter().map(|xi| (-0.5 * ((x - xi) / h).powi(2)).exp()).sum::<f64>() * norm;
            (x, dens)
        })
        .collect())
}

/// Writes a density curve as `x,density`.
pub fn write_kde_csv<W: Write>(curve: &[(f64, f64)], mut w: W) -> Result<()> {
    writeln!(w, "x,density")?;
    for (x, d) in curve {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}

/// One line of a risk report file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub n_rebalance: usize,
    pub report: RiskReport,
}

pub const REPORT_HEADER: &str = "strategy,N_rebalance,mean,variance,var95,es95,es99,semivariance,n_paths,excluded";

/// Writes `rows` under a `# seed=… preset=…` comment line and the report header.
/// Each report must carry the 0.95 and 0.99 levels.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], seed: u64, preset: &str, mut w: W) -> Result<()> {
    writeln!(w, "# seed={seed} preset={preset}")?;
    writeln!(w, "{REPORT_HEADER}")?;
    for row in rows {
        let r = &row.report;
        let t95 = r.tail(0.95).ok_or_else(|| Error::Config("report lacks the 0.95 level".into()))?;
        let t99 = r.tail(0.99).ok_or_else(|| Error::Config("report lacks the 0.99 level".into()))?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            row.strategy, row.n_rebalance, r.mean, r.variance, t95.var, t95.es, t99.es, r.semivariance, r.n_paths, r.excluded
        )?;
    }
    Ok(())
}
