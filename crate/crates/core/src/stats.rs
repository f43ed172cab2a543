//! Empirical distributions and the goodness-of-fit statistics used by the
//! acceptance checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};
use crate::lattice::{exact_tau_pmf, exact_tau_tail};

/// Sorted uncensored values plus the number of censored observations, all of
/// which are known to exceed `censor_threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfTable {
    values: Vec<f64>,
    censored: usize,
    censor_threshold: f64,
}

impl EcdfTable {
    /// Table of a fully observed sample. NaNs are rejected.
    pub fn new(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        Self::with_censoring(values, 0, f64::INFINITY)
    }

    pub fn with_censoring(
        values: impl IntoIterator<Item = f64>,
        censored: usize,
        censor_threshold: f64,
    ) -> Result<Self> {
        let mut values: Vec<f64> = values.into_iter().collect();
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in sample".into()));
        }
        if values.iter().any(|&v| v > censor_threshold) {
            return Err(Error::InvalidParameter(format!(
                "uncensored value above the censor threshold {censor_threshold}"
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            censored,
            censor_threshold,
        })
    }

    /// Builds a table from `(value, censored)` pairs.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (f64, bool)>,
        censor_threshold: f64,
    ) -> Result<Self> {
        let mut censored = 0;
        let values: Vec<f64> = pairs
            .into_iter()
            .filter_map(|(v, c)| {
                censored += c as usize;
                (!c).then_some(v)
            })
            .collect();
        Self::with_censoring(values, censored, censor_threshold)
    }

    pub fn len(&self) -> usize {
        self.values.len() + self.censored
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn censored(&self) -> usize {
        self.censored
    }

    pub fn censor_threshold(&self) -> f64 {
        self.censor_threshold
    }

    pub fn censor_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.censored as f64 / self.len() as f64
        }
    }

    /// `F_n(x) = #{X ≤ x}/n`, valid for `x` below the censor threshold.
    pub fn eval(&self, x: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    fn eval_left(&self, x: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v < x) as f64 / self.len() as f64
    }

    /// Pools two samples; the merged threshold is the smaller one.
    pub fn merge(&self, other: &EcdfTable) -> EcdfTable {
        let threshold = self.censor_threshold.min(other.censor_threshold);
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        let mut censored = self.censored + other.censored;
        for &v in self.values.iter().chain(&other.values) {
            if v > threshold {
                censored += 1;
            } else {
                values.push(v);
            }
        }
        values.sort_by(f64::total_cmp);
        EcdfTable {
            values,
            censored,
            censor_threshold: threshold,
        }
    }

    /// `(x, F_n(x))` at every distinct value.
    pub fn rows(&self) -> Vec<(f64, f64)> {
        let mut rows: Vec<(f64, f64)> = Vec::new();
        let n = self.len() as f64;
        for (k, &v) in self.values.iter().enumerate() {
            let f = (k + 1) as f64 / n;
            match rows.last_mut() {
                Some(last) if last.0 == v => last.1 = f,
                _ => rows.push((v, f)),
            }
        }
        rows
    }

    /// Empirical `q`-quantile of the full sample (censored values count as
    /// `+∞`).
    pub fn quantile(&self, q: f64) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        let rank = ((q * self.len() as f64).ceil() as usize).clamp(1, self.len());
        self.values.get(rank - 1).copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub range: (f64, f64),
    pub threshold: f64,
    pub pass: bool,
    pub censor_rate: f64,
    pub censor_rate_other: Option<f64>,
}

fn effective_range(range: (f64, f64), threshold: f64) -> Result<(f64, f64)> {
    let (lo, hi) = (range.0, range.1.min(threshold));
    if !(lo <= hi) {
        return Err(Error::EmptySample { lo, hi });
    }
    Ok((lo, hi))
}

/// One-sample distance `sup |F_n − F|` over sample points in `range`, with
/// both one-sided limits of the step function.
pub fn ks_one_sample(
    ecdf: &EcdfTable,
    cdf: impl Fn(f64) -> f64,
    range: (f64, f64),
    threshold: f64,
) -> Result<KsResult> {
    let (lo, hi) = effective_range(range, ecdf.censor_threshold)?;
    let start = ecdf.values.partition_point(|&v| v < lo);
    let end = ecdf.values.partition_point(|&v| v <= hi);
    if start >= end {
        return Err(Error::EmptySample { lo, hi });
    }
    let mut d: f64 = 0.0;
    for &x in &ecdf.values[start..end] {
        let f = cdf(x);
        d = d
            .max((ecdf.eval(x) - f).abs())
            .max((ecdf.eval_left(x) - f).abs());
    }
    Ok(KsResult {
        statistic: d.min(1.0),
        n: ecdf.len(),
        m: None,
        range: (lo, hi),
        threshold,
        pass: d <= threshold,
        censor_rate: ecdf.censor_rate(),
        censor_rate_other: None,
    })
}

/// Two-sample distance `sup |F_a − F_b|` on the range where both samples are
/// fully observed.
pub fn ks_two_sample(
    a: &EcdfTable,
    b: &EcdfTable,
    range: (f64, f64),
    threshold: f64,
) -> Result<KsResult> {
    let (lo, hi) = effective_range(range, a.censor_threshold.min(b.censor_threshold))?;
    let in_range = |t: &EcdfTable| {
        let s = t.values.partition_point(|&v| v < lo);
        let e = t.values.partition_point(|&v| v <= hi);
        (s, e)
    };
    let ((sa, ea), (sb, eb)) = (in_range(a), in_range(b));
    if a.is_empty() || b.is_empty() || (sa >= ea && sb >= eb) {
        return Err(Error::EmptySample { lo, hi });
    }
    let mut d = (a.eval_left(lo) - b.eval_left(lo)).abs();
    for &x in a.values[sa..ea].iter().chain(&b.values[sb..eb]) {
        d = d.max((a.eval(x) - b.eval(x)).abs());
    }
    Ok(KsResult {
        statistic: d.min(1.0),
        n: a.len(),
        m: Some(b.len()),
        range: (lo, hi),
        threshold,
        pass: d <= threshold,
        censor_rate: a.censor_rate(),
        censor_rate_other: Some(b.censor_rate()),
    })
}

/// DKW half-width: `P(sup |F_n − F| > ε) ≤ α` for `ε = √(ln(2/α)/(2n))`.
pub fn dkw_epsilon(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Asymptotic two-sample critical value `c·√((n + m)/(n·m))`; `c = 1.628`
/// at the 1% level.
pub fn ks_two_sample_critical(n: usize, m: usize, c: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Goodness of fit of integer draws to `pmf` on `{start, start + 1, …}`.
///
/// Bins are merged from both ends until every expected count is at least 5;
/// the upper bin absorbs all remaining probability mass.
pub fn chi_square_discrete(
    samples: &[u64],
    pmf: impl Fn(u64) -> f64,
    start: u64,
) -> Result<ChiSquareResult> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptySample {
            lo: start as f64,
            hi: f64::INFINITY,
        });
    }
    let total = n as f64;
    let max = samples.iter().copied().max().unwrap_or(start).max(start);
    let mut observed = vec![0u64; (max - start + 1) as usize];
    for &s in samples {
        if s < start {
            return Err(Error::InvalidParameter(format!(
                "draw {s} below support start {start}"
            )));
        }
        observed[(s - start) as usize] += 1;
    }
    let mut expected: Vec<f64> = (0..observed.len())
        .map(|k| total * pmf(start + k as u64))
        .collect();
    let covered: f64 = expected.iter().sum::<f64>() / total;
    if let Some(last) = expected.last_mut() {
        *last += total * (1.0 - covered).max(0.0);
    }
    let mut bins: Vec<(f64, f64)> = observed.iter().map(|&o| o as f64).zip(expected).collect();
    // merge the upper tail
    while bins.len() > 1 && bins[bins.len() - 1].1 < 5.0 {
        let (o, e) = bins.pop().unwrap();
        let last = bins.last_mut().unwrap();
        last.0 += o;
        last.1 += e;
    }
    // merge the lower tail
    while bins.len() > 1 && bins[0].1 < 5.0 {
        let (o, e) = bins.remove(0);
        bins[0].0 += o;
        bins[0].1 += e;
    }
    // any interior bin below 5 joins its right neighbour
    let mut k = 0;
    while k + 1 < bins.len() {
        if bins[k].1 < 5.0 {
            let (o, e) = bins.remove(k);
            bins[k].0 += o;
            bins[k].1 += e;
        } else {
            k += 1;
        }
    }
    if bins.len() < 2 {
        return Err(Error::InvalidParameter(
            "fewer than two chi-square bins after merging".into(),
        ));
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sf(statistic);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins: bins.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    /// Largest standardized bin deviation `|O − Np|/√(Np(1 − p))`.
    pub max_z: f64,
    pub bins: usize,
    pub pass: bool,
}

/// Histogram of continuous draws against a reference CDF, bin by bin within
/// `z_max` multinomial standard deviations.
pub fn histogram_band_check(
    samples: &[f64],
    edges: &[f64],
    cdf: impl Fn(f64) -> f64,
    z_max: f64,
) -> Result<BandCheck> {
    if edges.len() < 2 || samples.is_empty() {
        return Err(Error::InvalidParameter(
            "histogram needs two edges and a sample".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut max_z: f64 = 0.0;
    for w in edges.windows(2) {
        let count = sorted.partition_point(|&v| v < w[1]) - sorted.partition_point(|&v| v < w[0]);
        let p = cdf(w[1]) - cdf(w[0]);
        let sd = (n * p * (1.0 - p)).sqrt();
        max_z = max_z.max((count as f64 - n * p).abs() / sd);
    }
    Ok(BandCheck {
        max_z,
        bins: edges.len() - 1,
        pass: max_z <= z_max,
    })
}

/// Simultaneous two-sided binomial acceptance interval for `count` out of
/// `trials` at family level `alpha` over `family` cells (Bonferroni).
pub fn binomial_band(trials: u64, p: f64, alpha: f64, family: usize) -> Result<(u64, u64)> {
    if p == 0.0 {
        return Ok((0, 0));
    }
    let dist = Binomial::new(p, trials).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let tail = alpha / (2.0 * family as f64);
    Ok((dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail)))
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[k]] {
            j += 1;
        }
        let avg = 0.5 * (k + j) as f64 + 1.0;
        for &idx in &order[k..=j] {
            r[idx] = avg;
        }
        k = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "spearman needs two equal samples of size >= 2".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    /// `√f/ℓ · P(τ ≥ f)`.
    Tail,
    /// `f^{3/2}/ℓ · P(τ = ⌊f⌋)`.
    Pmf,
}

/// Rescaled pure-lattice tail or point mass at `f`.
pub fn tail_ratio(kind: TailKind, ell: u64, f: f64) -> Result<f64> {
    let n = f.floor() as u64;
    let ell_f = ell as f64;
    Ok(match kind {
        TailKind::Tail => f.sqrt() / ell_f * exact_tau_tail(ell, f.ceil() as u64)?,
        TailKind::Pmf => f.powf(1.5) / ell_f * exact_tau_pmf(ell, n)?,
    })
}

/// CDF of the scaled boundary increment with density `(|x| + ½)e^{−2|x|}`.
pub fn increment_cdf(x: f64) -> f64 {
    let upper = 0.5 * (1.0 + x.abs()) * (-2.0 * x.abs()).exp();
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}
