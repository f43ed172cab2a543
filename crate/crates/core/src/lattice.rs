//! Pure and diluted lattice models on the even sublattice `{(i, y) : i + y even}`.
//!
//! Boundaries `A`, `B` always sit on heights that are ineligible in their
//! column, so every eligible site is strictly inside or strictly outside the
//! strip. Gaps are counted in eligible sites: `X̄ = (Ū − A + 1)/2` and so on.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric};

use crate::env::ScaledField;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::semilattice::{RunOptions, RunRecord, Trajectory};

/// Validates `ℓ` and returns `ℓ/2`, which must be odd.
pub fn half_width(ell: u64) -> Result<i64> {
    if ell == 0 || !ell.is_multiple_of(2) || (ell / 2) % 2 != 1 {
        return Err(Error::InvalidParameter(format!(
            "lattice models need ell/2 to be an odd positive integer, got ell = {ell}"
        )));
    }
    i64::try_from(ell / 2).map_err(|_| Error::InvalidParameter(format!("ell = {ell} is too large")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeWalkState {
    pub i: u64,
    pub a: i64,
    pub b: i64,
    pub t_acc: f64,
    pub tau_prime: Option<u64>,
    pub t_prime: Option<f64>,
    pub merged: bool,
}

impl LatticeWalkState {
    pub fn new(half: i64) -> Self {
        Self {
            i: 0,
            a: half,
            b: -half,
            t_acc: 0.0,
            tau_prime: None,
            t_prime: None,
            merged: false,
        }
    }

    /// Applies one column; returns `true` once the walks have merged.
    pub fn advance(&mut self, step: &LatticeColumnStep) -> bool {
        if self.tau_prime.is_none() && step.count <= 1 {
            self.tau_prime = Some(self.i);
            self.t_prime = Some(self.t_acc);
        }
        let d = step.gap_x_up as i64 - step.gap_x_down as i64;
        let e = step.gap_y_up as i64 - step.gap_y_down as i64;
        let a = self.a + d + parity_correction(d, step.tie_bits[0]);
        let b = self.b + e + parity_correction(e, step.tie_bits[1]);
        if step.count == 0 {
            // both midpoints coincide and read the same tie bit
            debug_assert_eq!(a, b);
            self.a = a;
            self.b = a;
            self.merged = true;
            return true;
        }
        self.t_acc += step.traffic_increment;
        self.a = a;
        self.b = b;
        self.i += 1;
        false
    }
}

/// An even difference puts the midpoint on an eligible site of the next
/// column; the site joins the upper neighbour when ξ = 1.
fn parity_correction(diff: i64, xi: bool) -> i64 {
    if diff % 2 != 0 {
        0
    } else if xi {
        -1
    } else {
        1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeColumnStep {
    /// `X̄ = (Ū − A + 1)/2`.
    pub gap_x_up: u64,
    /// `X̲ = (A − U̲ + 1)/2`.
    pub gap_x_down: u64,
    /// `Ȳ = (L̄ − B + 1)/2`.
    pub gap_y_up: u64,
    /// `Y̲ = (B − L̲ + 1)/2`.
    pub gap_y_down: u64,
    pub count: u64,
    pub traffic_increment: f64,
    /// ξ at the candidate midpoint sites for `A` and `B` in column `i + 1`.
    pub tie_bits: [bool; 2],
    pub occupied_interior: Vec<i64>,
}

impl LatticeColumnStep {
    /// Builds a step from the four extreme occupied heights.
    pub fn from_extremes(
        a: i64,
        b: i64,
        upper: i64,
        top: i64,
        bottom: i64,
        lower: i64,
    ) -> (u64, u64, u64, u64) {
        (
            ((upper - a + 1) / 2) as u64,
            ((a - top + 1) / 2) as u64,
            ((bottom - b + 1) / 2) as u64,
            ((b - lower + 1) / 2) as u64,
        )
    }
}

/// With an empty strip both midpoints are the same site and read one ξ.
fn shared_when_empty(count: u64, bits: [bool; 2]) -> [bool; 2] {
    if count == 0 {
        [bits[0], bits[0]]
    } else {
        bits
    }
}

pub trait LatticeSource {
    fn next_column(&mut self, i: u64, a: i64, b: i64) -> Result<LatticeColumnStep>;
}

fn geometric(rng: &mut SimRng, p: f64) -> u64 {
    1 + Geometric::new(p).expect("retention in (0, 1]").sample(rng)
}

/// Site-by-site occupancy sampler with exact inhomogeneous retention.
pub struct SiteSampler<'a> {
    p: &'a ScaledField,
    mu: &'a ScaledField,
    rng: SimRng,
    keep_sites: bool,
}

impl<'a> SiteSampler<'a> {
    pub fn new(p: &'a ScaledField, mu: &'a ScaledField, rng: SimRng, keep_sites: bool) -> Self {
        Self {
            p,
            mu,
            rng,
            keep_sites,
        }
    }

    fn occupied(&mut self, i: u64, y: i64) -> Result<bool> {
        let p = self.p.eval(i, y as f64)?;
        Ok(self.rng.random::<f64>() < p)
    }

    /// First occupied eligible site starting at `from`, moving by `step`.
    fn scan(&mut self, i: u64, from: i64, step: i64) -> Result<i64> {
        let mut y = from;
        while !self.occupied(i, y)? {
            y += step;
        }
        Ok(y)
    }
}

impl LatticeSource for SiteSampler<'_> {
    fn next_column(&mut self, i: u64, a: i64, b: i64) -> Result<LatticeColumnStep> {
        let upper = self.scan(i, a + 1, 2)?;
        let lower = self.scan(i, b - 1, -2)?;
        let mut sites = Vec::new();
        let mut y = b + 1;
        while y < a {
            if self.occupied(i, y)? {
                sites.push(y);
            }
            y += 2;
        }
        let (top, bottom) = match (sites.first(), sites.last()) {
            (Some(&lo), Some(&hi)) => (hi, lo),
            _ => (lower, upper),
        };
        let (gx_up, gx_down, gy_up, gy_down) =
            LatticeColumnStep::from_extremes(a, b, upper, top, bottom, lower);
        let traffic_increment = if self.mu.is_vertically_homogeneous() {
            sites.len() as f64 * self.mu.eval(i, 0.0)?
        } else {
            sites
                .iter()
                .map(|&y| self.mu.eval(i, y as f64))
                .sum::<Result<f64>>()?
        };
        let count = sites.len() as u64;
        let tie_bits = shared_when_empty(count, [self.rng.random(), self.rng.random()]);
        if !self.keep_sites {
            sites = Vec::new();
        }
        Ok(LatticeColumnStep {
            gap_x_up: gx_up,
            gap_x_down: gx_down,
            gap_y_up: gy_up,
            gap_y_down: gy_down,
            count,
            traffic_increment,
            tie_bits,
            occupied_interior: sites,
        })
    }
}

/// O(1) sampler for vertically constant retention.
///
/// Scanning down from `A`, the first occupied site is `Geometric(p)` sites
/// away; if it lies below `B` the strip is empty. Otherwise scanning up from
/// `B` gives the lowest interior site, and the sites strictly between the two
/// extremes are `Binomial(remaining, p)`.
pub struct ConstantRetentionSampler<'a> {
    p: &'a ScaledField,
    mu: &'a ScaledField,
    rng: SimRng,
}

impl<'a> ConstantRetentionSampler<'a> {
    pub fn new(p: &'a ScaledField, mu: &'a ScaledField, rng: SimRng) -> Result<Self> {
        if !(p.is_vertically_homogeneous() && mu.is_vertically_homogeneous()) {
            return Err(Error::InvalidParameter(
                "the constant-retention fast path needs vertically homogeneous p and mu".into(),
            ));
        }
        Ok(Self { p, mu, rng })
    }
}

/// One column of the constant-retention fast path.
pub fn constant_retention_column(
    rng: &mut SimRng,
    p: f64,
    mu: f64,
    a: i64,
    b: i64,
) -> LatticeColumnStep {
    let n = ((a - b) / 2) as u64;
    let gap_x_up = geometric(rng, p);
    let k = geometric(rng, p);
    let tie_bits = [rng.random(), rng.random()];
    if k > n {
        let tie_bits = shared_when_empty(0, tie_bits);
        // the first occupied site below A is already below B
        let gap_y_down = k - n;
        return LatticeColumnStep {
            gap_x_up,
            gap_x_down: k,
            gap_y_up: n + gap_x_up,
            gap_y_down,
            count: 0,
            traffic_increment: 0.0,
            tie_bits,
            occupied_interior: Vec::new(),
        };
    }
    let j = geometric(rng, p);
    let gap_y_down = geometric(rng, p);
    let below_top = n - k;
    let (count, gap_y_up) = if j > below_top {
        (1, below_top + 1)
    } else {
        let between = below_top - j;
        let bulk = if between == 0 {
            0
        } else {
            Binomial::new(between, p)
                .expect("valid binomial")
                .sample(rng)
        };
        (2 + bulk, j)
    };
    LatticeColumnStep {
        gap_x_up,
        gap_x_down: k,
        gap_y_up,
        gap_y_down,
        count,
        traffic_increment: count as f64 * mu,
        tie_bits,
        occupied_interior: Vec::new(),
    }
}

impl LatticeSource for ConstantRetentionSampler<'_> {
    fn next_column(&mut self, i: u64, a: i64, b: i64) -> Result<LatticeColumnStep> {
        let p = self.p.eval(i, 0.0)?;
        let mu = self.mu.eval(i, 0.0)?;
        Ok(constant_retention_column(&mut self.rng, p, mu, a, b))
    }
}

/// Fully occupied lattice: every gap is one site, only the tie bits are random.
pub struct PureSampler<'a> {
    mu: &'a ScaledField,
    rng: SimRng,
    bits: u64,
    left: u32,
}

impl<'a> PureSampler<'a> {
    pub fn new(mu: &'a ScaledField, rng: SimRng) -> Self {
        Self {
            mu,
            rng,
            bits: 0,
            left: 0,
        }
    }

    fn bit(&mut self) -> bool {
        if self.left == 0 {
            self.bits = self.rng.random();
            self.left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.left -= 1;
        b
    }
}

impl LatticeSource for PureSampler<'_> {
    fn next_column(&mut self, i: u64, a: i64, b: i64) -> Result<LatticeColumnStep> {
        let count = ((a - b) / 2) as u64;
        let traffic_increment = if self.mu.is_vertically_homogeneous() {
            count as f64 * self.mu.eval(i, 0.0)?
        } else {
            (0..count)
                .map(|k| self.mu.eval(i, (b + 1 + 2 * k as i64) as f64))
                .sum::<Result<f64>>()?
        };
        // with count = 0 both walks sit on the same height and share one bit
        let tie_bits = if count == 0 {
            let bit = self.bit();
            [bit, bit]
        } else {
            [self.bit(), self.bit()]
        };
        Ok(LatticeColumnStep {
            gap_x_up: 1,
            gap_x_down: if count == 0 {
                1 + ((a - b) / 2) as u64
            } else {
                1
            },
            gap_y_up: 1,
            gap_y_down: 1,
            count,
            traffic_increment,
            tie_bits,
            occupied_interior: Vec::new(),
        })
    }
}

/// Drives the lattice recursion from `source`.
pub fn run_lattice_with_source<S: LatticeSource>(
    ell: u64,
    source: &mut S,
    max_steps: u64,
    record_trajectory: bool,
    seed_id: u64,
) -> Result<RunRecord> {
    let half = half_width(ell)?;
    let mut state = LatticeWalkState::new(half);
    let mut trajectory: Option<Trajectory> = record_trajectory.then(Vec::new);
    let mut tau = None;
    let mut steps = 0;
    while steps < max_steps {
        if let Some(tr) = trajectory.as_mut() {
            tr.push((state.i, state.a as f64, state.b as f64));
        }
        let step = source.next_column(state.i, state.a, state.b)?;
        steps += 1;
        let column = state.i;
        if state.advance(&step) {
            tau = Some(column);
            if let Some(tr) = trajectory.as_mut() {
                tr.push((column + 1, state.a as f64, state.b as f64));
            }
            break;
        }
    }
    Ok(RunRecord {
        seed_id,
        tau,
        tau_prime: state.tau_prime,
        t: state.t_acc,
        t_prime: state.t_prime.unwrap_or(state.t_acc),
        steps_used: steps,
        trajectory,
    })
}

/// One diluted-lattice replica. `options.fast_path` selects the O(1)
/// constant-retention sampler when both fields allow it.
pub fn run_diluted(
    ell: u64,
    p: &ScaledField,
    mu: &ScaledField,
    options: &RunOptions,
    rng: SimRng,
    seed_id: u64,
) -> Result<RunRecord> {
    half_width(ell)?;
    if options.fast_path
        && p.is_vertically_homogeneous()
        && mu.is_vertically_homogeneous()
        && !options.keep_points
    {
        let mut source = ConstantRetentionSampler::new(p, mu, rng)?;
        run_lattice_with_source(
            ell,
            &mut source,
            options.max_steps,
            options.record_trajectory,
            seed_id,
        )
    } else {
        let mut source = SiteSampler::new(p, mu, rng, options.keep_points);
        run_lattice_with_source(
            ell,
            &mut source,
            options.max_steps,
            options.record_trajectory,
            seed_id,
        )
    }
}

/// One pure-lattice replica.
pub fn run_pure(
    ell: u64,
    mu: &ScaledField,
    options: &RunOptions,
    rng: SimRng,
    seed_id: u64,
) -> Result<RunRecord> {
    let mut source = PureSampler::new(mu, rng);
    run_lattice_with_source(
        ell,
        &mut source,
        options.max_steps,
        options.record_trajectory,
        seed_id,
    )
}

// Exact law of τ on the pure lattice.

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln n! − ((n + ½) ln n − n + ln √(2π))`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let ln_fact: f64 = (2..=n as u64).map(|k| k as f64).product::<f64>().ln();
        return ln_fact - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np − x`, accurate when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `C(size, x) / 2^size` without cancellation.
fn binomial_half(x: u64, size: u64) -> f64 {
    if x > size {
        return 0.0;
    }
    if x == 0 || x == size {
        return (-(size as f64) * std::f64::consts::LN_2).exp();
    }
    let (x, n) = (x as f64, size as f64);
    let half = 0.5 * n;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(x, half) - bd0(n - x, half);
    let lf = std::f64::consts::TAU.ln() + x.ln() + (-x / n).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `P(τ_ℓ = n) = (ℓ/2n)·C(2n, n + ℓ/2)/4ⁿ`.
pub fn exact_tau_pmf(ell: u64, n: u64) -> Result<f64> {
    let k = half_width(ell)? as u64;
    if n == 0 || k > n {
        return Ok(0.0);
    }
    Ok(k as f64 / n as f64 * binomial_half(n + k, 2 * n))
}

/// `P(τ_ℓ ≥ n)`, by compensated summation of the PMF below `n`.
pub fn exact_tau_tail(ell: u64, n: u64) -> Result<f64> {
    let k = half_width(ell)? as u64;
    let mut acc = Neumaier::default();
    for m in k.max(1)..n {
        acc.add(exact_tau_pmf(ell, m)?);
    }
    Ok((1.0 - acc.sum()).max(0.0))
}

/// `(n, pmf, cdf)` rows for `n = 1..=n_max`.
pub fn pmf_table(ell: u64, n_max: u64) -> Result<Vec<(u64, f64, f64)>> {
    half_width(ell)?;
    let mut acc = Neumaier::default();
    (1..=n_max)
        .map(|n| {
            let pmf = exact_tau_pmf(ell, n)?;
            acc.add(pmf);
            Ok((n, pmf, acc.sum().min(1.0)))
        })
        .collect()
}

/// Kahan–Babuška–Neumaier running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.compensation
    }
}
