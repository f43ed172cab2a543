//! Poisson semi-lattice: the bounding-walk column recursion.
//!
//! Column `i` carries an independent Poisson process of intensity
//! `λ_ℓ(i, ·)`. Only the points nearest to the current boundaries `A`, `B`
//! and the number of points between them matter, so each column is sampled
//! jointly from three disjoint regions: the interior `[B, A]`, the half-line
//! above `A` and the half-line below `B`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{Direction, ScaledField};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Boundary process state before sampling column `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub i: u64,
    pub a: f64,
    pub b: f64,
    pub t_acc: f64,
    pub tau_prime: Option<u64>,
    pub t_prime: Option<f64>,
    pub merged: bool,
}

impl WalkState {
    pub fn new(ell: f64) -> Self {
        Self {
            i: 0,
            a: ell / 2.0,
            b: -ell / 2.0,
            t_acc: 0.0,
            tau_prime: None,
            t_prime: None,
            merged: false,
        }
    }

    /// Applies one sampled column. Returns `true` once the walks have merged.
    pub fn advance(&mut self, step: &ColumnStep) -> bool {
        debug_assert!(!self.merged);
        if self.tau_prime.is_none() && step.count <= 1 {
            self.tau_prime = Some(self.i);
            self.t_prime = Some(self.t_acc);
        }
        let u_hi = self.a + step.gap_above;
        let l_lo = self.b - step.gap_below;
        if step.count == 0 {
            let m = 0.5 * (u_hi + l_lo);
            self.a = m;
            self.b = m;
            self.merged = true;
            return true;
        }
        self.t_acc += step.traffic_increment;
        self.a = 0.5 * (u_hi + step.top);
        self.b = 0.5 * (step.bottom + l_lo);
        self.i += 1;
        false
    }
}

/// Everything the recursion needs from one column.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStep {
    /// `Ū − A`.
    pub gap_above: f64,
    /// `B − L̲`.
    pub gap_below: f64,
    /// `N_i`, the number of points in `[B, A]`.
    pub count: u64,
    /// `U̲`: highest point at or below `A` (equals `B − gap_below` when empty).
    pub top: f64,
    /// `L̄`: lowest point at or above `B` (equals `A + gap_above` when empty).
    pub bottom: f64,
    pub traffic_increment: f64,
    /// Interior points, filled only when requested or needed.
    pub interior_points: Vec<f64>,
}

/// Supplier of columns: a fresh sampler or a stored realization.
pub trait ColumnSource {
    fn next_column(&mut self, i: u64, a: f64, b: f64) -> Result<ColumnStep>;
}

/// Exact per-column sampler.
pub struct ColumnSampler<'a> {
    lambda: &'a ScaledField,
    mu: &'a ScaledField,
    rng: SimRng,
    /// Use the O(1) homogeneous shortcut when both fields are vertically constant.
    fast: bool,
    keep_points: bool,
}

impl<'a> ColumnSampler<'a> {
    pub fn new(
        lambda: &'a ScaledField,
        mu: &'a ScaledField,
        rng: SimRng,
        options: &RunOptions,
    ) -> Self {
        let fast = options.fast_path
            && !options.keep_points
            && lambda.is_vertically_homogeneous()
            && mu.is_vertically_homogeneous();
        Self {
            lambda,
            mu,
            rng,
            fast,
            keep_points: options.keep_points,
        }
    }

    pub fn into_rng(self) -> SimRng {
        self.rng
    }
}

impl ColumnSource for ColumnSampler<'_> {
    fn next_column(&mut self, i: u64, a: f64, b: f64) -> Result<ColumnStep> {
        if self.fast {
            let lambda = self.lambda.eval(i, 0.0)?;
            let mu = self.mu.eval(i, 0.0)?;
            Ok(homogeneous_column(&mut self.rng, lambda, mu, a, b))
        } else {
            general_column(
                &mut self.rng,
                self.lambda,
                self.mu,
                i,
                a,
                b,
                self.keep_points,
            )
        }
    }
}

fn exp1(rng: &mut SimRng) -> f64 {
    Exp1.sample(rng)
}

fn poisson(rng: &mut SimRng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("finite positive Poisson mean")
        .sample(rng);
    draw as u64
}

/// Constant-intensity column in O(1): scans the interior from both ends.
///
/// The first point below `A` is `Exp(λ)` away; if it falls below `B` the strip
/// is empty and that point is `L̲`. Otherwise the first point above `B` is
/// drawn the same way, and the points strictly between the two extremes are
/// Poisson on the remaining length.
pub fn homogeneous_column(rng: &mut SimRng, lambda: f64, mu: f64, a: f64, b: f64) -> ColumnStep {
    let width = a - b;
    let gap_above = exp1(rng) / lambda;
    let down = exp1(rng) / lambda;
    if down > width {
        let gap_below = down - width;
        return ColumnStep {
            gap_above,
            gap_below,
            count: 0,
            top: b - gap_below,
            bottom: a + gap_above,
            traffic_increment: 0.0,
            interior_points: Vec::new(),
        };
    }
    let top = a - down;
    let up = exp1(rng) / lambda;
    let gap_below = exp1(rng) / lambda;
    let (count, bottom) = if b + up >= top {
        (1, top)
    } else {
        let bottom = b + up;
        (2 + poisson(rng, lambda * (top - bottom)), bottom)
    };
    ColumnStep {
        gap_above,
        gap_below,
        count,
        top,
        bottom,
        traffic_increment: count as f64 * mu,
        interior_points: Vec::new(),
    }
}

/// Inhomogeneous column: interior points by inversion of the vertical mass,
/// one-sided gaps by solving `mass = Exp(1)`.
pub fn general_column(
    rng: &mut SimRng,
    lambda: &ScaledField,
    mu: &ScaledField,
    i: u64,
    a: f64,
    b: f64,
    keep_points: bool,
) -> Result<ColumnStep> {
    let gap_above = lambda.gap_for_mass(i, a, exp1(rng), Direction::Up)?;
    let gap_below = lambda.gap_for_mass(i, b, exp1(rng), Direction::Down)?;
    let mass = lambda.vertical_mass(i, b, a)?;
    let count = poisson(rng, mass);
    let mut points = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let u: f64 = rng.random();
        let y = b + lambda.gap_for_mass(i, b, u * mass, Direction::Up)?;
        points.push(y.clamp(b, a));
    }
    points.sort_by(f64::total_cmp);
    let traffic_increment = if mu.is_vertically_homogeneous() {
        count as f64 * mu.eval(i, 0.0)?
    } else {
        points.iter().map(|&y| mu.eval(i, y)).sum::<Result<f64>>()?
    };
    let (top, bottom) = match (points.first(), points.last()) {
        (Some(&lo), Some(&hi)) => (hi, lo),
        _ => (b - gap_below, a + gap_above),
    };
    if !keep_points {
        points = Vec::new();
    }
    Ok(ColumnStep {
        gap_above,
        gap_below,
        count,
        top,
        bottom,
        traffic_increment,
        interior_points: points,
    })
}

/// One-column sampler entry point.
pub fn sample_column(
    state: &WalkState,
    lambda: &ScaledField,
    mu: &ScaledField,
    rng: &mut SimRng,
) -> Result<ColumnStep> {
    general_column(rng, lambda, mu, state.i, state.a, state.b, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_steps: u64,
    pub fast_path: bool,
    pub keep_points: bool,
    pub record_trajectory: bool,
}

impl RunOptions {
    pub fn new(max_steps: u64) -> Self {
        Self {
            max_steps,
            fast_path: true,
            keep_points: false,
            record_trajectory: false,
        }
    }

    /// Default step budget `50·ℓ²`.
    pub fn default_for(ell: f64) -> Self {
        Self::new((50.0 * ell * ell).ceil() as u64)
    }
}

/// `(i, A_i, B_i)` for every visited column.
pub type Trajectory = Vec<(u64, f64, f64)>;

/// Output of one replica. `None` stopping times are censored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed_id: u64,
    pub tau: Option<u64>,
    pub tau_prime: Option<u64>,
    pub t: f64,
    pub t_prime: f64,
    pub steps_used: u64,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl RunRecord {
    pub fn censored(&self) -> bool {
        self.tau.is_none()
    }
}

/// Drives the recursion from `source` until the walks merge or `max_steps`
/// columns have been used.
pub fn run_with_source<S: ColumnSource>(
    ell: f64,
    source: &mut S,
    max_steps: u64,
    record_trajectory: bool,
    seed_id: u64,
) -> Result<RunRecord> {
    if !(ell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ell must be positive, got {ell}"
        )));
    }
    let mut state = WalkState::new(ell);
    let mut trajectory = record_trajectory.then(Vec::new);
    let mut tau = None;
    let mut steps = 0;
    while steps < max_steps {
        if let Some(tr) = trajectory.as_mut() {
            tr.push((state.i, state.a, state.b));
        }
        let step = source.next_column(state.i, state.a, state.b)?;
        steps += 1;
        let column = state.i;
        if state.advance(&step) {
            tau = Some(column);
            if let Some(tr) = trajectory.as_mut() {
                tr.push((column + 1, state.a, state.b));
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

/// One semi-lattice replica with fresh randomness.
pub fn run_semilattice(
    ell: f64,
    lambda: &ScaledField,
    mu: &ScaledField,
    options: &RunOptions,
    rng: SimRng,
    seed_id: u64,
) -> Result<RunRecord> {
    let mut sampler = ColumnSampler::new(lambda, mu, rng, options);
    run_with_source(
        ell,
        &mut sampler,
        options.max_steps,
        options.record_trajectory,
        seed_id,
    )
}
