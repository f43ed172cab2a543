//! Inhomogeneity fields λ (Poisson intensity), p (site retention) and μ
//! (traffic per node), and their ℓ²-rescaled versions.
//!
//! Every family is closed under the rescaling `x ↦ anchor + x/ℓ²`, so a
//! [`ScaledField`] only stores the base profile, `ℓ` and the anchor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Functional family of a base field on R².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProfileFamily {
    /// `f(x) = value`.
    Constant { value: f64 },
    /// `f(x) = clamp(base + slope_x1·x₁ + slope_x2·x₂, min, max)`.
    AffineClamped {
        base: f64,
        slope_x1: f64,
        slope_x2: f64,
        min: f64,
        max: f64,
    },
    /// `f(x) = 1/(x₁ + x₂)`, defined for `x₁ + x₂ ≥ 0` (infinite on the line).
    ReciprocalLinear,
    /// `f(x) = exp(−x₁ − x₂)`.
    ExponentialDecay,
    /// Bilinear interpolation on a rectangular grid, constant beyond its edges.
    Tabulated(Table),
}

impl ProfileFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileFamily::Constant { .. } => "constant",
            ProfileFamily::AffineClamped { .. } => "affine-clamped",
            ProfileFamily::ReciprocalLinear => "reciprocal-linear",
            ProfileFamily::ExponentialDecay => "exponential-decay",
            ProfileFamily::Tabulated(_) => "tabulated",
        }
    }
}

/// Grid values of a tabulated profile; `values[i * x2.len() + j]` sits at
/// `(x1[i], x2[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub values: Vec<f64>,
}

impl Table {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidProfile(format!("tabulated: {msg}")));
        if x1.is_empty() || x2.is_empty() {
            return bad("empty axis");
        }
        if values.len() != x1.len() * x2.len() {
            return bad("values length must be len(x1) * len(x2)");
        }
        let increasing = |axis: &[f64]| axis.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&x1) || !increasing(&x2) {
            return bad("axes must be strictly increasing");
        }
        if values.iter().chain(&x1).chain(&x2).any(|v| !v.is_finite()) {
            return bad("non-finite entry");
        }
        Ok(Self { x1, x2, values })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.x2.len() + j]
    }

    /// Bracketing index and weight of `x` on `axis`, clamped to the grid.
    fn locate(axis: &[f64], x: f64) -> (usize, f64) {
        if axis.len() == 1 || x <= axis[0] {
            return (0, 0.0);
        }
        let last = axis.len() - 1;
        if x >= axis[last] {
            return (last - 1, 1.0);
        }
        let k = axis.partition_point(|&a| a <= x) - 1;
        (k, (x - axis[k]) / (axis[k + 1] - axis[k]))
    }

    /// Node values along x₂ after interpolating in x₁.
    fn column_at(&self, x1: f64) -> Vec<f64> {
        let (k, w) = Self::locate(&self.x1, x1);
        (0..self.x2.len())
            .map(|j| {
                if self.x1.len() == 1 {
                    self.at(0, j)
                } else {
                    (1.0 - w) * self.at(k, j) + w * self.at(k + 1, j)
                }
            })
            .collect()
    }

    fn value(&self, x1: f64, x2: f64) -> f64 {
        let col = self.column_at(x1);
        if self.x2.len() == 1 {
            return col[0];
        }
        let (k, w) = Self::locate(&self.x2, x2);
        (1.0 - w) * col[k] + w * col[k + 1]
    }

    /// Exact ∫_{u0}^{u1} f(x1, u) du of the piecewise-linear section.
    fn integral_x2(&self, x1: f64, u0: f64, u1: f64) -> f64 {
        let col = self.column_at(x1);
        let grid = &self.x2;
        let section = |u: f64| -> f64 {
            if grid.len() == 1 {
                return col[0];
            }
            let (k, w) = Self::locate(grid, u);
            (1.0 - w) * col[k] + w * col[k + 1]
        };
        let mut breaks = vec![u0];
        breaks.extend(grid.iter().copied().filter(|&g| g > u0 && g < u1));
        breaks.push(u1);
        breaks
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (section(w[0]) + section(w[1])))
            .sum()
    }

    fn lipschitz_x2(&self) -> f64 {
        let mut lip: f64 = 0.0;
        for i in 0..self.x1.len() {
            for j in 1..self.x2.len() {
                let slope = (self.at(i, j) - self.at(i, j - 1)) / (self.x2[j] - self.x2[j - 1]);
                lip = lip.max(slope.abs());
            }
        }
        lip
    }
}

/// What a field is used for; decides which bounds it must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldRole {
    /// Poisson intensity λ: `0 < λ_min ≤ λ ≤ λ_max < ∞`.
    Intensity,
    /// Site retention probability p: `0 < p_min ≤ p ≤ 1`.
    Retention,
    /// Traffic per node μ: `0 ≤ μ ≤ μ_max < ∞`.
    Traffic,
}

/// Rectangle in base (unscaled) coordinates on which bounds are validated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
}

impl Window {
    pub const EVERYWHERE: Window = Window {
        x1: [f64::NEG_INFINITY, f64::INFINITY],
        x2: [f64::NEG_INFINITY, f64::INFINITY],
    };

    pub fn new(x1: [f64; 2], x2: [f64; 2]) -> Result<Self> {
        if !(x1[0] <= x1[1] && x2[0] <= x2[1]) || [x1, x2].iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidProfile(format!("bad window {x1:?} x {x2:?}")));
        }
        Ok(Self { x1, x2 })
    }

    pub fn contains(&self, other: &Window) -> bool {
        self.x1[0] <= other.x1[0]
            && other.x1[1] <= self.x1[1]
            && self.x2[0] <= other.x2[0]
            && other.x2[1] <= self.x2[1]
    }
}

/// A validated base field with its bounds on the declared window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentProfile {
    pub family: ProfileFamily,
    pub role: FieldRole,
    pub window: Window,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Lipschitz constant Ξ in the second argument, on the window.
    pub lipschitz: f64,
    pub vertically_homogeneous: bool,
}

impl EnvironmentProfile {
    pub fn new(family: ProfileFamily, role: FieldRole, window: Window) -> Result<Self> {
        let (lower, upper, lipschitz, vertical) = family_bounds(&family, &window)?;
        let reject = |why: String| {
            Err(Error::InvalidProfile(format!(
                "{} on {:?} x {:?}: {why}",
                family.name(),
                window.x1,
                window.x2
            )))
        };
        if !(lower.is_finite() && upper.is_finite()) {
            return reject(format!("bounds [{lower}, {upper}] are not finite"));
        }
        match role {
            FieldRole::Intensity if lower <= 0.0 => {
                return reject(format!("intensity lower bound {lower} must be positive"))
            }
            FieldRole::Retention if lower <= 0.0 || upper > 1.0 => {
                return reject(format!(
                    "retention bounds [{lower}, {upper}] must lie in (0, 1]"
                ))
            }
            FieldRole::Traffic if lower < 0.0 => {
                return reject(format!("traffic lower bound {lower} must be nonnegative"))
            }
            _ => {}
        }
        Ok(Self {
            family,
            role,
            window,
            lower_bound: lower,
            upper_bound: upper,
            lipschitz,
            vertically_homogeneous: vertical,
        })
    }

    pub fn constant(value: f64, role: FieldRole) -> Result<Self> {
        Self::new(ProfileFamily::Constant { value }, role, Window::EVERYWHERE)
    }

    /// Base field value at `(x1, x2)`.
    pub fn value(&self, x1: f64, x2: f64) -> Result<f64> {
        Ok(match &self.family {
            ProfileFamily::Constant { value } => *value,
            ProfileFamily::AffineClamped {
                base,
                slope_x1,
                slope_x2,
                min,
                max,
            } => (base + slope_x1 * x1 + slope_x2 * x2).clamp(*min, *max),
            ProfileFamily::ReciprocalLinear => {
                let s = x1 + x2;
                if s < 0.0 || s.is_nan() {
                    return Err(self.domain(x1, x2));
                }
                1.0 / s
            }
            ProfileFamily::ExponentialDecay => (-x1 - x2).exp(),
            ProfileFamily::Tabulated(table) => table.value(x1, x2),
        })
    }

    /// `∫_{u0}^{u1} f(x1, u) du` for `u0 ≤ u1`, in closed form for every family.
    pub fn integral_x2(&self, x1: f64, u0: f64, u1: f64) -> Result<f64> {
        if u1 <= u0 {
            return Ok(0.0);
        }
        Ok(match &self.family {
            ProfileFamily::Constant { value } => value * (u1 - u0),
            ProfileFamily::AffineClamped {
                base,
                slope_x1,
                slope_x2,
                min,
                max,
            } => {
                let offset = base + slope_x1 * x1;
                if *slope_x2 == 0.0 {
                    offset.clamp(*min, *max) * (u1 - u0)
                } else {
                    // H(v) = ∫_min^v clamp(t, min, max) dt
                    let antiderivative = |v: f64| {
                        if v <= *min {
                            min * (v - min)
                        } else if v <= *max {
                            0.5 * (v * v - min * min)
                        } else {
                            0.5 * (max * max - min * min) + max * (v - max)
                        }
                    };
                    let (v0, v1) = (offset + slope_x2 * u0, offset + slope_x2 * u1);
                    (antiderivative(v1) - antiderivative(v0)) / slope_x2
                }
            }
            ProfileFamily::ReciprocalLinear => {
                let s0 = x1 + u0;
                if s0 <= 0.0 {
                    return Err(self.domain(x1, u0));
                }
                ((u1 - u0) / s0).ln_1p()
            }
            ProfileFamily::ExponentialDecay => (-x1 - u0).exp() * -(-(u1 - u0)).exp_m1(),
            ProfileFamily::Tabulated(table) => table.integral_x2(x1, u0, u1),
        })
    }

    /// Solves `∫ f(x1, ·) = mass` over the interval that starts at `u0` and
    /// extends in `direction`; returns its length (in base units).
    pub fn length_for_integral(
        &self,
        x1: f64,
        u0: f64,
        mass: f64,
        direction: Direction,
    ) -> Result<f64> {
        if mass <= 0.0 {
            return Ok(0.0);
        }
        let up = direction == Direction::Up;
        let closed = match &self.family {
            ProfileFamily::Constant { value } => Some(mass / value),
            ProfileFamily::ReciprocalLinear => {
                let s0 = x1 + u0;
                if s0 <= 0.0 {
                    return Err(self.domain(x1, u0));
                }
                if up {
                    Some(s0 * mass.exp_m1())
                } else {
                    // s0 − s1 with ln(s0/s1) = mass
                    Some(-s0 * (-mass).exp_m1())
                }
            }
            ProfileFamily::ExponentialDecay => {
                let scale = (x1 + u0).exp();
                if up {
                    // e^{-x1-u0}(1 − e^{-g}) = mass
                    let q = mass * scale;
                    if q >= 1.0 {
                        return Err(Error::WindowExceeded {
                            column: 0,
                            what: "exponential-decay column has less mass above the start point",
                        });
                    }
                    Some(-(-q).ln_1p())
                } else {
                    Some((mass * scale).ln_1p())
                }
            }
            _ => None,
        };
        if let Some(length) = closed {
            return Ok(length);
        }
        let integral = |g: f64| -> Result<f64> {
            if up {
                self.integral_x2(x1, u0, u0 + g)
            } else {
                self.integral_x2(x1, u0 - g, u0)
            }
        };
        // bracket by doubling, then bisect to the resolution of f64
        let mut hi = if self.lower_bound > 0.0 {
            mass / self.upper_bound.max(f64::MIN_POSITIVE)
        } else {
            1.0
        };
        let mut lo = 0.0;
        let mut doublings = 0;
        while integral(hi)? < mass {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 1100 || !hi.is_finite() {
                return Err(Error::WindowExceeded {
                    column: 0,
                    what: "field mass is too small to reach the requested integral",
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if integral(mid)? < mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Checks the bound and Lipschitz invariants on an `n × n` grid of the
    /// window (infinite window edges are replaced by ±`reach`).
    pub fn spot_check(&self, n: usize, reach: f64) -> Result<()> {
        let finite = |v: f64| v.clamp(-reach, reach);
        let axis = |r: [f64; 2]| -> Vec<f64> {
            let (a, b) = (finite(r[0]), finite(r[1]));
            (0..n)
                .map(|k| a + (b - a) * k as f64 / (n.max(2) - 1) as f64)
                .collect()
        };
        let (xs, ys) = (axis(self.window.x1), axis(self.window.x2));
        let slack = 1e-12 * self.upper_bound.abs().max(1.0);
        for &x1 in &xs {
            let row: Vec<f64> = ys
                .iter()
                .map(|&x2| self.value(x1, x2))
                .collect::<Result<_>>()?;
            for (&x2, &v) in ys.iter().zip(&row) {
                if v < self.lower_bound - slack || v > self.upper_bound + slack {
                    return Err(Error::InvalidProfile(format!(
                        "value {v} at ({x1}, {x2}) outside [{}, {}]",
                        self.lower_bound, self.upper_bound
                    )));
                }
            }
            for a in 0..ys.len() {
                for b in a + 1..ys.len() {
                    let lhs = (row[a] - row[b]).abs();
                    let rhs = self.lipschitz * (ys[a] - ys[b]).abs();
                    if lhs > rhs + slack {
                        return Err(Error::InvalidProfile(format!(
                            "Lipschitz bound {} violated between x2 = {} and {}",
                            self.lipschitz, ys[a], ys[b]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn domain(&self, x1: f64, x2: f64) -> Error {
        Error::Domain {
            family: self.family.name(),
            x1,
            x2,
        }
    }
}

/// Returns `(lower, upper, lipschitz_x2, vertically_homogeneous)` on `window`.
fn family_bounds(family: &ProfileFamily, window: &Window) -> Result<(f64, f64, f64, bool)> {
    let [a1, b1] = window.x1;
    let [a2, b2] = window.x2;
    Ok(match family {
        ProfileFamily::Constant { value } => {
            if !value.is_finite() {
                return Err(Error::InvalidProfile(format!("constant value {value}")));
            }
            (*value, *value, 0.0, true)
        }
        ProfileFamily::AffineClamped {
            base,
            slope_x1,
            slope_x2,
            min,
            max,
        } => {
            if !(min <= max)
                || [base, slope_x1, slope_x2, min, max]
                    .iter()
                    .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidProfile(
                    "affine-clamped needs finite parameters with min <= max".into(),
                ));
            }
            let term = |slope: f64, x: f64| if slope == 0.0 { 0.0 } else { slope * x };
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for x1 in [a1, b1] {
                for x2 in [a2, b2] {
                    let raw = base + term(*slope_x1, x1) + term(*slope_x2, x2);
                    let v = raw.clamp(*min, *max);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            let vertical = *slope_x2 == 0.0 || min == max;
            (
                lo,
                hi,
                if vertical { 0.0 } else { slope_x2.abs() },
                vertical,
            )
        }
        ProfileFamily::ReciprocalLinear => {
            let (s_min, s_max) = (a1 + a2, b1 + b2);
            if !(s_min > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "reciprocal-linear needs x1 + x2 > 0 on the window (min is {s_min})"
                )));
            }
            (1.0 / s_max, 1.0 / s_min, 1.0 / (s_min * s_min), false)
        }
        ProfileFamily::ExponentialDecay => {
            let (s_min, s_max) = (a1 + a2, b1 + b2);
            let upper = (-s_min).exp();
            ((-s_max).exp(), upper, upper, false)
        }
        ProfileFamily::Tabulated(table) => {
            let lo = table.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = table
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let lip = table.lipschitz_x2();
            (lo, hi, lip, table.x2.len() == 1 || lip == 0.0)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// `f_ℓ(i, y) = f(anchor₁ + i/ℓ², anchor₂ + y/ℓ²)`.
#[derive(Clone, Debug)]
pub struct ScaledField {
    profile: Arc<EnvironmentProfile>,
    ell: f64,
    anchor: (f64, f64),
    ell_sq: f64,
}

impl ScaledField {
    pub fn new(
        profile: impl Into<Arc<EnvironmentProfile>>,
        ell: f64,
        anchor: (f64, f64),
    ) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ell must be positive, got {ell}"
            )));
        }
        Ok(Self {
            profile: profile.into(),
            ell,
            anchor,
            ell_sq: ell * ell,
        })
    }

    pub fn profile(&self) -> &EnvironmentProfile {
        &self.profile
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn anchor(&self) -> (f64, f64) {
        self.anchor
    }

    pub fn is_vertically_homogeneous(&self) -> bool {
        self.profile.vertically_homogeneous
    }

    /// Base coordinates of lattice point `(i, y)`.
    pub fn base_point(&self, i: u64, y: f64) -> (f64, f64) {
        (
            self.anchor.0 + i as f64 / self.ell_sq,
            self.anchor.1 + y / self.ell_sq,
        )
    }

    /// Base-coordinate rectangle swept by columns `0..columns` and heights
    /// `[-height, height]`.
    pub fn footprint(&self, columns: u64, height: f64) -> Window {
        let (x1, lo) = self.base_point(0, -height);
        let (x1_end, hi) = self.base_point(columns, height);
        Window {
            x1: [x1, x1_end],
            x2: [lo, hi],
        }
    }

    /// Fails unless the declared window of the profile covers the footprint.
    pub fn check_window(&self, columns: u64, height: f64) -> Result<()> {
        let need = self.footprint(columns, height);
        if self.profile.window.contains(&need) {
            Ok(())
        } else {
            Err(Error::InvalidProfile(format!(
                "{} declared on {:?} x {:?} does not cover the simulation footprint {:?} x {:?}",
                self.profile.family.name(),
                self.profile.window.x1,
                self.profile.window.x2,
                need.x1,
                need.x2
            )))
        }
    }

    pub fn eval(&self, i: u64, y: f64) -> Result<f64> {
        let (x1, x2) = self.base_point(i, y);
        self.profile.value(x1, x2)
    }

    /// `∫_a^b f_ℓ(i, s) ds`.
    pub fn vertical_mass(&self, i: u64, a: f64, b: f64) -> Result<f64> {
        if !(a <= b) {
            return Err(Error::InvalidParameter(format!(
                "vertical_mass needs a <= b, got [{a}, {b}]"
            )));
        }
        let (x1, u0) = self.base_point(i, a);
        let u1 = self.anchor.1 + b / self.ell_sq;
        Ok(self.ell_sq * self.profile.integral_x2(x1, u0, u1)?)
    }

    /// Distance `g ≥ 0` such that the mass between `start` and `start ± g`
    /// equals `mass`.
    pub fn gap_for_mass(&self, i: u64, start: f64, mass: f64, direction: Direction) -> Result<f64> {
        let (x1, u0) = self.base_point(i, start);
        let length = self
            .profile
            .length_for_integral(x1, u0, mass / self.ell_sq, direction)
            .map_err(|e| match e {
                Error::WindowExceeded { what, .. } => Error::WindowExceeded { column: i, what },
                other => other,
            })?;
        Ok(self.ell_sq * length)
    }
}
