//! Limiting objects: the hitting time ϱ of −1 by standard Brownian motion,
//! the time-inhomogeneous martingale `1 + M_t`, its hitting time ϑ with the
//! weighted area, and the time change `Λ(t) = ∫₀ᵗ λ(x₁ + s, x₂)⁻² ds`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::env::{EnvironmentProfile, ProfileFamily};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Smallest retention accepted by [`beta`]; β grows like 4/p² below it.
pub const BETA_MIN_P: f64 = 1e-6;

/// `β_p = (p⁴ + (2 − p)⁴) / (p²(2 − p)²)`.
pub fn beta(p: f64) -> Result<f64> {
    if !(BETA_MIN_P..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "beta needs p in [{BETA_MIN_P}, 1], got {p}"
        )));
    }
    let q = 2.0 - p;
    Ok((p.powi(4) + q.powi(4)) / (p * p * q * q))
}

/// Exact draw of ϱ = inf{t : 1 + B_t = 0} as `Z⁻²`.
pub fn sample_rho(rng: &mut SimRng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z != 0.0 {
            return 1.0 / (z * z);
        }
    }
}

/// `P(ϱ ≤ t) = 2(1 − Φ(t^{−1/2}))`.
pub fn rho_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t.is_infinite() {
        return 1.0;
    }
    erfc((2.0 * t).sqrt().recip())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    PureLattice,
    DilutedLattice,
    SemiLattice,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::PureLattice => "pure-lattice",
            Model::DilutedLattice => "diluted-lattice",
            Model::SemiLattice => "semi-lattice",
        })
    }
}

/// Which limit to sample. `field` is λ for the semi-lattice, p for the
/// diluted lattice and ignored for the pure lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub model: Model,
    pub field: EnvironmentProfile,
    pub mu: EnvironmentProfile,
    pub anchor: (f64, f64),
}

impl LimitSpec {
    /// Diffusion coefficient σ at model time `t`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        let (x1, x2) = (self.anchor.0 + t, self.anchor.1);
        let sigma = match self.model {
            Model::PureLattice => 1.0,
            Model::DilutedLattice => beta(self.field.value(x1, x2)?)?.sqrt(),
            Model::SemiLattice => self.field.value(x1, x2)?.recip(),
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::NonPositiveDiffusion { t, sigma });
        }
        Ok(sigma)
    }

    /// Area weight at model time `t`.
    fn weight(&self, t: f64) -> Result<f64> {
        let (x1, x2) = (self.anchor.0 + t, self.anchor.1);
        let mu = self.mu.value(x1, x2)?;
        Ok(match self.model {
            Model::PureLattice => 0.5 * mu,
            Model::DilutedLattice => 0.5 * self.field.value(x1, x2)? * mu,
            Model::SemiLattice => self.field.value(x1, x2)? * mu,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiasNote {
    ExactHitting,
    DiscretizedHitting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub theta: f64,
    pub integral: f64,
    pub dt_used: f64,
    pub bias_note: BiasNote,
    /// The path had not hit zero by `t_max`; `theta` is then `t_max`.
    pub censored: bool,
}

/// Step control of the hitting-time sampler.
///
/// Steps are `clamp((Y/(c·σ))², dt, h_max)`: far from zero the path takes
/// long steps (a crossing inside one has probability about `2(1 − Φ(c))`),
/// and within a few `σ√dt` of zero it uses `dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub dt: f64,
    pub h_max: f64,
    pub t_max: f64,
    pub safety: f64,
}

impl StepControl {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self {
            dt,
            h_max: 0.01_f64.max(dt),
            t_max,
            safety: 5.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.h_max >= self.dt && self.t_max > 0.0 && self.safety > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid step control {self:?}"
            )));
        }
        Ok(())
    }

    fn step(&self, y: f64, sigma: f64) -> f64 {
        let h = y / (self.safety * sigma);
        (h * h).clamp(self.dt, self.h_max)
    }
}

/// Result of one absorbed (or censored) path of `1 + ∫σ dB`.
struct Hit {
    clock: f64,
    area: f64,
    censored: bool,
}

/// Simulates `Y = 1 + ∫σ(s) dB_s` until it hits zero or `clock_max`, with
/// `area = ∫ w(s) Y_s ds`. Each step adds the exact conditional variance of
/// the Brownian-bridge area, `σ²h³/12`, to the trapezoid.
fn hit_zero(
    rng: &mut SimRng,
    control: &StepControl,
    clock_max: f64,
    mut sigma: impl FnMut(f64) -> Result<f64>,
    mut weight: impl FnMut(f64) -> Result<f64>,
    mut max_step: impl FnMut(f64) -> f64,
) -> Result<Hit> {
    let (mut s, mut y, mut area) = (0.0, 1.0, 0.0_f64);
    let mut w0 = weight(0.0)?;
    loop {
        if s >= clock_max {
            return Ok(Hit {
                clock: clock_max,
                area: area.max(0.0),
                censored: true,
            });
        }
        let sig = sigma(s)?;
        let h = control
            .step(y, sig)
            .min(max_step(s))
            .min(clock_max - s)
            .max(f64::MIN_POSITIVE);
        let z: f64 = StandardNormal.sample(rng);
        let y1 = y + sig * h.sqrt() * z;
        if y1 <= 0.0 {
            let hc = h * y / (y - y1);
            area += 0.5 * hc * w0 * y;
            return Ok(Hit {
                clock: s + hc,
                area: area.max(0.0),
                censored: false,
            });
        }
        let w1 = weight(s + h)?;
        let bridge: f64 = StandardNormal.sample(rng);
        area += 0.5 * h * (w0 * y + w1 * y1)
            + 0.5 * (w0 + w1) * sig * (h * h * h / 12.0).sqrt() * bridge;
        s += h;
        y = y1;
        w0 = w1;
    }
}

/// One draw of the limit pair by direct simulation of `1 + M_t`.
pub fn sample_limit_pair(
    spec: &LimitSpec,
    control: &StepControl,
    rng: &mut SimRng,
) -> Result<LimitSample> {
    control.validate()?;
    let hit = match spec.model {
        // Brownian clock: θ = ϱ/2, area ¼∫₀^ϱ (1 + B_s) μ(x₁ + s/2) ds
        Model::PureLattice => {
            let half = |s: f64| 0.5 * s;
            let mut hit = hit_zero(
                rng,
                control,
                2.0 * control.t_max,
                |_| Ok(1.0),
                |s| Ok(0.5 * spec.weight(half(s))?),
                |_| f64::INFINITY,
            )?;
            hit.clock = half(hit.clock);
            hit
        }
        _ => hit_zero(
            rng,
            control,
            control.t_max,
            |t| spec.sigma(t),
            |t| spec.weight(t),
            |_| f64::INFINITY,
        )?,
    };
    Ok(LimitSample {
        theta: hit.clock,
        integral: hit.area,
        dt_used: control.dt,
        bias_note: BiasNote::DiscretizedHitting,
        censored: hit.censored,
    })
}

/// `Λ` for the semi-lattice intensity along the horizontal line through the anchor.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeChange {
    /// `Λ(t) = t/c²`.
    Constant { c: f64, t_end: f64 },
    /// `Λ(t) = ((s₀ + t)³ − s₀³)/3` with `s₀ = x₁ + x₂`.
    ReciprocalLinear { s0: f64, t_end: f64 },
    /// `Λ(t) = e^{2s₀}(e^{2t} − 1)/2`.
    ExponentialDecay { s0: f64, t_end: f64 },
    /// Adaptive Simpson quadrature and safeguarded Newton inversion.
    Numeric {
        profile: EnvironmentProfile,
        anchor: (f64, f64),
        t_end: f64,
    },
}

impl TimeChange {
    /// Builds Λ for `lambda` at `anchor`; its range ends where the declared
    /// window ends in the first coordinate.
    pub fn new(lambda: &EnvironmentProfile, anchor: (f64, f64)) -> Result<Self> {
        let t_end = lambda.window.x1[1] - anchor.0;
        if !(t_end > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "anchor x1 = {} is not inside the window {:?}",
                anchor.0, lambda.window.x1
            )));
        }
        let s0 = anchor.0 + anchor.1;
        Ok(match lambda.family {
            ProfileFamily::Constant { value } => TimeChange::Constant { c: value, t_end },
            ProfileFamily::ReciprocalLinear if s0 >= 0.0 => {
                TimeChange::ReciprocalLinear { s0, t_end }
            }
            ProfileFamily::ReciprocalLinear => {
                return Err(Error::Domain {
                    family: "reciprocal-linear",
                    x1: anchor.0,
                    x2: anchor.1,
                })
            }
            ProfileFamily::ExponentialDecay => TimeChange::ExponentialDecay { s0, t_end },
            _ => TimeChange::Numeric {
                profile: lambda.clone(),
                anchor,
                t_end,
            },
        })
    }

    fn t_end(&self) -> f64 {
        match self {
            TimeChange::Constant { t_end, .. }
            | TimeChange::ReciprocalLinear { t_end, .. }
            | TimeChange::ExponentialDecay { t_end, .. }
            | TimeChange::Numeric { t_end, .. } => *t_end,
        }
    }

    /// `λ(x₁ + t, x₂)⁻²`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        Ok(match self {
            TimeChange::Constant { c, .. } => (c * c).recip(),
            TimeChange::ReciprocalLinear { s0, .. } => (s0 + t) * (s0 + t),
            TimeChange::ExponentialDecay { s0, .. } => (2.0 * (s0 + t)).exp(),
            TimeChange::Numeric {
                profile, anchor, ..
            } => {
                let l = profile.value(anchor.0 + t, anchor.1)?;
                (l * l).recip()
            }
        })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.t_end() {
            return Err(Error::InvalidParameter(format!(
                "time change argument {t} outside [0, {}]",
                self.t_end()
            )));
        }
        Ok(match self {
            TimeChange::Constant { c, .. } => t / (c * c),
            TimeChange::ReciprocalLinear { s0, .. } => {
                // ((s0+t)^3 - s0^3)/3 without cancellation
                t * (s0 * s0 + s0 * t + t * t / 3.0)
            }
            TimeChange::ExponentialDecay { s0, .. } => 0.5 * (2.0 * s0).exp() * (2.0 * t).exp_m1(),
            TimeChange::Numeric { .. } => adaptive_simpson(|s| self.rate(s), 0.0, t, 1e-13)?,
        })
    }

    /// Largest value of Λ on the window.
    pub fn range_end(&self) -> Result<f64> {
        let t_end = self.t_end();
        if t_end.is_infinite() {
            return Ok(f64::INFINITY);
        }
        self.eval(t_end)
    }

    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) || u > self.range_end()? {
            return Err(Error::TimeChangeRange(u));
        }
        Ok(match self {
            TimeChange::Constant { c, .. } => c * c * u,
            TimeChange::ReciprocalLinear { s0, .. } => {
                if *s0 == 0.0 {
                    (3.0 * u).cbrt()
                } else {
                    // s0·((1 + 3u/s0³)^{1/3} − 1), stable for small u
                    let x = 3.0 * u / (s0 * s0 * s0);
                    if x < 1e-3 {
                        s0 * (x.ln_1p() / 3.0).exp_m1()
                    } else {
                        (3.0 * u + s0 * s0 * s0).cbrt() - s0
                    }
                }
            }
            TimeChange::ExponentialDecay { s0, .. } => 0.5 * (2.0 * u * (-2.0 * s0).exp()).ln_1p(),
            TimeChange::Numeric { .. } => self.numeric_inverse(u)?,
        })
    }

    fn numeric_inverse(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.t_end().min(1.0));
        while self.eval(hi)? < u {
            lo = hi;
            hi = (2.0 * hi).min(self.t_end());
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.eval(t)? - u;
            if f.abs() <= 1e-13 * u.max(1.0) {
                break;
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - f / self.rate(t)?;
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(t)
    }
}

fn adaptive_simpson(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(
        f: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm)?, f(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    if b <= a {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a)?, f(0.5 * (a + b))?, f(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `Λ(t)` for the semi-lattice spec.
pub fn lambda_timechange(spec: &LimitSpec, t: f64) -> Result<f64> {
    semi_timechange(spec)?.eval(t)
}

/// `Λ⁻¹(u)` for the semi-lattice spec.
pub fn lambda_timechange_inverse(spec: &LimitSpec, u: f64) -> Result<f64> {
    semi_timechange(spec)?.inverse(u)
}

fn semi_timechange(spec: &LimitSpec) -> Result<TimeChange> {
    if spec.model != Model::SemiLattice {
        return Err(Error::InvalidParameter(format!(
            "the time change is defined for the semi-lattice, not {}",
            spec.model
        )));
    }
    TimeChange::new(&spec.field, spec.anchor)
}

/// One draw of the limit pair in the Brownian clock: simulate `1 + B` to
/// its hitting time ϱ and map `θ = Λ⁻¹(ϱ)`; the area weight is
/// `λ(x₁ + Λ⁻¹(s), x₂)³ μ(x₁ + Λ⁻¹(s), x₂)`.
pub fn sample_limit_pair_timechanged(
    spec: &LimitSpec,
    control: &StepControl,
    rng: &mut SimRng,
) -> Result<LimitSample> {
    control.validate()?;
    let change = semi_timechange(spec)?;
    let clock_max = change.eval(control.t_max.min(change.t_end()))?;
    let (x1, x2) = spec.anchor;
    let weight = |s: f64| -> Result<f64> {
        let t = change.inverse(s.min(clock_max))?;
        let l = spec.field.value(x1 + t, x2)?;
        Ok(l * l * l * spec.mu.value(x1 + t, x2)?)
    };
    // keep model-time steps below h_max
    let max_step = |s: f64| -> f64 {
        match change.inverse(s.min(clock_max)) {
            Ok(t) => change
                .eval((t + control.h_max).min(change.t_end()))
                .map(|u| (u - s).max(control.dt))
                .unwrap_or(control.h_max),
            Err(_) => control.h_max,
        }
    };
    // h_max bounds model time through `max_step`, not the Brownian clock
    let clock_control = StepControl {
        h_max: f64::INFINITY,
        ..*control
    };
    let hit = hit_zero(
        rng,
        &clock_control,
        clock_max,
        |_| Ok(1.0),
        weight,
        max_step,
    )?;
    let theta = if hit.censored {
        control.t_max
    } else {
        change.inverse(hit.clock)?
    };
    Ok(LimitSample {
        theta,
        integral: hit.area,
        dt_used: control.dt,
        bias_note: BiasNote::DiscretizedHitting,
        censored: hit.censored,
    })
}

/// Exact hitting time paired with a placeholder area, for checks that only
/// need the ϱ marginal.
pub fn sample_rho_scaled(rng: &mut SimRng, scale: f64) -> LimitSample {
    LimitSample {
        theta: scale * sample_rho(rng),
        integral: f64::NAN,
        dt_used: 0.0,
        bias_note: BiasNote::ExactHitting,
        censored: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FieldRole, Window};
    use crate::rng::{Domain, StreamKey};

    fn rng(k: u64) -> SimRng {
        StreamKey::new(5, Domain::Limit, k).rng()
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta(1.0).unwrap(), 2.0);
        assert!((beta(0.5).unwrap() - 82.0 / 9.0).abs() < 1e-13);
        assert!(beta(0.0).is_err());
        assert!(beta(5e-7).is_err());
        assert!(beta(1.1).is_err());
        let p: f64 = 1e-4;
        // leading order (0 + 2⁴)/(p²·2²) = 4/p²
        assert!((beta(p).unwrap() * p * p / 4.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn beta_has_its_minimum_at_one() {
        let mut prev = f64::INFINITY;
        for k in 1..=1000 {
            let p = k as f64 / 1000.0;
            let b = beta(p).unwrap();
            assert!(b >= 2.0);
            assert!(b < prev, "beta is decreasing on (0, 1]");
            prev = b;
        }
    }

    #[test]
    fn rho_cdf_values() {
        assert!((rho_cdf(2.198_109_338_317_732) - 0.5).abs() < 1e-12);
        assert!((rho_cdf(1.0) - 0.317_310_507_862_914_1).abs() < 1e-10);
        assert_eq!(rho_cdf(0.0), 0.0);
        assert!(rho_cdf(1e12) > 0.999_99);
    }

    #[test]
    fn rho_draws_match_cdf() {
        let mut r = rng(0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_rho(&mut r)).collect();
        let below_median = draws.iter().filter(|&&x| x <= 2.1981).count() as f64 / n as f64;
        let below_one = draws.iter().filter(|&&x| x <= 1.0).count() as f64 / n as f64;
        assert!((below_median - 0.5).abs() < 0.005);
        assert!((below_one - 0.3173).abs() < 0.005);
    }

    #[test]
    fn closed_form_time_changes() {
        let everywhere = Window::EVERYWHERE;
        let c = EnvironmentProfile::new(
            ProfileFamily::Constant { value: 2.0 },
            FieldRole::Intensity,
            everywhere,
        )
        .unwrap();
        let tc = TimeChange::new(&c, (0.0, 0.0)).unwrap();
        assert_eq!(tc.inverse(3.0).unwrap(), 12.0);

        let window = Window::new([1e-9, 50.0], [0.0, 1.0]).unwrap();
        let r = EnvironmentProfile::new(
            ProfileFamily::ReciprocalLinear,
            FieldRole::Intensity,
            window,
        )
        .unwrap();
        let tc = TimeChange::new(&r, (0.0, 0.0)).unwrap();
        for rho in [1e-6_f64, 0.3, 2.2, 50.0, 1e4] {
            assert!(
                ((tc.inverse(rho).unwrap() - (3.0 * rho).cbrt()) / (3.0 * rho).cbrt()).abs()
                    < 1e-14
            );
        }
        let e = EnvironmentProfile::new(
            ProfileFamily::ExponentialDecay,
            FieldRole::Intensity,
            window,
        )
        .unwrap();
        let tc = TimeChange::new(&e, (0.0, 0.0)).unwrap();
        for rho in [1e-6_f64, 0.3, 2.2, 50.0, 1e4] {
            let want = 0.5 * (1.0 + 2.0 * rho).ln();
            assert!((tc.inverse(rho).unwrap() - want).abs() < 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn numeric_time_change_round_trips() {
        let window = Window::new([0.0, 10.0], [-1.0, 1.0]).unwrap();
        let affine = EnvironmentProfile::new(
            ProfileFamily::AffineClamped {
                base: 1.0,
                slope_x1: 0.3,
                slope_x2: 0.0,
                min: 0.5,
                max: 2.0,
            },
            FieldRole::Intensity,
            window,
        )
        .unwrap();
        let tc = TimeChange::new(&affine, (0.0, 0.0)).unwrap();
        let mut prev = 0.0;
        for k in 1..=40 {
            let t = k as f64 * 0.2;
            let u = tc.eval(t).unwrap();
            assert!(u > prev);
            prev = u;
            assert!((tc.inverse(u).unwrap() - t).abs() < 1e-10);
            assert!((tc.eval(tc.inverse(u).unwrap()).unwrap() - u).abs() < 1e-10);
        }
        // t/(1 + 0.3t)^2 integrates to a closed form while unclamped
        let t: f64 = 3.0;
        let exact = (1.0 / 0.3) * (1.0 - 1.0 / (1.0 + 0.3 * t));
        assert!((tc.eval(t).unwrap() - exact).abs() < 1e-11);
        assert!(matches!(tc.inverse(1e9), Err(Error::TimeChangeRange(_))));
    }

    #[test]
    fn reciprocal_inverse_is_stable_near_zero() {
        let window = Window::new([1.0, 1e6], [0.0, 1.0]).unwrap();
        let r = EnvironmentProfile::new(
            ProfileFamily::ReciprocalLinear,
            FieldRole::Intensity,
            window,
        )
        .unwrap();
        let tc = TimeChange::new(&r, (1.0, 0.0)).unwrap();
        for u in [1e-14, 1e-9, 1e-4, 0.5, 20.0] {
            let t = tc.inverse(u).unwrap();
            assert!(((tc.eval(t).unwrap() - u) / u).abs() < 1e-12, "{u}");
        }
    }
}
