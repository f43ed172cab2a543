//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! and fails when the criterion does. Tests hold a global lock so that the
//! runtime budgets are measured without competing work.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use driftnet::config::{ExperimentConfig, ProfileDecl};
use driftnet::env::{EnvironmentProfile, FieldRole, ProfileFamily, ScaledField, Window};
use driftnet::harness::{self, CompareEntry};
use driftnet::lattice::{constant_retention_column, exact_tau_pmf, LatticeWalkState, Neumaier};
use driftnet::limit::{
    beta, rho_cdf, sample_limit_pair, sample_limit_pair_timechanged, sample_rho_scaled,
    LimitSample, LimitSpec, Model, StepControl, TimeChange,
};
use driftnet::oracle::{check_replica, default_height, CouplingCase, CouplingStatus};
use driftnet::rng::{Domain, StreamKey};
use driftnet::semilattice::{general_column, homogeneous_column, RunRecord, WalkState};
use driftnet::stats::{
    binomial_band, chi_square_discrete, histogram_band_check, increment_cdf, ks_two_sample,
    tail_ratio, EcdfTable, TailKind,
};
use rayon::prelude::*;
use statrs::distribution::{Discrete, Poisson};

const SEED: u64 = 20_240_611;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: String) {
    let line = format!(
        "criterion {n}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // written to the process stdout directly so it survives output capture
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn within_budget(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn constant(v: f64, role: FieldRole, ell: f64) -> ScaledField {
    ScaledField::new(
        EnvironmentProfile::constant(v, role).unwrap(),
        ell,
        (0.0, 0.0),
    )
    .unwrap()
}

// 1. Monte Carlo pure-lattice PMF at ℓ = 10 inside simultaneous 99%
// binomial bands for n ≤ 500.
#[test]
fn criterion_1_exact_law_reproduction() {
    let _guard = serial();
    const ELL: u64 = 10;
    const N: u64 = 1_000_000;
    const N_MAX: u64 = 500;
    const ALPHA: f64 = 0.01;
    const BUDGET_SECS: u64 = 300;

    let start = Instant::now();
    let mut config = ExperimentConfig::homogeneous(Model::PureLattice, ELL, 1.0, N, SEED);
    config.max_steps = Some(N_MAX + 1);
    let counts = harness::with_threads(Some(1), || {
        (0..N)
            .into_par_iter()
            .fold(
                || vec![0u64; N_MAX as usize + 1],
                |mut hist, k| {
                    let r = harness::run_replica(&config, ELL, k).unwrap();
                    if let Some(t) = r.tau.filter(|&t| t <= N_MAX) {
                        hist[t as usize] += 1;
                    }
                    hist
                },
            )
            .reduce(
                || vec![0u64; N_MAX as usize + 1],
                |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
            )
    })
    .unwrap();
    let elapsed = start.elapsed();

    let mut outside = Vec::new();
    for n in 0..=N_MAX {
        let p = if n == 0 {
            0.0
        } else {
            exact_tau_pmf(ELL, n).unwrap()
        };
        let (lo, hi) = binomial_band(N, p, ALPHA, N_MAX as usize).unwrap();
        let c = counts[n as usize];
        if c < lo || c > hi {
            outside.push((n, c, lo, hi));
        }
    }
    let pass = outside.is_empty() && within_budget(elapsed, BUDGET_SECS);
    report(
        1,
        pass,
        format!(
            "{} of {} cells outside the bands {:?}; {:.1}s (budget {BUDGET_SECS}s, 1 thread)",
            outside.len(),
            N_MAX + 1,
            outside.iter().take(5).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

// 2. Rescaled tail and point mass at ℓ = 2, f = 10⁶.
#[test]
fn criterion_2_sqrt_pi_tail_constants() {
    let _guard = serial();
    const F: f64 = 1e6;
    const REL_TOL: f64 = 0.02;
    const BUDGET_SECS: u64 = 10;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let tail_target = 1.0 / (4.0 * sqrt_pi);
    let pmf_target = 1.0 / (2.0 * sqrt_pi);

    let start = Instant::now();
    let tail = tail_ratio(TailKind::Tail, 2, F).unwrap();
    let pmf = tail_ratio(TailKind::Pmf, 2, F).unwrap();
    let elapsed = start.elapsed();
    let tail_ok = ((tail - tail_target) / tail_target).abs() <= REL_TOL;
    let pmf_ok = ((pmf - pmf_target) / pmf_target).abs() <= REL_TOL;
    report(
        2,
        tail_ok && pmf_ok && within_budget(elapsed, BUDGET_SECS),
        format!(
            "tail ratio {tail:.6} vs {tail_target:.6} ({}), pmf ratio {pmf:.6} vs {pmf_target:.6} ({}); {:.3}s",
            if tail_ok { "ok" } else { "off" },
            if pmf_ok { "ok" } else { "off" },
            elapsed.as_secs_f64()
        ),
    );
}

// 3. Exact CDF of τ/ℓ² at ℓ = 202 against the limit CDF of ϱ/2.
#[test]
fn criterion_3_lattice_limit_cdf() {
    let _guard = serial();
    const ELL: u64 = 202;
    const T_RANGE: (f64, f64) = (0.05, 20.0);
    const TOL: f64 = 0.02;
    const BUDGET_SECS: u64 = 60;

    let start = Instant::now();
    let scale = (ELL * ELL) as f64;
    let n_lo = (T_RANGE.0 * scale).ceil() as u64;
    let n_hi = (T_RANGE.1 * scale).floor() as u64;
    let limit = |t: f64| rho_cdf(2.0 * t);
    let mut cdf = Neumaier::default();
    let mut sup: f64 = 0.0;
    let mut at = 0.0;
    for n in 1..=n_hi {
        cdf.add(exact_tau_pmf(ELL, n).unwrap());
        if n < n_lo {
            continue;
        }
        let c = cdf.sum();
        // the step CDF is constant on [n, n + 1)
        let t0 = n as f64 / scale;
        let t1 = ((n + 1) as f64 / scale).min(T_RANGE.1);
        for t in [t0, t1] {
            let d = (c - limit(t)).abs();
            if d > sup {
                sup = d;
                at = t;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        3,
        sup <= TOL && within_budget(elapsed, BUDGET_SECS),
        format!(
            "sup |F_exact - F_limit| = {sup:.5} at t = {at:.4} (tol {TOL}); {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// 4. Bounding walk against the brute-force forest on shared realizations.
#[test]
fn criterion_4_oracle_coupling() {
    let _guard = serial();
    const SEEDS: u64 = 1000;
    const HORIZON: u64 = 200;
    const BUDGET_SECS: u64 = 120;

    let start = Instant::now();
    let cases = [
        (
            Model::SemiLattice,
            4.0,
            constant(1.0, FieldRole::Intensity, 4.0),
            1.0,
        ),
        (
            Model::DilutedLattice,
            2.0,
            constant(0.7, FieldRole::Retention, 2.0),
            0.7,
        ),
        (
            Model::PureLattice,
            2.0,
            constant(1.0, FieldRole::Retention, 2.0),
            1.0,
        ),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (model, ell, field, density) in cases {
        let case = CouplingCase {
            model,
            ell,
            field,
            mu: constant(1.0, FieldRole::Traffic, ell),
            horizon: HORIZON,
            height: default_height(ell, HORIZON, density),
            seed: SEED,
        };
        let outcomes: Vec<_> = (0..SEEDS)
            .into_par_iter()
            .map(|k| check_replica(&case, k).unwrap())
            .collect();
        let matched = outcomes
            .iter()
            .filter(|o| o.status == CouplingStatus::Match)
            .count();
        let merged = outcomes
            .iter()
            .filter(|o| o.status == CouplingStatus::Match && o.walk_tau.is_some())
            .count();
        let first_bad = outcomes.iter().find(|o| o.status != CouplingStatus::Match);
        pass &= matched as u64 == SEEDS;
        details.push(format!(
            "{model} ell={ell}: {matched}/{SEEDS} equal ({merged} merged before column {HORIZON}){}",
            first_bad.map_or(String::new(), |o| format!(", first bad seed {} {:?}", o.seed_id, o.status))
        ));
    }
    let elapsed = start.elapsed();
    report(
        4,
        pass && within_budget(elapsed, BUDGET_SECS),
        format!("{}; {:.1}s", details.join("; "), elapsed.as_secs_f64()),
    );
}

fn criterion_5_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::homogeneous(Model::SemiLattice, 100, 1.0, 20_000, SEED);
    c.field = Some(ProfileDecl::constant(1.0));
    c.max_steps = Some(50 * 100 * 100);
    c.limit.dt = 1e-4;
    c.limit.t_max = 50.0;
    c.thresholds.ks_tau = 0.025;
    c.thresholds.ks_integral = 0.03;
    c.validate().unwrap();
    c
}

struct SemiRun {
    records: Vec<RunRecord>,
    limit: Vec<LimitSample>,
    elapsed: Duration,
}

fn criterion_5_run() -> &'static SemiRun {
    static RUN: OnceLock<SemiRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = criterion_5_config();
        let start = Instant::now();
        let (records, limit) = harness::with_threads(Some(8), || {
            (
                harness::simulate(&config, 100).unwrap(),
                harness::limit_samples(&config).unwrap(),
            )
        })
        .unwrap();
        SemiRun {
            records,
            limit,
            elapsed: start.elapsed(),
        }
    })
}

// 5. Homogeneous semi-lattice at ℓ = 100 against the sampled limit pair.
#[test]
fn criterion_5_semilattice_convergence() {
    let _guard = serial();
    const RANK_TOL: f64 = 0.02;
    const BUDGET_SECS: u64 = 900;
    let config = criterion_5_config();
    let run = criterion_5_run();
    let entry: CompareEntry =
        harness::compare_samples(&config, 100, &run.records, &run.limit).unwrap();
    let rank_gap = match (entry.spearman_walk, entry.spearman_limit) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    let pass = entry.pass && rank_gap <= RANK_TOL && within_budget(run.elapsed, BUDGET_SECS);
    report(
        5,
        pass,
        format!(
            "KS tau {:.4} (<= {}), KS T {:.4} (<= {}), Spearman walk {:.4} vs limit {:.4} (gap <= {RANK_TOL}), censor {:.4}/{:.4}; {:.1}s",
            entry.tau.statistic,
            entry.tau.threshold,
            entry.integral.statistic,
            entry.integral.threshold,
            entry.spearman_walk.unwrap_or(f64::NAN),
            entry.spearman_limit.unwrap_or(f64::NAN),
            entry.tau.censor_rate,
            entry.tau.censor_rate_other.unwrap_or(f64::NAN),
            run.elapsed.as_secs_f64()
        ),
    );
}

// 6. Diluted lattice p ≡ 1/2 at ℓ = 102: τ/ℓ² against ϱ/β and the
// variance of the width increments.
#[test]
fn criterion_6_diluted_convergence() {
    let _guard = serial();
    const ELL: u64 = 102;
    const N: u64 = 20_000;
    const P: f64 = 0.5;
    const KS_TOL: f64 = 0.03;
    const COLUMNS: u64 = 1_000_000;
    const VAR_TOL: f64 = 0.01;

    let start = Instant::now();
    let mut config = ExperimentConfig::homogeneous(Model::DilutedLattice, ELL, P, N, SEED);
    config.max_steps = Some(50 * ELL * ELL);
    let records = harness::simulate(&config, ELL).unwrap();
    let b = beta(P).unwrap();
    let cut = 50.0;
    let scale = (ELL * ELL) as f64;
    let walk = EcdfTable::from_pairs(
        records
            .iter()
            .map(|r| (r.tau.map_or(cut, |t| t as f64 / scale), r.censored())),
        cut,
    )
    .unwrap();
    let limit = EcdfTable::new((0..N).map(|k| {
        let mut rng = StreamKey::new(SEED, Domain::Limit, k).rng();
        sample_rho_scaled(&mut rng, 1.0 / b).theta
    }))
    .unwrap();
    let ks = ks_two_sample(&walk, &limit, (0.0, cut), KS_TOL).unwrap();

    let mut rng = StreamKey::new(SEED, Domain::Auxiliary, 6).rng();
    let mut state = LatticeWalkState::new(5_000_001);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..COLUMNS {
        let width = state.a - state.b;
        let step = constant_retention_column(&mut rng, P, 1.0, state.a, state.b);
        assert!(!state.advance(&step));
        let inc = (state.a - state.b - width) as f64;
        sum += inc;
        sum_sq += inc * inc;
    }
    let mean = sum / COLUMNS as f64;
    let var = sum_sq / COLUMNS as f64 - mean * mean;
    let var_ok = ((var - b) / b).abs() <= VAR_TOL;
    report(
        6,
        ks.pass && var_ok,
        format!(
            "KS tau {:.4} (<= {KS_TOL}), censor {:.4}; Var increments {var:.4} vs beta = 82/9 = {b:.4} ({}); {:.1}s",
            ks.statistic,
            ks.censor_rate,
            if var_ok { "ok" } else { "off" },
            start.elapsed().as_secs_f64()
        ),
    );
}

// 7. Per-column distributional identities.
#[test]
fn criterion_7_distributional_identities() {
    let _guard = serial();
    const DRAWS: usize = 1_000_000;
    const Z_MAX: f64 = 3.0;
    const P_MIN: f64 = 0.001;
    const P: f64 = 0.5;
    const STRIP: (f64, f64) = (3.0, -2.0);

    // scaled width increment of the homogeneous semi-lattice walk, λ = 1
    let mut rng = StreamKey::new(SEED, Domain::Auxiliary, 71).rng();
    let mut state = WalkState::new(1e7);
    let increments: Vec<f64> = (0..DRAWS)
        .map(|_| {
            let width = state.a - state.b;
            let step = homogeneous_column(&mut rng, 1.0, 1.0, state.a, state.b);
            assert!(!state.advance(&step));
            state.a - state.b - width
        })
        .collect();
    let edges: Vec<f64> = (0..=32).map(|k| -4.0 + 0.25 * k as f64).collect();
    let band = histogram_band_check(&increments, &edges, increment_cdf, Z_MAX).unwrap();

    // (|ΔA| + 1)/2 on the diluted lattice
    let mut rng = StreamKey::new(SEED, Domain::Auxiliary, 72).rng();
    let mut lattice = LatticeWalkState::new(5_000_001);
    let halves: Vec<u64> = (0..DRAWS)
        .map(|_| {
            let a = lattice.a;
            let step = constant_retention_column(&mut rng, P, 1.0, lattice.a, lattice.b);
            assert!(!lattice.advance(&step));
            (lattice.a - a).unsigned_abs().div_ceil(2)
        })
        .collect();
    let q = 1.0 - (1.0 - P) * (1.0 - P);
    let geometric = chi_square_discrete(&halves, |k| q * (1.0 - q).powi(k as i32 - 1), 1).unwrap();

    // column counts in a fixed strip, fast path and point-by-point path
    let (a, b) = STRIP;
    let lambda = 1.0;
    let poisson = Poisson::new(lambda * (a - b)).unwrap();
    let pmf = |k: u64| poisson.pmf(k);
    let mut rng = StreamKey::new(SEED, Domain::Auxiliary, 73).rng();
    let fast: Vec<u64> = (0..DRAWS)
        .map(|_| homogeneous_column(&mut rng, lambda, 1.0, a, b).count)
        .collect();
    let field = constant(lambda, FieldRole::Intensity, 10.0);
    let mu = constant(1.0, FieldRole::Traffic, 10.0);
    let mut rng = StreamKey::new(SEED, Domain::Auxiliary, 74).rng();
    let general: Vec<u64> = (0..DRAWS)
        .map(|_| {
            general_column(&mut rng, &field, &mu, 0, a, b, false)
                .unwrap()
                .count
        })
        .collect();
    let fast_chi = chi_square_discrete(&fast, pmf, 0).unwrap();
    let general_chi = chi_square_discrete(&general, pmf, 0).unwrap();

    let pass = band.pass
        && geometric.p_value > P_MIN
        && fast_chi.p_value > P_MIN
        && general_chi.p_value > P_MIN;
    report(
        7,
        pass,
        format!(
            "increment density max z {:.2} over {} bins (<= {Z_MAX}); geometric p = {:.4}; Poisson counts p = {:.4} (fast), {:.4} (general)",
            band.max_z, band.bins, geometric.p_value, fast_chi.p_value, general_chi.p_value
        ),
    );
}

// 8. Closed-form inverse time changes and agreement of the two limit samplers.
#[test]
fn criterion_8_time_change_closed_forms() {
    let _guard = serial();
    const GRID_TOL: f64 = 1e-10;
    const N: u64 = 100_000;
    const KS_TOL: f64 = 0.015;
    const T_MAX: f64 = 50.0;

    let grid: Vec<f64> = (0..=200)
        .map(|k| 10f64.powf(-6.0 + 9.0 * k as f64 / 200.0))
        .collect();
    let near_pole = Window::new([1e-9, 50.0], [0.0, 1.0]).unwrap();
    let profile =
        |family, window| EnvironmentProfile::new(family, FieldRole::Intensity, window).unwrap();
    let lambda = 1.7;
    let families: [(&str, TimeChange, Box<dyn Fn(f64) -> f64>); 3] = [
        (
            "reciprocal-linear",
            TimeChange::new(
                &profile(ProfileFamily::ReciprocalLinear, near_pole),
                (0.0, 0.0),
            )
            .unwrap(),
            Box::new(|r: f64| (3.0 * r).cbrt()),
        ),
        (
            "exponential-decay",
            TimeChange::new(
                &profile(ProfileFamily::ExponentialDecay, near_pole),
                (0.0, 0.0),
            )
            .unwrap(),
            Box::new(|r: f64| 0.5 * (1.0 + 2.0 * r).ln()),
        ),
        (
            "constant",
            TimeChange::new(
                &profile(
                    ProfileFamily::Constant { value: lambda },
                    Window::EVERYWHERE,
                ),
                (0.0, 0.0),
            )
            .unwrap(),
            Box::new(move |r: f64| lambda * lambda * r),
        ),
    ];
    let mut worst = Vec::new();
    let mut grid_ok = true;
    for (name, tc, closed) in &families {
        let err = grid
            .iter()
            .map(|&r| (tc.inverse(r).unwrap() - closed(r)).abs() / closed(r).max(1.0))
            .fold(0.0, f64::max);
        grid_ok &= err <= GRID_TOL;
        worst.push(format!("{name} {err:.1e}"));
    }

    let window = Window::new([1.0, 1.0 + T_MAX + 1.0], [-0.5, 0.5]).unwrap();
    let spec = LimitSpec {
        model: Model::SemiLattice,
        field: profile(ProfileFamily::ReciprocalLinear, window),
        mu: EnvironmentProfile::constant(1.0, FieldRole::Traffic).unwrap(),
        anchor: (1.0, 0.0),
    };
    let control = StepControl::new(1e-4, T_MAX);
    let draw = |timechanged: bool, k: u64| {
        let mut rng = StreamKey::new(SEED ^ timechanged as u64, Domain::Limit, k).rng();
        if timechanged {
            sample_limit_pair_timechanged(&spec, &control, &mut rng).unwrap()
        } else {
            sample_limit_pair(&spec, &control, &mut rng).unwrap()
        }
    };
    let direct: Vec<LimitSample> = (0..N).into_par_iter().map(|k| draw(false, k)).collect();
    let changed: Vec<LimitSample> = (0..N).into_par_iter().map(|k| draw(true, k)).collect();
    let theta = |s: &[LimitSample]| {
        EcdfTable::from_pairs(s.iter().map(|x| (x.theta, x.censored)), T_MAX).unwrap()
    };
    let area = |s: &[LimitSample]| {
        EcdfTable::new(s.iter().filter(|x| !x.censored).map(|x| x.integral)).unwrap()
    };
    let ks_theta = ks_two_sample(&theta(&direct), &theta(&changed), (0.0, T_MAX), KS_TOL).unwrap();
    let hi = direct
        .iter()
        .chain(&changed)
        .map(|x| x.integral)
        .fold(0.0, f64::max);
    let ks_area = ks_two_sample(&area(&direct), &area(&changed), (0.0, hi), KS_TOL).unwrap();
    report(
        8,
        grid_ok && ks_theta.pass && ks_area.pass,
        format!(
            "max relative inverse error: {} (<= {GRID_TOL:.0e}); sampler KS theta {:.4}, integral {:.4} (<= {KS_TOL})",
            worst.join(", "),
            ks_theta.statistic,
            ks_area.statistic
        ),
    );
}

/// `(ℓ, P̂(τ ≥ ℓ)·ℓ^0.4, standard error)` from runs capped at ℓ columns.
fn tail_profile(model: Model, ells: &[u64], field: f64, n: u64) -> Vec<(u64, f64, f64)> {
    ells.iter()
        .map(|&ell| {
            let mut config = ExperimentConfig::homogeneous(model, ell, field, n, SEED);
            config.max_steps = Some(ell);
            let records = harness::simulate(&config, ell).unwrap();
            let p = records.iter().filter(|r| r.censored()).count() as f64 / n as f64;
            let w = (ell as f64).powf(0.4);
            (ell, p * w, w * (p * (1.0 - p) / n as f64).sqrt())
        })
        .collect()
}

// 9. ℓ^0.4 · P(τ_ℓ ≥ ℓ) must not grow over ℓ ∈ {16, …, 256}.
#[test]
fn criterion_9_tail_bound_property() {
    let _guard = serial();
    const N: u64 = 20_000;
    const SE_FACTOR: f64 = 3.0;
    let semi = tail_profile(Model::SemiLattice, &[16, 32, 64, 128, 256], 1.0, N);
    // ℓ/2 must be odd on the lattice
    let diluted = tail_profile(Model::DilutedLattice, &[18, 34, 66, 130, 258], 0.5, N);
    let bounded = |rows: &[(u64, f64, f64)]| {
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        last.1 <= first.1 + SE_FACTOR * (first.2.powi(2) + last.2.powi(2)).sqrt()
    };
    let show = |rows: &[(u64, f64, f64)]| {
        rows.iter()
            .map(|(l, v, se)| format!("{l}:{v:.3}±{se:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (semi_ok, diluted_ok) = (bounded(&semi), bounded(&diluted));
    report(
        9,
        semi_ok && diluted_ok,
        format!(
            "semi-lattice [{}] {}; diluted p=1/2 [{}] {}",
            show(&semi),
            if semi_ok { "bounded" } else { "grows" },
            show(&diluted),
            if diluted_ok { "bounded" } else { "grows" }
        ),
    );
}

fn sorted_csv(records: &[RunRecord]) -> Vec<u8> {
    let mut rows = records.to_vec();
    rows.sort_by_key(|r| r.seed_id);
    let mut buf = Vec::new();
    harness::write_records(&mut buf, &rows).unwrap();
    buf
}

fn limit_csv(samples: &[LimitSample]) -> Vec<u8> {
    let mut buf = Vec::new();
    harness::write_limit_samples(&mut buf, samples).unwrap();
    buf
}

// 10. Criterion 5's outputs with 8 threads and with 1 thread.
#[test]
fn criterion_10_determinism_across_threads() {
    let _guard = serial();
    let config = criterion_5_config();
    let eight = criterion_5_run();
    let start = Instant::now();
    let (records, limit) = harness::with_threads(Some(1), || {
        (
            harness::simulate(&config, 100).unwrap(),
            harness::limit_samples(&config).unwrap(),
        )
    })
    .unwrap();
    let runs_equal = sorted_csv(&records) == sorted_csv(&eight.records);
    let limit_equal = limit_csv(&limit) == limit_csv(&eight.limit);
    report(
        10,
        runs_equal && limit_equal,
        format!(
            "run CSV {} and limit CSV {} between 8 and 1 threads ({} rows); {:.1}s",
            if runs_equal { "identical" } else { "differ" },
            if limit_equal { "identical" } else { "differ" },
            records.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}
