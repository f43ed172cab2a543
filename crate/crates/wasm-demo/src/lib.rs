//! Browser bindings: exact law of τ against its limit, one bounding-walk
//! trajectory, and a Monte Carlo histogram of τ/ℓ².

use driftnet::env::{EnvironmentProfile, FieldRole, ScaledField};
use driftnet::lattice::{exact_tau_pmf, run_diluted, run_pure};
use driftnet::limit::{beta, rho_cdf};
use driftnet::rng::{Domain, StreamKey};
use driftnet::semilattice::{run_semilattice, RunOptions, RunRecord};
use wasm_bindgen::prelude::*;

fn js_err(e: driftnet::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn field(value: f64, role: FieldRole, ell: f64) -> Result<ScaledField, JsValue> {
    let profile = EnvironmentProfile::constant(value, role).map_err(js_err)?;
    ScaledField::new(profile, ell, (0.0, 0.0)).map_err(js_err)
}

/// Interleaved `[t, exact CDF, limit CDF, …]` of τ/ℓ² on the pure lattice
/// for `n = 1..=n_max`.
#[wasm_bindgen]
pub fn exact_cdf_curve(ell: u32, n_max: u32) -> Result<Vec<f64>, JsValue> {
    let ell = u64::from(ell);
    let scale = (ell * ell) as f64;
    let mut cdf = 0.0;
    let mut out = Vec::with_capacity(3 * n_max as usize);
    for n in 1..=u64::from(n_max) {
        cdf += exact_tau_pmf(ell, n).map_err(js_err)?;
        let t = n as f64 / scale;
        out.extend([t, cdf, rho_cdf(2.0 * t)]);
    }
    Ok(out)
}

/// Builds one replica; `model` is `"pure"`, `"diluted"` or `"semi"`, and
/// `density` is p or λ.
fn replica(
    model: &str,
    ell: u32,
    density: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunRecord, JsValue> {
    let ell_f = f64::from(ell);
    let mu = field(1.0, FieldRole::Traffic, ell_f)?;
    let rng = StreamKey::new(seed, Domain::Walk, 0).rng();
    match model {
        "pure" => run_pure(u64::from(ell), &mu, options, rng, seed),
        "diluted" => run_diluted(
            u64::from(ell),
            &field(density, FieldRole::Retention, ell_f)?,
            &mu,
            options,
            rng,
            seed,
        ),
        "semi" => run_semilattice(
            ell_f,
            &field(density, FieldRole::Intensity, ell_f)?,
            &mu,
            options,
            rng,
            seed,
        ),
        other => return Err(JsValue::from_str(&format!("unknown model {other:?}"))),
    }
    .map_err(js_err)
}

/// Interleaved `[i, A_i, B_i, …]` of one run, at most `max_steps` columns.
#[wasm_bindgen]
pub fn walk_trajectory(
    model: &str,
    ell: u32,
    density: f64,
    seed: u64,
    max_steps: u32,
) -> Result<Vec<f64>, JsValue> {
    let options = RunOptions {
        record_trajectory: true,
        ..RunOptions::new(u64::from(max_steps))
    };
    let rec = replica(model, ell, density, seed, &options)?;
    Ok(rec
        .trajectory
        .unwrap_or_default()
        .into_iter()
        .flat_map(|(i, a, b)| [i as f64, a, b])
        .collect())
}

/// Histogram of τ/ℓ² over `runs` replicas on `bins` cells of `[0, t_max]`,
/// followed by the limit probability of each cell. The limit of τ/ℓ² is
/// ϱ/β for the lattices and λ²ϱ for the semi-lattice.
#[wasm_bindgen]
pub fn tau_histogram(
    model: &str,
    ell: u32,
    density: f64,
    runs: u32,
    bins: u32,
    t_max: f64,
) -> Result<Vec<f64>, JsValue> {
    let scale = f64::from(ell) * f64::from(ell);
    let options = RunOptions::new((t_max * scale).ceil() as u64);
    let width = t_max / f64::from(bins);
    let mut hist = vec![0.0; bins as usize];
    for k in 0..u64::from(runs) {
        if let Some(tau) = replica(model, ell, density, k, &options)?.tau {
            let cell = ((tau as f64 / scale) / width) as usize;
            if cell < hist.len() {
                hist[cell] += 1.0 / f64::from(runs);
            }
        }
    }
    let factor = match model {
        "pure" => 2.0,
        "diluted" => beta(density).map_err(js_err)?,
        _ => 1.0 / (density * density),
    };
    let limit = (0..bins).map(|c| {
        let (lo, hi) = (f64::from(c) * width, f64::from(c + 1) * width);
        rho_cdf(factor * hi) - rho_cdf(factor * lo)
    });
    hist.extend(limit);
    Ok(hist)
}
