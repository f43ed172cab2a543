//! Brute-force navigation forest on a finite window.
//!
//! Every node in column `i ≥ 1` links to its nearest node in column `i − 1`.
//! Nodes whose path reaches the slit `{0} × [−ℓ/2, ℓ/2]` are marked; τ is the
//! first column without marked nodes and T the traffic of all marked nodes.
//! The same stored columns can drive the bounding walks, so both computations
//! must agree exactly on every realization.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{Direction, ScaledField};
use crate::error::{Error, Result};
use crate::lattice::{half_width, run_lattice_with_source, LatticeColumnStep, LatticeSource};
use crate::limit::Model;
use crate::rng::StreamKey;
use crate::semilattice::{run_with_source, ColumnSource, ColumnStep, RunRecord};

/// Occupancy and tie bits of the eligible sites `lo, lo + 2, …` of one column.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeColumn {
    pub lo: i64,
    pub occupied: Vec<bool>,
    pub tie: Vec<bool>,
}

impl LatticeColumn {
    pub fn hi(&self) -> i64 {
        self.lo + 2 * (self.occupied.len() as i64 - 1)
    }

    fn index(&self, y: i64) -> Option<usize> {
        let off = y - self.lo;
        (off >= 0 && off % 2 == 0 && (off / 2) < self.occupied.len() as i64)
            .then_some((off / 2) as usize)
    }

    pub fn is_occupied(&self, y: i64) -> Option<bool> {
        self.index(y).map(|k| self.occupied[k])
    }

    pub fn tie_at(&self, y: i64) -> Option<bool> {
        self.index(y).map(|k| self.tie[k])
    }

    pub fn occupied_heights(&self) -> Vec<i64> {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(k, _)| self.lo + 2 * k as i64)
            .collect()
    }
}

/// Pre-generated columns `0..=horizon` on the window `[−height, height]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Realization {
    Semi {
        height: f64,
        columns: Vec<Vec<f64>>,
    },
    Lattice {
        height: i64,
        columns: Vec<LatticeColumn>,
    },
}

impl Realization {
    pub fn horizon(&self) -> u64 {
        let n = match self {
            Realization::Semi { columns, .. } => columns.len(),
            Realization::Lattice { columns, .. } => columns.len(),
        };
        n.saturating_sub(1) as u64
    }
}

/// Poisson columns of intensity `λ_ℓ` on `[−height, height]`; column `i` is a
/// pure function of `(key, i)`.
pub fn semi_realization(
    lambda: &ScaledField,
    horizon: u64,
    height: f64,
    key: &StreamKey,
) -> Result<Realization> {
    let columns = (0..=horizon)
        .map(|i| {
            let mut rng = key.column_rng(i);
            let mass = lambda.vertical_mass(i, -height, height)?;
            let count = if mass > 0.0 {
                Poisson::new(mass)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(&mut rng) as u64
            } else {
                0
            };
            let mut points = (0..count)
                .map(|_| {
                    let u: f64 = rng.random();
                    Ok(
                        (-height + lambda.gap_for_mass(i, -height, u * mass, Direction::Up)?)
                            .clamp(-height, height),
                    )
                })
                .collect::<Result<Vec<f64>>>()?;
            points.sort_by(f64::total_cmp);
            Ok(points)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Realization::Semi { height, columns })
}

/// Lattice columns on `[−height, height]`; `p = None` is the fully occupied
/// lattice.
pub fn lattice_realization(
    p: Option<&ScaledField>,
    horizon: u64,
    height: i64,
    key: &StreamKey,
) -> Result<Realization> {
    let columns = (0..=horizon)
        .map(|i| {
            let mut rng = key.column_rng(i);
            let lo = if (i as i64 - height).rem_euclid(2) == 0 {
                -height
            } else {
                -height + 1
            };
            let sites = ((height - lo) / 2 + 1) as usize;
            let mut occupied = Vec::with_capacity(sites);
            let mut tie = Vec::with_capacity(sites);
            for k in 0..sites {
                let y = lo + 2 * k as i64;
                let keep = match p {
                    Some(p) => rng.random::<f64>() < p.eval(i, y as f64)?,
                    None => true,
                };
                occupied.push(keep);
                tie.push(rng.random());
            }
            Ok(LatticeColumn { lo, occupied, tie })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Realization::Lattice { height, columns })
}

/// Window half-height `ℓ/2 + (12√horizon + 40)/density`, where `density` is
/// λ_min (semi-lattice) or p_min (lattices).
pub fn default_height(ell: f64, horizon: u64, min_density: f64) -> f64 {
    ell / 2.0 + (12.0 * (horizon as f64).sqrt() + 40.0) / min_density
}

fn window_exceeded(column: u64, what: &'static str) -> Error {
    Error::WindowExceeded { column, what }
}

/// Drives the semi-lattice recursion from stored columns.
pub struct SemiRealizationSource<'a> {
    columns: &'a [Vec<f64>],
    mu: &'a ScaledField,
}

impl<'a> SemiRealizationSource<'a> {
    pub fn new(realization: &'a Realization, mu: &'a ScaledField) -> Result<Self> {
        match realization {
            Realization::Semi { columns, .. } => Ok(Self { columns, mu }),
            _ => Err(Error::InvalidParameter(
                "expected a semi-lattice realization".into(),
            )),
        }
    }
}

impl ColumnSource for SemiRealizationSource<'_> {
    fn next_column(&mut self, i: u64, a: f64, b: f64) -> Result<ColumnStep> {
        let pts = self
            .columns
            .get(i as usize)
            .ok_or_else(|| window_exceeded(i, "horizon exhausted"))?;
        let above = pts.partition_point(|&y| y <= a);
        let lower_idx = pts.partition_point(|&y| y < b);
        let upper = *pts
            .get(above)
            .ok_or_else(|| window_exceeded(i, "no point above the upper walk"))?;
        let lower = *lower_idx
            .checked_sub(1)
            .and_then(|k| pts.get(k))
            .ok_or_else(|| window_exceeded(i, "no point below the lower walk"))?;
        let interior = &pts[lower_idx..above];
        let (top, bottom) = match (interior.first(), interior.last()) {
            (Some(&lo), Some(&hi)) => (hi, lo),
            _ => (lower, upper),
        };
        let traffic_increment = interior
            .iter()
            .map(|&y| self.mu.eval(i, y))
            .sum::<Result<f64>>()?;
        Ok(ColumnStep {
            gap_above: upper - a,
            gap_below: b - lower,
            count: interior.len() as u64,
            top,
            bottom,
            traffic_increment,
            interior_points: interior.to_vec(),
        })
    }
}

/// Drives the lattice recursion from stored columns, reading ξ from the
/// realization.
pub struct LatticeRealizationSource<'a> {
    columns: &'a [LatticeColumn],
    mu: &'a ScaledField,
}

impl<'a> LatticeRealizationSource<'a> {
    pub fn new(realization: &'a Realization, mu: &'a ScaledField) -> Result<Self> {
        match realization {
            Realization::Lattice { columns, .. } => Ok(Self { columns, mu }),
            _ => Err(Error::InvalidParameter(
                "expected a lattice realization".into(),
            )),
        }
    }
}

impl LatticeSource for LatticeRealizationSource<'_> {
    fn next_column(&mut self, i: u64, a: i64, b: i64) -> Result<LatticeColumnStep> {
        let col = self
            .columns
            .get(i as usize)
            .ok_or_else(|| window_exceeded(i, "horizon exhausted"))?;
        let next = self
            .columns
            .get(i as usize + 1)
            .ok_or_else(|| window_exceeded(i + 1, "horizon exhausted"))?;
        let sites = col.occupied_heights();
        let above = sites.partition_point(|&y| y < a);
        let lower_idx = sites.partition_point(|&y| y < b);
        let upper = *sites
            .get(above)
            .ok_or_else(|| window_exceeded(i, "no site above the upper walk"))?;
        let lower = *lower_idx
            .checked_sub(1)
            .and_then(|k| sites.get(k))
            .ok_or_else(|| window_exceeded(i, "no site below the lower walk"))?;
        let interior = &sites[lower_idx..above];
        let (top, bottom) = match (interior.first(), interior.last()) {
            (Some(&lo), Some(&hi)) => (hi, lo),
            _ => (lower, upper),
        };
        let (gx_up, gx_down, gy_up, gy_down) =
            LatticeColumnStep::from_extremes(a, b, upper, top, bottom, lower);
        let tie_bit = |mid: i64, diff: i64| -> Result<bool> {
            if diff % 2 != 0 {
                return Ok(false);
            }
            next.tie_at(mid)
                .ok_or_else(|| window_exceeded(i + 1, "tie site outside the window"))
        };
        let d = gx_up as i64 - gx_down as i64;
        let e = gy_up as i64 - gy_down as i64;
        let tie_bits = [tie_bit(a + d, d)?, tie_bit(b + e, e)?];
        let traffic_increment = interior
            .iter()
            .map(|&y| self.mu.eval(i, y as f64))
            .sum::<Result<f64>>()?;
        Ok(LatticeColumnStep {
            gap_x_up: gx_up,
            gap_x_down: gx_down,
            gap_y_up: gy_up,
            gap_y_down: gy_down,
            count: interior.len() as u64,
            traffic_increment,
            tie_bits,
            occupied_interior: interior.to_vec(),
        })
    }
}

/// Nodes per column and, for columns `≥ 1`, the index of each node's
/// successor in the previous column.
#[derive(Clone, Debug, PartialEq)]
pub struct NavigationForest {
    pub columns: Vec<Vec<f64>>,
    pub successor: Vec<Vec<usize>>,
}

pub fn build_forest(realization: &Realization) -> Result<NavigationForest> {
    match realization {
        Realization::Semi { columns, .. } => {
            let mut successor = vec![Vec::new()];
            for i in 1..columns.len() {
                let prev = &columns[i - 1];
                if prev.is_empty() && !columns[i].is_empty() {
                    return Err(window_exceeded(
                        i as u64 - 1,
                        "empty column inside the window",
                    ));
                }
                let links = columns[i]
                    .iter()
                    .map(|&y| {
                        let k = prev.partition_point(|&v| v < y);
                        match (k.checked_sub(1), prev.get(k)) {
                            (None, Some(_)) => Ok(k),
                            (Some(j), None) => Ok(j),
                            (Some(j), Some(&up)) => {
                                let (dl, du) = (y - prev[j], up - y);
                                if dl == du {
                                    Err(Error::SemiLatticeTie {
                                        column: i as u64,
                                        lower: prev[j],
                                        upper: up,
                                    })
                                } else if du < dl {
                                    Ok(k)
                                } else {
                                    Ok(j)
                                }
                            }
                            (None, None) => unreachable!(),
                        }
                    })
                    .collect::<Result<Vec<usize>>>()?;
                successor.push(links);
            }
            Ok(NavigationForest {
                columns: columns.clone(),
                successor,
            })
        }
        Realization::Lattice { columns, .. } => {
            let heights: Vec<Vec<i64>> = columns
                .iter()
                .map(LatticeColumn::occupied_heights)
                .collect();
            let mut successor = vec![Vec::new()];
            for i in 1..columns.len() {
                let prev = &heights[i - 1];
                if prev.is_empty() && !heights[i].is_empty() {
                    return Err(window_exceeded(
                        i as u64 - 1,
                        "empty column inside the window",
                    ));
                }
                let links = heights[i]
                    .iter()
                    .map(|&y| {
                        let k = prev.partition_point(|&v| v < y);
                        match (k.checked_sub(1), prev.get(k)) {
                            (None, Some(_)) => k,
                            (Some(j), None) => j,
                            (Some(j), Some(&up)) => {
                                let (dl, du) = (y - prev[j], up - y);
                                if dl == du {
                                    // ξ = 1 links to the upper neighbour
                                    if columns[i].tie_at(y).unwrap_or(false) {
                                        k
                                    } else {
                                        j
                                    }
                                } else if du < dl {
                                    k
                                } else {
                                    j
                                }
                            }
                            (None, None) => unreachable!(),
                        }
                    })
                    .collect();
                successor.push(links);
            }
            Ok(NavigationForest {
                columns: heights
                    .iter()
                    .map(|c| c.iter().map(|&y| y as f64).collect())
                    .collect(),
                successor,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlitOutcome {
    /// First column without marked nodes; `None` if every column up to the
    /// horizon has one.
    pub tau: Option<u64>,
    /// Number of nodes on the longest marked path.
    pub longest_path: u64,
    pub t: f64,
    /// Every column before τ has an unmarked node above and below its
    /// marked band inside the window.
    pub guard_ok: bool,
    #[serde(skip)]
    pub marked: Vec<Vec<bool>>,
    /// Traffic of the marked nodes of each column before τ.
    #[serde(skip)]
    pub column_traffic: Vec<f64>,
}

impl SlitOutcome {
    /// τ and T as seen by a walk limited to `columns` columns.
    pub fn truncated(&self, columns: u64) -> (Option<u64>, f64) {
        match self.tau {
            Some(tau) if tau < columns => (Some(tau), self.t),
            _ => (
                None,
                self.column_traffic
                    .iter()
                    .take(columns as usize)
                    .fold(0.0, |acc, &c| acc + c),
            ),
        }
    }
}

/// Marks the nodes draining into `{0} × [−ℓ/2, ℓ/2]` and sums their traffic.
pub fn slit_traffic(forest: &NavigationForest, ell: f64, mu: &ScaledField) -> Result<SlitOutcome> {
    let half = ell / 2.0;
    let mut marked: Vec<Vec<bool>> = Vec::with_capacity(forest.columns.len());
    let mut depth: Vec<Vec<u64>> = Vec::with_capacity(forest.columns.len());
    let (mut tau, mut longest, mut t, mut guard_ok) = (None, 0, 0.0, true);
    let mut per_column = Vec::new();
    for (i, col) in forest.columns.iter().enumerate() {
        let (m, dep): (Vec<bool>, Vec<u64>) = if i == 0 {
            col.iter()
                .map(|&y| ((-half..=half).contains(&y), 1))
                .unzip()
        } else {
            forest.successor[i]
                .iter()
                .map(|&s| (marked[i - 1][s], depth[i - 1][s] + 1))
                .unzip()
        };
        let first = m.iter().position(|&x| x);
        let last = m.iter().rposition(|&x| x);
        match (first, last) {
            (Some(lo), Some(hi)) => {
                if lo == 0 || hi + 1 == m.len() {
                    guard_ok = false;
                }
                let mut column_traffic = 0.0;
                for k in lo..=hi {
                    debug_assert!(m[k], "marked nodes form a contiguous band");
                    column_traffic += mu.eval(i as u64, col[k])?;
                    longest = longest.max(dep[k]);
                }
                t += column_traffic;
                per_column.push(column_traffic);
            }
            _ => {
                tau = Some(i as u64);
                marked.push(m);
                break;
            }
        }
        marked.push(m);
        depth.push(dep);
    }
    Ok(SlitOutcome {
        tau,
        longest_path: longest,
        t,
        guard_ok,
        marked,
        column_traffic: per_column,
    })
}

/// Bounding walk driven by the stored realization.
pub fn walk_on_realization(
    model: Model,
    ell: f64,
    realization: &Realization,
    mu: &ScaledField,
    max_steps: u64,
    seed_id: u64,
) -> Result<RunRecord> {
    match model {
        Model::SemiLattice => {
            let mut source = SemiRealizationSource::new(realization, mu)?;
            run_with_source(ell, &mut source, max_steps, false, seed_id)
        }
        Model::PureLattice | Model::DilutedLattice => {
            let mut source = LatticeRealizationSource::new(realization, mu)?;
            run_lattice_with_source(ell as u64, &mut source, max_steps, false, seed_id)
        }
    }
}

/// One shared-realization experiment.
#[derive(Clone, Debug)]
pub struct CouplingCase {
    pub model: Model,
    pub ell: f64,
    /// λ for the semi-lattice, p for the diluted lattice, unused for the pure lattice.
    pub field: ScaledField,
    pub mu: ScaledField,
    pub horizon: u64,
    pub height: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CouplingStatus {
    Match,
    Mismatch { reason: String },
    Discarded { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub seed_id: u64,
    pub status: CouplingStatus,
    pub walk_tau: Option<u64>,
    pub walk_t: Option<f64>,
    pub oracle_tau: Option<u64>,
    pub oracle_t: Option<f64>,
    pub longest_path: Option<u64>,
}

/// Relative tolerance on T between the two computations.
pub const TRAFFIC_TOLERANCE: f64 = 1e-12;

pub fn realization_for(case: &CouplingCase, replica: u64) -> Result<Realization> {
    let key = StreamKey::new(case.seed, crate::rng::Domain::Realization, replica);
    match case.model {
        Model::SemiLattice => semi_realization(&case.field, case.horizon, case.height, &key),
        Model::DilutedLattice => {
            half_width(case.ell as u64)?;
            lattice_realization(
                Some(&case.field),
                case.horizon + 1,
                case.height.ceil() as i64,
                &key,
            )
        }
        Model::PureLattice => {
            half_width(case.ell as u64)?;
            lattice_realization(None, case.horizon + 1, case.height.ceil() as i64, &key)
        }
    }
}

pub fn check_replica(case: &CouplingCase, replica: u64) -> Result<CouplingOutcome> {
    let realization = realization_for(case, replica)?;
    let mut outcome = CouplingOutcome {
        seed_id: replica,
        status: CouplingStatus::Match,
        walk_tau: None,
        walk_t: None,
        oracle_tau: None,
        oracle_t: None,
        longest_path: None,
    };
    let walk = match walk_on_realization(
        case.model,
        case.ell,
        &realization,
        &case.mu,
        case.horizon,
        replica,
    ) {
        Ok(w) => w,
        Err(Error::WindowExceeded { column, what }) => {
            outcome.status = CouplingStatus::Discarded {
                reason: format!("walk left the window at column {column}: {what}"),
            };
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    let forest = build_forest(&realization)?;
    let slit = slit_traffic(&forest, case.ell, &case.mu)?;
    // the walk sees columns 0..horizon only
    let (oracle_tau, oracle_t) = slit.truncated(case.horizon);
    outcome.walk_tau = walk.tau;
    outcome.walk_t = Some(walk.t);
    outcome.oracle_tau = oracle_tau;
    outcome.oracle_t = Some(oracle_t);
    outcome.longest_path = Some(slit.longest_path);
    if !slit.guard_ok {
        outcome.status = CouplingStatus::Discarded {
            reason: "marked band touches the window edge".into(),
        };
        return Ok(outcome);
    }
    let tol = TRAFFIC_TOLERANCE * walk.t.abs().max(1.0);
    let path_ok = match slit.tau {
        Some(tau) => tau == slit.longest_path,
        None => slit.longest_path == forest.columns.len() as u64,
    };
    outcome.status = if walk.tau != oracle_tau {
        CouplingStatus::Mismatch {
            reason: format!("tau {:?} vs {:?}", walk.tau, oracle_tau),
        }
    } else if (walk.t - oracle_t).abs() > tol {
        CouplingStatus::Mismatch {
            reason: format!("T {} vs {}", walk.t, oracle_t),
        }
    } else if !path_ok {
        CouplingStatus::Mismatch {
            reason: format!(
                "strip tau {:?} vs longest marked path {}",
                slit.tau, slit.longest_path
            ),
        }
    } else {
        CouplingStatus::Match
    };
    Ok(outcome)
}

/// Forest as CSV rows `column,height,successor_height,marked`.
pub fn write_forest_csv(
    mut out: impl Write,
    forest: &NavigationForest,
    outcome: &SlitOutcome,
) -> Result<()> {
    writeln!(out, "{}", crate::harness::SCHEMA_LINE)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["column", "height", "successor_height", "marked"])?;
    for (i, col) in forest.columns.iter().enumerate() {
        for (k, &y) in col.iter().enumerate() {
            let succ = if i == 0 {
                String::new()
            } else {
                forest.columns[i - 1][forest.successor[i][k]].to_string()
            };
            let marked = outcome.marked.get(i).is_some_and(|m| m[k]);
            w.write_record([
                i.to_string(),
                y.to_string(),
                succ,
                (marked as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Static SVG of the forest with the draining region shaded.
pub fn forest_svg(forest: &NavigationForest, outcome: &SlitOutcome, ell: f64) -> String {
    let columns = forest.columns.len().max(1) as f64;
    let ymax = forest
        .columns
        .iter()
        .flatten()
        .fold(ell / 2.0 + 1.0, |m, &y| m.max(y.abs()));
    let (width, height) = (900.0, 600.0);
    let px = |i: f64| 20.0 + (width - 40.0) * i / columns;
    let py = |y: f64| height / 2.0 - (height / 2.0 - 20.0) * y / ymax;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // shaded band between the extreme marked nodes of each column
    for (i, col) in forest.columns.iter().enumerate() {
        let Some(m) = outcome.marked.get(i) else {
            break;
        };
        let band: Vec<f64> = col
            .iter()
            .zip(m)
            .filter(|(_, &k)| k)
            .map(|(&y, _)| y)
            .collect();
        if let (Some(lo), Some(hi)) = (band.first(), band.last()) {
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#f5deb3"/>"##,
                px(i as f64 - 0.5),
                py(hi + 0.5),
                px(1.0) - px(0.0),
                py(lo - 0.5) - py(hi + 0.5)
            );
        }
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#b22222" stroke-width="3"/>"##,
        px(0.0),
        py(ell / 2.0),
        py(-ell / 2.0)
    );
    for i in 1..forest.columns.len() {
        for (k, &y) in forest.columns[i].iter().enumerate() {
            let s = forest.columns[i - 1][forest.successor[i][k]];
            let marked = outcome.marked.get(i).is_some_and(|m| m[k]);
            let colour = if marked { "#8b4513" } else { "#999999" };
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="1"/>"#,
                px(i as f64),
                py(y),
                px(i as f64 - 1.0),
                py(s)
            );
        }
    }
    for (i, col) in forest.columns.iter().enumerate() {
        for &y in col {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="black"/>"#,
                px(i as f64),
                py(y)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentProfile, FieldRole};
    use crate::rng::Domain;

    fn constant(v: f64, role: FieldRole) -> ScaledField {
        ScaledField::new(
            EnvironmentProfile::constant(v, role).unwrap(),
            4.0,
            (0.0, 0.0),
        )
        .unwrap()
    }

    fn unit_mu() -> ScaledField {
        constant(1.0, FieldRole::Traffic)
    }

    #[test]
    fn aligned_single_points_give_horizontal_edges() {
        let r = Realization::Semi {
            height: 5.0,
            columns: vec![vec![0.3]; 6],
        };
        let forest = build_forest(&r).unwrap();
        assert!(forest.successor[1..].iter().all(|s| s == &vec![0]));
        let out = slit_traffic(&forest, 2.0, &unit_mu()).unwrap();
        assert_eq!(out.tau, None);
        assert_eq!(out.longest_path, 6);
        assert!(!out.guard_ok);
    }

    #[test]
    fn exact_tie_is_an_error() {
        let r = Realization::Semi {
            height: 5.0,
            columns: vec![vec![-1.0, 1.0], vec![0.0]],
        };
        assert!(matches!(
            build_forest(&r),
            Err(Error::SemiLatticeTie { column: 1, .. })
        ));
    }

    #[test]
    fn hand_drawn_pure_lattice_forest() {
        // column 0 sites -2, 0, 2; column 1 sites -1, 1; column 2 sites -2, 0, 2
        let full = |lo: i64, ties: Vec<bool>| LatticeColumn {
            lo,
            occupied: vec![true; ties.len()],
            tie: ties,
        };
        let r = Realization::Lattice {
            height: 2,
            columns: vec![
                full(-2, vec![false, false, false]),
                full(-1, vec![false, true]),
                full(-2, vec![false, true, false]),
            ],
        };
        let f = build_forest(&r).unwrap();
        // (1,-1): tie between -2 and 0, xi = 0 picks -2; (1,1): xi = 1 picks 2
        assert_eq!(f.successor[1], vec![0, 2]);
        // (2,-2) -> -1; (2,0): tie, xi = 1 picks 1; (2,2) -> 1
        assert_eq!(f.successor[2], vec![0, 1, 1]);
        let out = slit_traffic(&f, 2.0, &unit_mu()).unwrap();
        // slit [-1, 1] marks only (0,0); nothing in column 1 drains into it
        assert_eq!(out.marked[0], vec![false, true, false]);
        assert_eq!(out.tau, Some(1));
        assert_eq!(out.t, 1.0);
        assert_eq!(out.longest_path, 1);
    }

    #[test]
    fn vacant_slit_band_routes_around() {
        // column 1 vacant inside the band, occupied at +-5 only
        let mut col1 = LatticeColumn {
            lo: -5,
            occupied: vec![false; 6],
            tie: vec![false; 6],
        };
        col1.occupied[0] = true;
        col1.occupied[5] = true;
        let col0 = LatticeColumn {
            lo: -6,
            occupied: vec![true; 7],
            tie: vec![false; 7],
        };
        let col2 = LatticeColumn {
            lo: -6,
            occupied: vec![true; 7],
            tie: vec![false; 7],
        };
        let r = Realization::Lattice {
            height: 6,
            columns: vec![col0, col1, col2.clone(), col2],
        };
        let f = build_forest(&r).unwrap();
        let out = slit_traffic(&f, 2.0, &unit_mu()).unwrap();
        assert_eq!(out.tau, Some(1));
        let sites = [-5.0, 5.0];
        for &s in &f.successor[2] {
            assert!(sites.contains(&f.columns[1][s]));
        }
        let walk = walk_on_realization(Model::DilutedLattice, 2.0, &r, &unit_mu(), 3, 0).unwrap();
        assert_eq!(walk.tau, Some(1));
        assert_eq!(walk.t, out.t);
    }

    fn case(
        model: Model,
        ell: f64,
        field: ScaledField,
        horizon: u64,
        density: f64,
    ) -> CouplingCase {
        CouplingCase {
            model,
            ell,
            field,
            mu: unit_mu(),
            horizon,
            height: default_height(ell, horizon, density),
            seed: 77,
        }
    }

    #[test]
    fn coupling_holds_on_a_few_realizations() {
        let cases = [
            case(
                Model::SemiLattice,
                4.0,
                constant(1.0, FieldRole::Intensity),
                200,
                1.0,
            ),
            case(
                Model::DilutedLattice,
                2.0,
                constant(0.7, FieldRole::Retention),
                200,
                0.7,
            ),
            case(
                Model::PureLattice,
                2.0,
                constant(1.0, FieldRole::Retention),
                200,
                1.0,
            ),
        ];
        for c in &cases {
            let mut matched = 0;
            for replica in 0..40 {
                let out = check_replica(c, replica).unwrap();
                match &out.status {
                    CouplingStatus::Match => matched += 1,
                    CouplingStatus::Mismatch { reason } => {
                        panic!("{:?} replica {replica}: {reason}", c.model)
                    }
                    CouplingStatus::Discarded { .. } => {}
                }
            }
            assert!(matched >= 38, "{:?}: {matched}", c.model);
        }
    }

    #[test]
    fn contributing_region_lies_between_the_walks() {
        let lambda = constant(1.0, FieldRole::Intensity);
        let c = case(Model::SemiLattice, 6.0, lambda, 150, 1.0);
        let mu = unit_mu();
        for replica in 0..20 {
            let r = realization_for(&c, replica).unwrap();
            let forest = build_forest(&r).unwrap();
            let out = slit_traffic(&forest, c.ell, &mu).unwrap();
            let mut source = SemiRealizationSource::new(&r, &mu).unwrap();
            let Ok(rec) = run_with_source(c.ell, &mut source, c.horizon, true, replica) else {
                continue;
            };
            for &(i, a, b) in rec.trajectory.as_ref().unwrap() {
                let Some(m) = out.marked.get(i as usize) else {
                    continue;
                };
                for (k, &y) in forest.columns[i as usize].iter().enumerate() {
                    if m[k] {
                        assert!(b <= y && y <= a, "column {i}: {y} outside [{b}, {a}]");
                    }
                }
            }
        }
    }

    #[test]
    fn wider_slits_never_merge_earlier() {
        let lambda = constant(1.0, FieldRole::Intensity);
        let c = case(Model::SemiLattice, 12.0, lambda, 300, 1.0);
        let mu = unit_mu();
        let mut checked = 0;
        for replica in 0..60 {
            let r = realization_for(&c, replica).unwrap();
            let tau_prime = |ell: f64| {
                let mut source = SemiRealizationSource::new(&r, &mu).unwrap();
                run_with_source(ell, &mut source, c.horizon, false, replica)
                    .map(|rec| rec.tau_prime)
            };
            let mut prev: Option<Option<u64>> = None;
            for ell in [2.0, 4.0, 8.0, 12.0] {
                let Ok(tp) = tau_prime(ell) else { break };
                if let Some(p) = prev {
                    // None (censored) is larger than any column
                    assert!(
                        tp.is_none() || p.is_some_and(|p| p <= tp.unwrap()),
                        "{p:?} then {tp:?}"
                    );
                }
                prev = Some(tp);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn realizations_are_reproducible() {
        let lambda = constant(1.0, FieldRole::Intensity);
        let key = StreamKey::new(1, Domain::Realization, 3);
        let a = semi_realization(&lambda, 20, 30.0, &key).unwrap();
        let b = semi_realization(&lambda, 20, 30.0, &key).unwrap();
        assert_eq!(a, b);
        let longer = semi_realization(&lambda, 25, 30.0, &key).unwrap();
        if let (Realization::Semi { columns: x, .. }, Realization::Semi { columns: y, .. }) =
            (&a, &longer)
        {
            assert_eq!(x[..], y[..21]);
        }
    }

    #[test]
    fn svg_and_csv_dumps() {
        let c = case(
            Model::PureLattice,
            2.0,
            constant(1.0, FieldRole::Retention),
            10,
            1.0,
        );
        let r = realization_for(&c, 0).unwrap();
        let f = build_forest(&r).unwrap();
        let out = slit_traffic(&f, 2.0, &unit_mu()).unwrap();
        let svg = forest_svg(&f, &out, 2.0);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let mut buf = Vec::new();
        write_forest_csv(&mut buf, &f, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# driftnet-schema v1\ncolumn,height,successor_height,marked"));
    }
}
