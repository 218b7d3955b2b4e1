//! Joint search for the transmission probability and encoding rate that
//! maximize the sum rate.
//!
//! The objective has no usable derivative structure (the simulated surface
//! is noisy and the closed form mixes exponentials with a stationary
//! solve), so the search is an exhaustive grid scan followed by optional
//! refinement passes on a shrinking window around the incumbent. Ties are
//! broken toward the smaller rate and then the smaller probability, which
//! keeps results reproducible on the flat zero-rate plateau.

use crate::channel::{Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::markov::analytical_sum_rate;
use crate::sim::run_monte_carlo;

/// CSV header of the operating-point lookup table.
pub const LOOKUP_TABLE_HEADER: &str = "K,B_dB,p_star,R_star,Rs_star,method,stderr";

/// Rectangular search grid plus refinement policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub p_step: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_step: f64,
    /// Extra passes on a window around the incumbent.
    pub refinement_rounds: usize,
    /// Step multiplier per refinement pass, in (0, 1).
    pub refinement_shrink: f64,
}

impl GridSpec {
    /// Default grid for the closed-form objective: fine steps, rate from 1.
    pub fn analytical_default(b_mean: f64) -> Self {
        GridSpec {
            p_min: 0.01,
            p_max: 1.0,
            p_step: 0.01,
            r_min: 1.0,
            r_max: rate_ceiling(b_mean),
            r_step: 0.05,
            refinement_rounds: 2,
            refinement_shrink: 0.1,
        }
    }

    /// Default grid for the simulated objective: coarser, since every point
    /// costs a Monte Carlo run.
    pub fn simulated_default(b_mean: f64) -> Self {
        GridSpec {
            p_min: 0.05,
            p_max: 1.0,
            p_step: 0.05,
            r_min: 0.25,
            r_max: rate_ceiling(b_mean),
            r_step: 0.25,
            refinement_rounds: 1,
            refinement_shrink: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_min > 0.0 && self.p_min <= self.p_max && self.p_max <= 1.0) {
            return Err(Error::Parameter(format!(
                "probability grid [{}, {}] must satisfy 0 < min <= max <= 1",
                self.p_min, self.p_max
            )));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "rate grid [{}, {}] must satisfy 0 < min <= max",
                self.r_min, self.r_max
            )));
        }
        if !(self.p_step > 0.0 && self.r_step > 0.0) {
            return Err(Error::Parameter("grid steps must be positive".into()));
        }
        if !(self.refinement_shrink > 0.0 && self.refinement_shrink < 1.0) {
            return Err(Error::Parameter(format!(
                "refinement shrink must lie in (0, 1), got {}",
                self.refinement_shrink
            )));
        }
        Ok(())
    }
}

/// Largest rate worth scanning: a touch above the single-user capacity.
fn rate_ceiling(b_mean: f64) -> f64 {
    (1.0 + b_mean).log2() + 3.0
}

/// Grid points `min, min + step, ...` up to `max` (clamped against float
/// drift so the endpoint is included exactly once).
pub fn grid_axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let mut points = Vec::new();
    let mut i = 0u64;
    loop {
        let v = min + i as f64 * step;
        if v > max + step * 1e-9 {
            break;
        }
        points.push(v.min(max));
        i += 1;
    }
    if points.is_empty() {
        points.push(min);
    }
    points
}

/// How the objective was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Analytical,
    Simulated,
}

impl SearchMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SearchMethod::Analytical => "analytical",
            SearchMethod::Simulated => "simulated",
        }
    }
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Best operating point found by a search.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub p_star: f64,
    pub rate_star: f64,
    pub sum_rate_star: f64,
    pub throughput_star: f64,
    pub method: SearchMethod,
    /// Standard error of the winning sum rate (simulated searches only).
    pub uncertainty: Option<f64>,
    /// Objective evaluations spent.
    pub evaluations: u64,
}

struct Candidate {
    p: f64,
    r: f64,
    rs: f64,
    t: f64,
    stderr: Option<f64>,
}

fn better(cand: &Candidate, best: &Candidate) -> bool {
    cand.rs > best.rs
        || (cand.rs == best.rs && (cand.r < best.r || (cand.r == best.r && cand.p < best.p)))
}

/// Scans one rectangle, carrying the incumbent so refinement passes can
/// only improve on it.
fn scan<F>(
    p_axis: &[f64],
    r_axis: &[f64],
    best: &mut Option<Candidate>,
    evaluations: &mut u64,
    eval: &mut F,
) -> Result<()>
where
    F: FnMut(f64, f64) -> Result<(f64, f64, Option<f64>)>,
{
    for &p in p_axis {
        for &r in r_axis {
            let (t, rs, stderr) = eval(p, r)?;
            *evaluations += 1;
            let cand = Candidate { p, r, rs, t, stderr };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                *best = Some(cand);
            }
        }
    }
    Ok(())
}

fn search<F>(grid: &GridSpec, method: SearchMethod, mut eval: F) -> Result<OptimizationResult>
where
    F: FnMut(f64, f64) -> Result<(f64, f64, Option<f64>)>,
{
    grid.validate()?;
    let mut best: Option<Candidate> = None;
    let mut evaluations = 0u64;

    scan(
        &grid_axis(grid.p_min, grid.p_max, grid.p_step),
        &grid_axis(grid.r_min, grid.r_max, grid.r_step),
        &mut best,
        &mut evaluations,
        &mut eval,
    )?;

    let mut p_step = grid.p_step;
    let mut r_step = grid.r_step;
    for _ in 0..grid.refinement_rounds {
        let incumbent = best.as_ref().expect("initial scan found a point");
        let (p0, r0) = (incumbent.p, incumbent.r);
        let p_axis = grid_axis(
            (p0 - p_step).max(grid.p_min),
            (p0 + p_step).min(grid.p_max),
            p_step * grid.refinement_shrink,
        );
        let r_axis = grid_axis(
            (r0 - r_step).max(grid.r_min),
            (r0 + r_step).min(grid.r_max),
            r_step * grid.refinement_shrink,
        );
        scan(&p_axis, &r_axis, &mut best, &mut evaluations, &mut eval)?;
        p_step *= grid.refinement_shrink;
        r_step *= grid.refinement_shrink;
    }

    let best = best.expect("grid search evaluated at least one point");
    Ok(OptimizationResult {
        p_star: best.p,
        rate_star: best.r,
        sum_rate_star: best.rs,
        throughput_star: best.t,
        method,
        uncertainty: best.stderr,
        evaluations,
    })
}

/// Maximizes the closed-form two-user sum rate over the grid.
///
/// The rate axis is clipped to the model's domain (`R >= 1`); a grid lying
/// entirely below it is an error.
pub fn grid_search_analytical(b_mean: f64, grid: &GridSpec) -> Result<OptimizationResult> {
    if !(b_mean > 0.0) || !b_mean.is_finite() {
        return Err(Error::Parameter(format!(
            "mean SNR must be positive and finite, got {b_mean}"
        )));
    }
    if grid.r_max < 1.0 {
        return Err(Error::AnalyticalDomain { rate: grid.r_max });
    }
    let clipped = GridSpec {
        r_min: grid.r_min.max(1.0),
        ..grid.clone()
    };
    search(&clipped, SearchMethod::Analytical, |p, r| {
        let (t, rs) = analytical_sum_rate(p, r, b_mean)?;
        Ok((t, rs, None))
    })
}

/// Maximizes the simulated sum rate over the grid.
///
/// Every point reuses the template's master seed, so all points share the
/// same channel realizations and their differences reflect the operating
/// point rather than sampling noise.
pub fn grid_search_simulated(
    template: &SystemConfig,
    grid: &GridSpec,
) -> Result<OptimizationResult> {
    template.validate()?;
    search(grid, SearchMethod::Simulated, |p, r| {
        let config = SystemConfig {
            p,
            rate: r,
            ..template.clone()
        };
        let summary = run_monte_carlo(&config)?;
        Ok((
            summary.throughput.mean,
            summary.sum_rate.mean,
            summary.sum_rate.stderr,
        ))
    })
}

/// Protocol variant compared in a user-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariant {
    /// Full protocol, p searched.
    CrossSlot,
    /// In-slot SIC only, p searched.
    IntraOnly,
    /// Full protocol pinned to p = 1 (every user transmits every slot).
    AlwaysOn,
}

impl SweepVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariant::CrossSlot => "cross-slot",
            SweepVariant::IntraOnly => "intra-only",
            SweepVariant::AlwaysOn => "always-on",
        }
    }
}

impl std::fmt::Display for SweepVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One optimized cell of a user-count sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub users: usize,
    pub variant: SweepVariant,
    pub result: OptimizationResult,
}

/// Optimizes every requested variant for every user count, simulated.
pub fn sweep_k(
    template: &SystemConfig,
    user_counts: &[usize],
    variants: &[SweepVariant],
    grid: &GridSpec,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &users in user_counts {
        for &variant in variants {
            let (scheme, cell_grid) = match variant {
                SweepVariant::CrossSlot => (Scheme::CrossSlot, grid.clone()),
                SweepVariant::IntraOnly => (Scheme::IntraOnly, grid.clone()),
                SweepVariant::AlwaysOn => (
                    Scheme::CrossSlot,
                    GridSpec {
                        p_min: 1.0,
                        p_max: 1.0,
                        ..grid.clone()
                    },
                ),
            };
            let cell_template = SystemConfig {
                users,
                scheme,
                ..template.clone()
            };
            let result = grid_search_simulated(&cell_template, &cell_grid)?;
            rows.push(SweepRow {
                users,
                variant,
                result,
            });
        }
    }
    Ok(rows)
}

/// Builds the operating-point table over user counts and average SNRs.
///
/// Two-user cells use the closed form; larger systems fall back to the
/// simulated search. Passing `None` for a grid selects the matching default
/// for each SNR. The output is deterministic CSV, newline-terminated.
pub fn build_lookup_table(
    template: &SystemConfig,
    user_counts: &[usize],
    snr_dbs: &[f64],
    analytical_grid: Option<&GridSpec>,
    simulated_grid: Option<&GridSpec>,
) -> Result<String> {
    let mut out = String::from(LOOKUP_TABLE_HEADER);
    out.push('\n');
    for &users in user_counts {
        if users == 0 {
            return Err(Error::Parameter("users must be at least 1".into()));
        }
        for &snr_db in snr_dbs {
            let b_mean = 10f64.powf(snr_db / 10.0);
            let result = if users == 2 {
                let default = GridSpec::analytical_default(b_mean);
                grid_search_analytical(b_mean, analytical_grid.unwrap_or(&default))?
            } else {
                let default = GridSpec::simulated_default(b_mean);
                let cell_template = SystemConfig {
                    users,
                    snr_db,
                    scheme: Scheme::CrossSlot,
                    ..template.clone()
                };
                grid_search_simulated(&cell_template, simulated_grid.unwrap_or(&default))?
            };
            let stderr = result
                .uncertainty
                .map(|s| format!("{s:.6}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{},{}\n",
                users,
                snr_db,
                result.p_star,
                result.rate_star,
                result.sum_rate_star,
                result.method,
                stderr
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        10f64.powf(x / 10.0)
    }

    fn point_grid(p: f64, r: f64) -> GridSpec {
        GridSpec {
            p_min: p,
            p_max: p,
            p_step: 1.0,
            r_min: r,
            r_max: r,
            r_step: 1.0,
            refinement_rounds: 0,
            refinement_shrink: 0.5,
        }
    }

    #[test]
    fn axis_includes_both_endpoints_once() {
        let a = grid_axis(0.01, 1.0, 0.01);
        assert_eq!(a.len(), 100);
        assert_eq!(a[0], 0.01);
        assert_eq!(*a.last().unwrap(), 1.0);
        assert!(a.iter().all(|&p| p <= 1.0));

        let single = grid_axis(0.7, 0.7, 0.1);
        assert_eq!(single, vec![0.7]);
    }

    #[test]
    fn one_point_grid_evaluates_the_closed_form() {
        let r = grid_search_analytical(db(15.0), &point_grid(1.0, 1.263)).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.p_star, 1.0);
        assert!((r.sum_rate_star - 1.933).abs() < 5e-3);
        assert_eq!(r.method, SearchMethod::Analytical);
        assert!(r.uncertainty.is_none());
    }

    #[test]
    fn default_grid_finds_the_low_snr_optimum() {
        let b = db(15.0);
        let r = grid_search_analytical(b, &GridSpec::analytical_default(b)).unwrap();
        assert!((r.p_star - 1.0).abs() < 0.01, "p* {}", r.p_star);
        assert!((r.rate_star - 1.263).abs() < 0.02, "R* {}", r.rate_star);
        assert!((r.sum_rate_star - 1.933).abs() < 0.01, "Rs* {}", r.sum_rate_star);
    }

    #[test]
    fn default_grid_finds_the_high_snr_optimum() {
        let b = db(25.0);
        let r = grid_search_analytical(b, &GridSpec::analytical_default(b)).unwrap();
        assert!((r.p_star - 0.59).abs() < 0.02, "p* {}", r.p_star);
        assert!((r.rate_star - 6.129).abs() < 0.05, "R* {}", r.rate_star);
        assert!((r.sum_rate_star - 3.431).abs() < 0.01, "Rs* {}", r.sum_rate_star);
    }

    #[test]
    fn ties_resolve_to_smallest_rate_then_probability() {
        // far beyond capacity the sum rate is exactly zero everywhere
        let grid = GridSpec {
            p_min: 0.5,
            p_max: 0.7,
            p_step: 0.2,
            r_min: 60.0,
            r_max: 65.0,
            r_step: 5.0,
            refinement_rounds: 0,
            refinement_shrink: 0.5,
        };
        let r = grid_search_analytical(10.0, &grid).unwrap();
        assert_eq!(r.sum_rate_star, 0.0);
        assert_eq!(r.p_star, 0.5);
        assert_eq!(r.rate_star, 60.0);
    }

    #[test]
    fn refinement_never_hurts_and_usually_helps() {
        let b = db(25.0);
        let coarse = GridSpec {
            p_min: 0.1,
            p_max: 1.0,
            p_step: 0.1,
            r_min: 1.0,
            r_max: 9.0,
            r_step: 0.5,
            refinement_rounds: 0,
            refinement_shrink: 0.1,
        };
        let refined = GridSpec {
            refinement_rounds: 2,
            ..coarse.clone()
        };
        let a = grid_search_analytical(b, &coarse).unwrap();
        let c = grid_search_analytical(b, &refined).unwrap();
        assert!(c.sum_rate_star >= a.sum_rate_star);
        assert!(c.sum_rate_star > a.sum_rate_star, "refinement found nothing");
        assert!(c.evaluations > a.evaluations);
    }

    #[test]
    fn incumbent_is_the_grid_maximum() {
        let b = db(25.0);
        let grid = GridSpec {
            p_min: 0.2,
            p_max: 1.0,
            p_step: 0.2,
            r_min: 2.0,
            r_max: 8.0,
            r_step: 1.0,
            refinement_rounds: 0,
            refinement_shrink: 0.5,
        };
        let found = grid_search_analytical(b, &grid).unwrap();
        let mut max_rs = f64::NEG_INFINITY;
        for &p in &grid_axis(0.2, 1.0, 0.2) {
            for &r in &grid_axis(2.0, 8.0, 1.0) {
                let (_, rs) = analytical_sum_rate(p, r, b).unwrap();
                max_rs = max_rs.max(rs);
            }
        }
        assert_eq!(found.sum_rate_star, max_rs);
    }

    #[test]
    fn analytical_grid_below_domain_is_rejected() {
        let grid = GridSpec {
            r_min: 0.2,
            r_max: 0.8,
            ..point_grid(0.5, 0.5)
        };
        assert!(matches!(
            grid_search_analytical(100.0, &grid),
            Err(Error::AnalyticalDomain { .. })
        ));
    }

    #[test]
    fn analytical_grid_straddling_domain_is_clipped() {
        let grid = GridSpec {
            p_min: 1.0,
            p_max: 1.0,
            p_step: 1.0,
            r_min: 0.5,
            r_max: 1.5,
            r_step: 0.25,
            refinement_rounds: 0,
            refinement_shrink: 0.5,
        };
        let r = grid_search_analytical(db(15.0), &grid).unwrap();
        assert!(r.rate_star >= 1.0);
    }

    #[test]
    fn simulated_point_matches_the_closed_form() {
        let template = SystemConfig {
            users: 2,
            snr_db: 15.0,
            n_slots: 200,
            n_experiments: 60,
            seed: 21,
            scheme: Scheme::CrossSlot,
            ..SystemConfig::default()
        };
        let r = grid_search_simulated(&template, &point_grid(1.0, 1.263)).unwrap();
        assert_eq!(r.method, SearchMethod::Simulated);
        let se = r.uncertainty.expect("many experiments give a standard error");
        assert!(
            (r.sum_rate_star - 1.933).abs() < 4.0 * se + 0.02,
            "Rs {} vs 1.933 (se {se})",
            r.sum_rate_star
        );
    }

    #[test]
    fn sweep_covers_all_requested_cells() {
        let template = SystemConfig {
            users: 2,
            snr_db: 15.0,
            n_slots: 60,
            n_experiments: 4,
            seed: 3,
            ..SystemConfig::default()
        };
        let grid = point_grid(0.5, 2.0);
        let variants = [
            SweepVariant::CrossSlot,
            SweepVariant::IntraOnly,
            SweepVariant::AlwaysOn,
        ];
        let rows = sweep_k(&template, &[2, 3], &variants, &grid).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].users, 2);
        assert_eq!(rows[0].variant, SweepVariant::CrossSlot);
        assert_eq!(rows[5].users, 3);
        assert_eq!(rows[5].variant, SweepVariant::AlwaysOn);
        // the pinned variant really ran at p = 1
        assert_eq!(rows[2].result.p_star, 1.0);
        assert_eq!(rows[5].result.p_star, 1.0);
    }

    #[test]
    fn lookup_table_is_deterministic_and_well_formed() {
        let template = SystemConfig {
            n_slots: 60,
            n_experiments: 4,
            seed: 8,
            ..SystemConfig::default()
        };
        let analytical = point_grid(1.0, 1.263);
        let simulated = point_grid(0.5, 2.0);
        let table = build_lookup_table(
            &template,
            &[2, 3],
            &[15.0],
            Some(&analytical),
            Some(&simulated),
        )
        .unwrap();
        let again = build_lookup_table(
            &template,
            &[2, 3],
            &[15.0],
            Some(&analytical),
            Some(&simulated),
        )
        .unwrap();
        assert_eq!(table, again);

        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], LOOKUP_TABLE_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(table.ends_with('\n'));
        assert!(lines[1].starts_with("2,15,"));
        assert!(lines[1].contains(",analytical,"));
        assert!(lines[1].ends_with(','), "analytical rows leave stderr empty");
        assert!(lines[2].starts_with("3,15,"));
        assert!(lines[2].contains(",simulated,"));
        assert!(!lines[2].ends_with(','));
    }
}
