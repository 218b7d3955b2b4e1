//! `analyze`: closed-form two-user sum rate, one point or a full surface.

use std::time::Instant;

use crosslot_core::{analytical_sum_rate, grid_axis, GridSpec};

use super::f6;
use crate::manifest::{grid_json, RunManifest};
use crate::{config, write_artifact, AnalyzeArgs, CliError, Format};

/// Header of the surface records.
pub const SURFACE_HEADER: &str = "p,R,T,Rs";

fn row(p: f64, rate: f64, t: f64, rs: f64) -> String {
    format!("{},{},{},{}", f6(p), f6(rate), f6(t), f6(rs))
}

pub fn cmd(args: AnalyzeArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let resolved = config::resolve(&args.common)?;
    if args.common.users.is_some() && resolved.users != 2 {
        return Err(CliError::Usage(
            "the closed-form analysis covers exactly two users; use `simulate` for other counts"
                .into(),
        ));
    }
    let b = resolved.snr_linear();

    let (csv, text, manifest_args) = match (args.common.p, args.common.rate) {
        (Some(p), Some(rate)) => {
            let (t, rs) = analytical_sum_rate(p, rate, b)?;
            let csv = format!("{SURFACE_HEADER}\n{}\n", row(p, rate, t, rs));
            let text = format!(
                "p = {}\nR = {}\nT = {}\nRs = {}\n",
                f6(p),
                f6(rate),
                f6(t),
                f6(rs)
            );
            (csv, text, serde_json::json!({ "mode": "point" }))
        }
        (None, None) => {
            let grid = args.grid.apply(GridSpec::analytical_default(b));
            grid.validate()?;
            let mut csv = String::from(SURFACE_HEADER);
            csv.push('\n');
            for &p in &grid_axis(grid.p_min, grid.p_max, grid.p_step) {
                for &rate in &grid_axis(grid.r_min, grid.r_max, grid.r_step) {
                    let (t, rs) = analytical_sum_rate(p, rate, b)?;
                    csv.push_str(&row(p, rate, t, rs));
                    csv.push('\n');
                }
            }
            let args_json = serde_json::json!({ "mode": "surface", "grid": grid_json(&grid) });
            (csv.clone(), csv, args_json)
        }
        _ => {
            return Err(CliError::Usage(
                "a point evaluation needs both --p and --rate; omit both for a surface".into(),
            ))
        }
    };

    match args.output.format {
        Format::Csv => print!("{csv}"),
        Format::Text => print!("{text}"),
    }
    if let Some(path) = &args.output.out {
        let manifest = RunManifest::new("analyze", &resolved, manifest_args, &[path], started);
        write_artifact(path, &csv, &manifest)?;
    }
    Ok(0)
}
