//! `optimize`: joint (p, rate) search, plus lookup-table export.

use std::time::Instant;

use crosslot_core::{
    build_lookup_table, grid_search_analytical, grid_search_simulated, GridSpec,
};

use super::{f6, opt6};
use crate::manifest::{grid_json, RunManifest};
use crate::{config, write_artifact, CliError, Format, OptimizeArgs};

/// Header of the single-result record.
pub const RESULT_HEADER: &str = "method,p_star,R_star,Rs_star,T_star,stderr,evaluations";

pub fn cmd(args: OptimizeArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let resolved = config::resolve(&args.common)?;
    let b = resolved.snr_linear();

    if let Some(path) = &args.table {
        if args.output.out.is_some() {
            return Err(CliError::Usage(
                "--table already writes a file; drop --out".into(),
            ));
        }
        let users_list = if args.table_users.is_empty() {
            vec![resolved.users]
        } else {
            args.table_users.clone()
        };
        let snr_list = if args.table_snr_db.is_empty() {
            vec![resolved.snr_db]
        } else {
            args.table_snr_db.clone()
        };
        // explicit grid flags apply to every cell; otherwise each cell uses
        // the default grid for its own SNR
        let override_given = grid_overrides_present(&args);
        let analytical_grid =
            override_given.then(|| args.grid.apply(GridSpec::analytical_default(b)));
        let simulated_grid =
            override_given.then(|| args.grid.apply(GridSpec::simulated_default(b)));
        let table = build_lookup_table(
            &resolved,
            &users_list,
            &snr_list,
            analytical_grid.as_ref(),
            simulated_grid.as_ref(),
        )?;
        print!("{table}");
        let manifest = RunManifest::new(
            "optimize",
            &resolved,
            serde_json::json!({
                "table_users": users_list,
                "table_snr_db": snr_list,
                "grid_overridden": override_given,
            }),
            &[path],
            started,
        );
        write_artifact(path, &table, &manifest)?;
        return Ok(0);
    }

    let analytical = if args.analytical {
        true
    } else if args.simulated {
        false
    } else {
        resolved.users == 2
    };
    if analytical && resolved.users != 2 {
        return Err(CliError::Usage(
            "the closed-form backend covers exactly two users; pass --simulated here".into(),
        ));
    }

    let grid = if analytical {
        args.grid.apply(GridSpec::analytical_default(b))
    } else {
        args.grid.apply(GridSpec::simulated_default(b))
    };
    let result = if analytical {
        grid_search_analytical(b, &grid)?
    } else {
        resolved.validate()?;
        grid_search_simulated(&resolved, &grid)?
    };

    let csv = format!(
        "{RESULT_HEADER}\n{},{},{},{},{},{},{}\n",
        result.method,
        f6(result.p_star),
        f6(result.rate_star),
        f6(result.sum_rate_star),
        f6(result.throughput_star),
        opt6(result.uncertainty),
        result.evaluations,
    );
    let text = format!(
        "method = {}\np_star = {}\nR_star = {}\nRs_star = {}\nT_star = {}\n\
         stderr = {}\nevaluations = {}\n",
        result.method,
        f6(result.p_star),
        f6(result.rate_star),
        f6(result.sum_rate_star),
        f6(result.throughput_star),
        result
            .uncertainty
            .map(|s| f6(s))
            .unwrap_or_else(|| "n/a".into()),
        result.evaluations,
    );

    match args.output.format {
        Format::Csv => print!("{csv}"),
        Format::Text => print!("{text}"),
    }

    let manifest_args = serde_json::json!({
        "method": result.method.as_str(),
        "grid": grid_json(&grid),
    });
    if let Some(path) = &args.output.out {
        let manifest = RunManifest::new(
            "optimize",
            &resolved,
            manifest_args.clone(),
            &[path],
            started,
        );
        write_artifact(path, &csv, &manifest)?;
    }

    Ok(0)
}

fn grid_overrides_present(args: &OptimizeArgs) -> bool {
    let g = &args.grid;
    g.p_min.is_some()
        || g.p_max.is_some()
        || g.p_step.is_some()
        || g.rate_min.is_some()
        || g.rate_max.is_some()
        || g.rate_step.is_some()
        || g.refine_rounds.is_some()
        || g.refine_shrink.is_some()
}
