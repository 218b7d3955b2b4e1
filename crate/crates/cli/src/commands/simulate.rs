//! `simulate`: Monte Carlo runs of the full protocol, aggregated.

use std::time::Instant;

use crosslot_core::run_monte_carlo;

use super::{f6, opt6, with_stderr};
use crate::manifest::RunManifest;
use crate::{config, write_artifact, CliError, Format, SimulateArgs};

/// Header of the aggregate record.
pub const SUMMARY_HEADER: &str = "users,snr_db,p,rate,slots,experiments,seed,scheme,\
throughput,throughput_stderr,sum_rate,sum_rate_stderr,occupancy,occupancy_stderr,s0,s2_2,s2_1";

pub fn cmd(args: SimulateArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let resolved = config::resolve(&args.common)?;
    resolved.validate()?;
    let summary = run_monte_carlo(&resolved)?;

    let hist = summary.state_histogram.as_ref();
    let csv = format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        resolved.users,
        resolved.snr_db,
        f6(resolved.p),
        f6(resolved.rate),
        resolved.n_slots,
        resolved.n_experiments,
        resolved.seed,
        resolved.scheme,
        f6(summary.throughput.mean),
        opt6(summary.throughput.stderr),
        f6(summary.sum_rate.mean),
        opt6(summary.sum_rate.stderr),
        f6(summary.buffer_occupancy.mean),
        opt6(summary.buffer_occupancy.stderr),
        hist.map(|h| f6(h[0].mean)).unwrap_or_default(),
        hist.map(|h| f6(h[1].mean)).unwrap_or_default(),
        hist.map(|h| f6(h[2].mean)).unwrap_or_default(),
    );

    let mut text = format!(
        "users = {}\nsnr_db = {}\np = {}\nrate = {}\nslots = {}\nexperiments = {}\n\
         seed = {}\nscheme = {}\nthroughput = {}\nsum_rate = {}\nbuffer_occupancy = {}\n",
        resolved.users,
        resolved.snr_db,
        f6(resolved.p),
        f6(resolved.rate),
        resolved.n_slots,
        resolved.n_experiments,
        resolved.seed,
        resolved.scheme,
        with_stderr(summary.throughput.mean, summary.throughput.stderr),
        with_stderr(summary.sum_rate.mean, summary.sum_rate.stderr),
        with_stderr(summary.buffer_occupancy.mean, summary.buffer_occupancy.stderr),
    );
    if let Some(h) = hist {
        for (label, m) in crosslot_core::STATE_LABELS.iter().zip(h) {
            text.push_str(&format!(
                "state_{label} = {}\n",
                with_stderr(m.mean, m.stderr)
            ));
        }
    }

    match args.output.format {
        Format::Csv => print!("{csv}"),
        Format::Text => print!("{text}"),
    }
    if let Some(path) = &args.output.out {
        let manifest =
            RunManifest::new("simulate", &resolved, serde_json::json!({}), &[path], started);
        write_artifact(path, &csv, &manifest)?;
    }
    Ok(0)
}
