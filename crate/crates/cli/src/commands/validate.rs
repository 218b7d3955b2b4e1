//! `validate`: self-checks of the closed forms against independent
//! estimates. Each check prints one PASS/FAIL line with its statistics;
//! any failure turns the exit code to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crosslot_core::{
    analytical_sum_rate, build_transition_model, build_transition_model_with,
    event_probabilities, event_probabilities_mc, experiment_seed, steady_state,
    throughput_matrix, EventProbabilities, Scheme, Simulation, SystemConfig, TransitionLayout,
};

use crate::{CliError, ValidateArgs, EXIT_CHECK_FAILED};

/// Result of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// The 24 pinned operating points used by the sampled checks.
fn reference_triples() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for &p in &[0.1, 0.4, 0.7, 1.0] {
        for &rate in &[1.0, 3.0, 6.0] {
            for &snr_db in &[15.0, 25.0] {
                out.push((p, rate, snr_db));
            }
        }
    }
    out
}

fn fields(ev: &EventProbabilities) -> [(&'static str, f64); 13] {
    [
        ("idle", ev.idle),
        ("single_success", ev.single_success),
        ("single_failure", ev.single_failure),
        ("double_both", ev.double_both),
        ("double_one", ev.double_one),
        ("double_none", ev.double_none),
        ("collision_pot2", ev.collision_pot2),
        ("collision_pot1", ev.collision_pot1),
        ("collision_pot0", ev.collision_pot0),
        ("recover_other", ev.recover_other),
        ("recover_buffered", ev.recover_buffered),
        ("collision_new_pot", ev.collision_new_pot),
        ("collision_same_pot", ev.collision_same_pot),
    ]
}

/// Closed-form event probabilities against fresh Monte Carlo estimates.
///
/// `tamper` lets tests inject a defect into the closed-form values to prove
/// the check has teeth. Tolerance per field: three binomial sigma plus a
/// `2/n` floor for counting granularity near zero.
pub fn events_vs_monte_carlo(
    samples: u64,
    seed: u64,
    tamper: Option<&dyn Fn(&mut EventProbabilities)>,
) -> CheckOutcome {
    let name = "closed-form-vs-monte-carlo";
    let triples = reference_triples();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut passed = true;
    for (i, &(p, rate, snr_db)) in triples.iter().enumerate() {
        let b = db(snr_db);
        let mut cf = match event_probabilities(p, rate, b) {
            Ok(ev) => ev,
            Err(e) => {
                return CheckOutcome::new(name, false, format!("closed form failed: {e}"));
            }
        };
        if let Some(t) = tamper {
            t(&mut cf);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(experiment_seed(seed, i as u64));
        let mc = event_probabilities_mc(p, rate, b, samples, &mut rng)
            .expect("sampler accepts every reference triple");
        for ((field, c), (_, m)) in fields(&cf).into_iter().zip(fields(&mc)) {
            let sigma = (c.clamp(0.0, 1.0) * (1.0 - c.clamp(0.0, 1.0)) / samples as f64).sqrt();
            let tol = 3.0 * sigma + 2.0 / samples as f64;
            let err = (c - m).abs();
            let z = err / (tol / 3.0);
            if z > worst {
                worst = z;
                worst_at = format!("{field} at (p={p}, R={rate}, {snr_db} dB)");
            }
            if err > tol {
                passed = false;
            }
        }
    }
    CheckOutcome::new(
        name,
        passed,
        format!(
            "{} points x {} samples, worst {:.2} of 3.00 allowed sigma ({worst_at})",
            triples.len(),
            samples,
            worst
        ),
    )
}

/// Exact partition identities of the closed forms.
pub fn partition_identities() -> CheckOutcome {
    let name = "partition-identities";
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &(p, rate, snr_db) in &reference_triples() {
        let ev = event_probabilities(p, rate, db(snr_db)).expect("valid triple");
        worst = worst.max(ev.activity_residual().abs());
        worst = worst.max(ev.collision_residual().abs());
        for r in ev.subevent_residuals() {
            worst = worst.max(r.abs());
        }
        count += 1;
    }
    CheckOutcome::new(
        name,
        worst <= 1e-14,
        format!("{count} points, worst residual {worst:.2e} (allowed 1e-14)"),
    )
}

/// Rows of the transition matrix must sum to one in both layouts.
pub fn transition_row_sums() -> CheckOutcome {
    let name = "transition-row-sums";
    let mut worst: f64 = 0.0;
    for &(p, rate, snr_db) in &reference_triples() {
        let ev = event_probabilities(p, rate, db(snr_db)).expect("valid triple");
        for layout in [TransitionLayout::Consistent, TransitionLayout::Transposed] {
            let model = build_transition_model_with(&ev, layout).expect("consistent input");
            for i in 0..3 {
                let sum: f64 = (0..3).map(|j| model.entry(i, j).probability()).sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
    }
    CheckOutcome::new(
        name,
        worst <= 1e-12,
        format!("both layouts, worst |row sum - 1| = {worst:.2e} (allowed 1e-12)"),
    )
}

/// The derivative-at-one matrix must reproduce the direct per-state mean
/// recovery expressions exactly.
pub fn throughput_matrix_equivalence(seed: u64) -> CheckOutcome {
    let name = "throughput-matrix-equivalence";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let n = 300;
    for _ in 0..n {
        let p = rng.gen_range(0.05..=1.0f64);
        let rate = rng.gen_range(1.0..12.0f64);
        let b = rng.gen_range(3.0..600.0f64);
        let ev = event_probabilities(p, rate, b).expect("valid random point");
        let tpm = throughput_matrix(&build_transition_model(&ev).expect("valid model"));
        let direct = [
            ev.single_success + ev.double_one + 2.0 * ev.double_both,
            2.0 * (ev.single_success + ev.double_both + ev.double_one),
            ev.recover_buffered + 2.0 * ev.recover_other,
        ];
        for i in 0..3 {
            worst = worst.max((tpm[i][0] - direct[i]).abs());
            worst = worst.max(tpm[i][1].abs());
            worst = worst.max(tpm[i][2].abs());
        }
    }
    CheckOutcome::new(
        name,
        worst <= 1e-15,
        format!("{n} random points, worst entry error {worst:.2e} (allowed 1e-15)"),
    )
}

/// Direct stationary solve against power iteration and the stationarity
/// residual.
///
/// Random points are drawn from a regime where the chain actually mixes
/// (threshold-to-SNR ratio bounded); outside it the buffer states are
/// entered with probabilities far below machine epsilon and power
/// iteration stops being a usable oracle, while the direct solve still
/// returns the exact limiting distribution.
pub fn stationary_solver(seed: u64) -> CheckOutcome {
    let name = "stationary-solver";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<(f64, f64, f64)> = vec![
        (0.59, 6.129, db(25.0)),
        (1.0, 1.263, db(15.0)),
        (0.2, 1.0, db(15.0)),
    ];
    for _ in 0..300 {
        points.push((
            rng.gen_range(0.2..=1.0f64),
            rng.gen_range(1.0..6.0f64),
            rng.gen_range(db(12.0)..db(28.0)),
        ));
    }
    let n_points = points.len();
    let mut worst_power: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for (p, rate, b) in points {
        let ev = event_probabilities(p, rate, b).expect("valid point");
        let model = build_transition_model(&ev).expect("valid model");
        let v = match steady_state(&model) {
            Ok(s) => s.probabilities,
            Err(e) => return CheckOutcome::new(name, false, format!("solve failed: {e}")),
        };
        let m = model.stochastic_matrix();
        for j in 0..3 {
            let vp: f64 = (0..3).map(|i| v[i] * m[i][j]).sum();
            worst_residual = worst_residual.max((vp - v[j]).abs());
        }
        let mut w = [1.0, 0.0, 0.0];
        for _ in 0..10_000_000u64 {
            let mut next = [0.0; 3];
            for j in 0..3 {
                for i in 0..3 {
                    next[j] += w[i] * m[i][j];
                }
            }
            let s: f64 = next.iter().sum();
            for x in &mut next {
                *x /= s;
            }
            let delta = (0..3).map(|i| (next[i] - w[i]).abs()).fold(0.0f64, f64::max);
            w = next;
            if delta <= 1e-16 {
                break;
            }
        }
        for i in 0..3 {
            worst_power = worst_power.max((v[i] - w[i]).abs());
        }
    }
    CheckOutcome::new(
        name,
        worst_power <= 1e-10 && worst_residual <= 1e-10,
        format!(
            "{n_points} points, worst vs power iteration {worst_power:.2e}, \
             worst stationarity residual {worst_residual:.2e} (allowed 1e-10)"
        ),
    )
}

/// Batch-means comparison of one long simulated run against the chain:
/// the consistent layout must sit within three standard errors on every
/// state fraction and on the sum rate, and the swapped row layout must be
/// rejected by the same data.
pub fn chain_vs_simulation(slots: u64, seed: u64) -> CheckOutcome {
    let name = "chain-vs-simulation";
    let (p, rate, snr_db) = (0.59, 6.129, 25.0);
    let b = db(snr_db);

    let ev = event_probabilities(p, rate, b).expect("reference point");
    let good = steady_state(&build_transition_model_with(&ev, TransitionLayout::Consistent).unwrap())
        .unwrap()
        .probabilities;
    let bad = steady_state(&build_transition_model_with(&ev, TransitionLayout::Transposed).unwrap())
        .unwrap()
        .probabilities;
    let (_, rs_chain) = analytical_sum_rate(p, rate, b).expect("reference point");

    let n_batches = 100u64;
    let batch_len = (slots / n_batches).max(1);
    let config = SystemConfig {
        users: 2,
        snr_db,
        p,
        rate,
        n_slots: batch_len * n_batches,
        n_experiments: 1,
        seed,
        scheme: Scheme::CrossSlot,
    };
    let mut sim = Simulation::new(&config, seed).expect("valid config");
    let mut batch_hist: Vec<[f64; 3]> = Vec::with_capacity(n_batches as usize);
    let mut batch_rs: Vec<f64> = Vec::with_capacity(n_batches as usize);
    for _ in 0..n_batches {
        let mut counts = [0u64; 3];
        let mut recovered = 0u64;
        for _ in 0..batch_len {
            let report = sim.step().expect("step succeeds");
            counts[report.state.expect("two-user run").index()] += 1;
            recovered += report.recovered.len() as u64;
        }
        batch_hist.push(counts.map(|c| c as f64 / batch_len as f64));
        batch_rs.push(rate * recovered as f64 / batch_len as f64);
    }

    let mean_se = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt().max(1e-12))
    };

    let mut z_good: f64 = 0.0;
    let mut z_bad: f64 = 0.0;
    for i in 0..3 {
        let per_batch: Vec<f64> = batch_hist.iter().map(|h| h[i]).collect();
        let (mean, se) = mean_se(&per_batch);
        z_good = z_good.max((mean - good[i]).abs() / se);
        z_bad = z_bad.max((mean - bad[i]).abs() / se);
    }
    let (rs_mean, rs_se) = mean_se(&batch_rs);
    let z_rs = (rs_mean - rs_chain).abs() / rs_se;

    let passed = z_good <= 3.0 && z_rs <= 3.0 && z_bad > 3.0;
    CheckOutcome::new(
        name,
        passed,
        format!(
            "{} slots in {n_batches} batches: worst state z = {z_good:.2}, sum-rate z = {z_rs:.2} \
             (allowed 3.00); swapped-row layout off by {z_bad:.1} sigma (must exceed 3)",
            batch_len * n_batches
        ),
    )
}

/// Runs every check with the given budgets.
pub fn run_all(samples: u64, slots: u64, seed: u64) -> Vec<CheckOutcome> {
    vec![
        events_vs_monte_carlo(samples, seed, None),
        partition_identities(),
        transition_row_sums(),
        throughput_matrix_equivalence(seed),
        stationary_solver(seed),
        chain_vs_simulation(slots, seed),
    ]
}

pub fn cmd(args: ValidateArgs) -> Result<i32, CliError> {
    if args.samples == 0 || args.slots < 100 {
        return Err(CliError::Usage(
            "validate needs --samples >= 1 and --slots >= 100".into(),
        ));
    }
    let outcomes = run_all(args.samples, args.slots, args.seed);
    let mut output = String::new();
    let mut passed = 0;
    for o in &outcomes {
        output.push_str(&format!(
            "{} {}: {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        ));
        if o.passed {
            passed += 1;
        }
    }
    output.push_str(&format!("RESULT: {passed}/{} checks passed\n", outcomes.len()));
    print!("{output}");
    Ok(if passed == outcomes.len() {
        0
    } else {
        EXIT_CHECK_FAILED
    })
}
