//! Closed-form throughput model for the two-user system.
//!
//! The buffer of a two-user system is summarized by how many distinct
//! potential packets it holds: none (`S0`), two (`S2_2`) or one (`S2_1`).
//! Slot activity splits into events whose probabilities have closed forms
//! under exponential fading; together they drive a three-state Markov chain
//! whose transition entries are small polynomials in a counting variable
//! `x`, one power per packet recovered during the transition. The mean
//! number of recoveries per slot then follows from the stationary
//! distribution and the entry derivatives at `x = 1`, and the sum rate is
//! that mean times the encoding rate.
//!
//! The closed forms assume a decoding threshold of at least one
//! (`R >= 1`); below that the collision split integrals no longer hold.
//! [`event_probabilities_mc`] estimates the same thirteen probabilities by
//! direct sampling and is valid for any positive rate, which makes it the
//! reference the closed forms are checked against.

use rand::Rng;

use crate::channel::{is_potential, sic_prefix_length};
use crate::error::{Error, Result};

/// Display labels for the three buffer states, in model order.
pub const STATE_LABELS: [&str; 3] = ["S0", "S2_2", "S2_1"];

/// Probabilities of the thirteen slot-activity events of the two-user
/// system. The first six partition all activity; the three `collision_*`
/// fields split `double_none` by how many of the two undecoded copies are
/// potential; the last four are the symmetric halves used by transitions
/// out of the single-potential state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventProbabilities {
    /// Nobody transmits.
    pub idle: f64,
    /// One user transmits and is decoded.
    pub single_success: f64,
    /// One user transmits and fails.
    pub single_failure: f64,
    /// Both transmit, both decoded in-slot.
    pub double_both: f64,
    /// Both transmit, exactly one decoded.
    pub double_one: f64,
    /// Both transmit, nothing decoded.
    pub double_none: f64,
    /// Collision with both copies potential.
    pub collision_pot2: f64,
    /// Collision with exactly one potential copy.
    pub collision_pot1: f64,
    /// Collision with no potential copy.
    pub collision_pot0: f64,
    /// A decoding slot whose decoded packet is not the buffered potential
    /// one, which the cancellation then frees as well (two recoveries).
    pub recover_other: f64,
    /// A decoding slot that decodes the buffered potential packet itself
    /// (one recovery; any residual copy is dead).
    pub recover_buffered: f64,
    /// Collision contributing a potential copy of a packet that was not
    /// potential before (single-potential state gains a second).
    pub collision_new_pot: f64,
    /// Collision leaving the set of potential packets unchanged.
    pub collision_same_pot: f64,
}

impl EventProbabilities {
    /// Residual of the six-way activity partition against one.
    pub fn activity_residual(&self) -> f64 {
        self.idle
            + self.single_success
            + self.single_failure
            + self.double_both
            + self.double_one
            + self.double_none
            - 1.0
    }

    /// Residual of the collision split against `double_none`.
    pub fn collision_residual(&self) -> f64 {
        self.collision_pot0 + self.collision_pot1 + self.collision_pot2 - self.double_none
    }

    /// Residuals of the four symmetric sub-event compositions.
    pub fn subevent_residuals(&self) -> [f64; 4] {
        let half = 0.5 * (self.single_success + self.double_one);
        [
            self.recover_buffered - half,
            self.recover_other - (half + self.double_both),
            self.collision_new_pot - (0.5 * self.collision_pot1 + self.collision_pot2),
            self.collision_same_pot - (0.5 * self.collision_pot1 + self.collision_pot0),
        ]
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let fields = [
            self.idle,
            self.single_success,
            self.single_failure,
            self.double_both,
            self.double_one,
            self.double_none,
            self.collision_pot2,
            self.collision_pot1,
            self.collision_pot0,
            self.recover_other,
            self.recover_buffered,
            self.collision_new_pot,
            self.collision_same_pot,
        ];
        for f in fields {
            if !(f >= -tol && f <= 1.0 + tol) {
                return Err(Error::Parameter(format!(
                    "event probability {f} outside [0, 1]"
                )));
            }
        }
        let mut worst = self.activity_residual().abs();
        worst = worst.max(self.collision_residual().abs());
        for r in self.subevent_residuals() {
            worst = worst.max(r.abs());
        }
        if worst > tol {
            return Err(Error::Parameter(format!(
                "event probabilities violate their partition identities (residual {worst:.3e})"
            )));
        }
        Ok(())
    }
}

/// Closed-form slot-event probabilities for two users.
///
/// `p` is the transmission probability, `rate` the encoding rate
/// (`rate >= 1` required) and `b_mean` the average linear SNR.
pub fn event_probabilities(p: f64, rate: f64, b_mean: f64) -> Result<EventProbabilities> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!(
            "transmission probability must lie in (0, 1], got {p}"
        )));
    }
    if !(b_mean > 0.0) || !b_mean.is_finite() {
        return Err(Error::Parameter(format!(
            "mean SNR must be positive and finite, got {b_mean}"
        )));
    }
    if !(rate >= 1.0) {
        return Err(Error::AnalyticalDomain { rate });
    }

    let rho = rate.exp2() - 1.0;
    // exponents as ratios first, so huge rho degrades to exact zeros
    let t1 = (-(rho / b_mean)).exp();
    let t2 = (-(rho / b_mean) * (2.0 + rho)).exp();
    let t3 = t1 * t1;
    let inv1p = 1.0 / (1.0 + rho);
    let rho_frac = 1.0 - inv1p;

    let q = 1.0 - p;
    let p2 = p * p;

    let idle = q * q;
    let single_success = 2.0 * p * q * t1;
    let single_failure = 2.0 * p * q * (1.0 - t1);
    let double_both = 2.0 * p2 * inv1p * t2;
    let double_one = 2.0 * p2 * inv1p * (t1 - t2);
    let double_none = p2 - 2.0 * p2 * inv1p * t1;
    let collision_pot2 = p2 * t3 - 2.0 * p2 * inv1p * t2;
    let collision_pot1 =
        2.0 * p2 * rho_frac * t1 - 2.0 * p2 * t3 + 2.0 * p2 * inv1p * t2;
    let collision_pot0 = p2 * (1.0 - t1) * (1.0 - t1);

    let recover_buffered = 0.5 * (single_success + double_one);
    let recover_other = recover_buffered + double_both;
    let collision_new_pot = 0.5 * collision_pot1 + collision_pot2;
    let collision_same_pot = 0.5 * collision_pot1 + collision_pot0;

    Ok(EventProbabilities {
        idle,
        single_success,
        single_failure,
        double_both,
        double_one,
        double_none,
        collision_pot2,
        collision_pot1,
        collision_pot0,
        recover_other,
        recover_buffered,
        collision_new_pot,
        collision_same_pot,
    })
}

/// Monte Carlo estimate of the same thirteen probabilities.
///
/// Each sample is one independent slot: two Bernoulli(`p`) activations,
/// exponential SNRs, the SIC prefix test, and a potentiality count for
/// undecoded collisions. Where the closed forms use the 1/2 symmetry
/// between the two users, the estimator attributes the event by a fair
/// coin. Valid for any `rate > 0`, so it serves as the oracle for the
/// closed forms on their `rate >= 1` domain.
pub fn event_probabilities_mc<R: Rng + ?Sized>(
    p: f64,
    rate: f64,
    b_mean: f64,
    n_samples: u64,
    rng: &mut R,
) -> Result<EventProbabilities> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "transmission probability must lie in [0, 1], got {p}"
        )));
    }
    if !(b_mean > 0.0) || !b_mean.is_finite() {
        return Err(Error::Parameter(format!(
            "mean SNR must be positive and finite, got {b_mean}"
        )));
    }
    if !(rate > 0.0) {
        return Err(Error::Parameter(format!(
            "rate must be positive, got {rate}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }

    let rho = rate.exp2() - 1.0;
    let mut counts = [0u64; 13];
    const IDLE: usize = 0;
    const SS: usize = 1;
    const SF: usize = 2;
    const DB: usize = 3;
    const D1: usize = 4;
    const D0: usize = 5;
    const C2: usize = 6;
    const C1: usize = 7;
    const C0: usize = 8;
    const RO: usize = 9;
    const RB: usize = 10;
    const CN: usize = 11;
    const CS: usize = 12;

    for _ in 0..n_samples {
        let mut snrs: Vec<f64> = Vec::with_capacity(2);
        for _ in 0..2 {
            if rng.gen::<f64>() < p {
                let u = 1.0 - rng.gen::<f64>();
                snrs.push(-b_mean * u.ln());
            }
        }
        let m = sic_prefix_length(&snrs, rho)?;
        match (snrs.len(), m) {
            (0, _) => counts[IDLE] += 1,
            (1, 1) => {
                counts[SS] += 1;
                if rng.gen::<f64>() < 0.5 {
                    counts[RB] += 1;
                } else {
                    counts[RO] += 1;
                }
            }
            (1, 0) => counts[SF] += 1,
            (2, 2) => {
                counts[DB] += 1;
                counts[RO] += 1;
            }
            (2, 1) => {
                counts[D1] += 1;
                if rng.gen::<f64>() < 0.5 {
                    counts[RB] += 1;
                } else {
                    counts[RO] += 1;
                }
            }
            (2, 0) => {
                counts[D0] += 1;
                let pots = snrs.iter().filter(|&&b| is_potential(b, rho)).count();
                match pots {
                    2 => {
                        counts[C2] += 1;
                        counts[CN] += 1;
                    }
                    1 => {
                        counts[C1] += 1;
                        if rng.gen::<f64>() < 0.5 {
                            counts[CN] += 1;
                        } else {
                            counts[CS] += 1;
                        }
                    }
                    _ => {
                        counts[C0] += 1;
                        counts[CS] += 1;
                    }
                }
            }
            _ => unreachable!("at most two copies per sample"),
        }
    }

    let n = n_samples as f64;
    let f = |i: usize| counts[i] as f64 / n;
    Ok(EventProbabilities {
        idle: f(IDLE),
        single_success: f(SS),
        single_failure: f(SF),
        double_both: f(DB),
        double_one: f(D1),
        double_none: f(D0),
        collision_pot2: f(C2),
        collision_pot1: f(C1),
        collision_pot0: f(C0),
        recover_other: f(RO),
        recover_buffered: f(RB),
        collision_new_pot: f(CN),
        collision_same_pot: f(CS),
    })
}

/// Transition entry: probability mass by number of packets recovered.
/// `coeffs[k]` is the probability of taking this transition while
/// recovering `k` packets; at most two packets move per slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransitionPolynomial {
    coeffs: [f64; 3],
}

impl TransitionPolynomial {
    pub fn new(coeffs: [f64; 3]) -> Self {
        TransitionPolynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        TransitionPolynomial { coeffs: [c, 0.0, 0.0] }
    }

    pub fn coeff(&self, power: usize) -> f64 {
        if power < 3 {
            self.coeffs[power]
        } else {
            0.0
        }
    }

    /// Total transition probability (evaluation at one).
    pub fn probability(&self) -> f64 {
        self.coeffs[0] + self.coeffs[1] + self.coeffs[2]
    }

    /// Expected recoveries carried by this transition (derivative at one).
    pub fn mean_recoveries(&self) -> f64 {
        self.coeffs[1] + 2.0 * self.coeffs[2]
    }
}

/// Which layout the single-potential row uses.
///
/// `Consistent` routes slots that change nothing (idle, lone failure,
/// collisions adding no potential) to the self loop and collisions that do
/// add a potential packet to the two-potential state. `Transposed` swaps
/// those two destinations; it is physically impossible (an idle slot cannot
/// add a potential packet to the buffer) and is retained only so the
/// simulator can demonstrate the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransitionLayout {
    #[default]
    Consistent,
    Transposed,
}

/// The three-state chain with per-transition recovery counts.
/// State order: `[S0, S2_2, S2_1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    entries: [[TransitionPolynomial; 3]; 3],
}

impl TransitionModel {
    /// Builds a model from raw entries. Rows must sum to one.
    pub fn from_entries(entries: [[TransitionPolynomial; 3]; 3]) -> Result<Self> {
        let model = TransitionModel { entries };
        model.check_rows(1e-9)?;
        Ok(model)
    }

    pub fn entry(&self, from: usize, to: usize) -> &TransitionPolynomial {
        &self.entries[from][to]
    }

    /// Plain stochastic matrix: every entry evaluated at one.
    pub fn stochastic_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = self.entries[i][j].probability();
            }
        }
        m
    }

    fn check_rows(&self, tol: f64) -> Result<()> {
        for (i, row) in self.entries.iter().enumerate() {
            let sum: f64 = row.iter().map(|e| e.probability()).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Parameter(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
            for e in row {
                for k in 0..3 {
                    if e.coeff(k) < -tol {
                        return Err(Error::Parameter(format!(
                            "negative transition mass in row {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Assembles the chain from slot-event probabilities, consistent layout.
pub fn build_transition_model(ev: &EventProbabilities) -> Result<TransitionModel> {
    build_transition_model_with(ev, TransitionLayout::Consistent)
}

/// Assembly with an explicit row layout, for model comparison.
pub fn build_transition_model_with(
    ev: &EventProbabilities,
    layout: TransitionLayout,
) -> Result<TransitionModel> {
    ev.validate(1e-9)?;

    let from_empty = [
        TransitionPolynomial::new([
            ev.idle + ev.single_failure + ev.collision_pot0,
            ev.single_success + ev.double_one,
            ev.double_both,
        ]),
        TransitionPolynomial::constant(ev.collision_pot2),
        TransitionPolynomial::constant(ev.collision_pot1),
    ];

    let from_two = [
        TransitionPolynomial::new([
            0.0,
            0.0,
            ev.single_success + ev.double_both + ev.double_one,
        ]),
        TransitionPolynomial::constant(ev.idle + ev.single_failure + ev.double_none),
        TransitionPolynomial::constant(0.0),
    ];

    let gain_potential = TransitionPolynomial::constant(ev.collision_new_pot);
    let hold = TransitionPolynomial::constant(ev.idle + ev.single_failure + ev.collision_same_pot);
    let (to_two, to_one) = match layout {
        TransitionLayout::Consistent => (gain_potential, hold),
        TransitionLayout::Transposed => (hold, gain_potential),
    };
    let from_one = [
        TransitionPolynomial::new([0.0, ev.recover_buffered, ev.recover_other]),
        to_two,
        to_one,
    ];

    TransitionModel::from_entries([from_empty, from_two, from_one])
}

/// Expected recoveries per transition: entrywise derivative at one.
pub fn throughput_matrix(model: &TransitionModel) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = model.entry(i, j).mean_recoveries();
        }
    }
    m
}

/// Stationary distribution of the chain started in `S0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub probabilities: [f64; 3],
}

/// Solves `v P = v` by direct elimination.
///
/// States that are unreachable from `S0` (entries exactly zero) are excluded
/// first, which resolves the reducible edge cases; the solution is validated
/// against the stationarity residual before it is returned.
pub fn steady_state(model: &TransitionModel) -> Result<SteadyState> {
    let p = model.stochastic_matrix();

    // reachability from S0 over strictly positive entries
    let mut reachable = [false; 3];
    reachable[0] = true;
    let mut frontier = vec![0usize];
    while let Some(i) = frontier.pop() {
        for j in 0..3 {
            if p[i][j] > 0.0 && !reachable[j] {
                reachable[j] = true;
                frontier.push(j);
            }
        }
    }
    let states: Vec<usize> = (0..3).filter(|&i| reachable[i]).collect();
    let n = states.len();

    // (P^T - I) restricted to the reachable states, last row replaced by
    // the normalization constraint
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for (r, &i) in states.iter().enumerate().take(n - 1) {
        for (c, &j) in states.iter().enumerate() {
            a[r][c] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
        a[r][n] = 0.0;
    }
    for c in 0..n {
        a[n - 1][c] = 1.0;
    }
    a[n - 1][n] = 1.0;

    // partial-pivot elimination
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numerical(
                "singular stationary system beyond reducibility handling".into(),
            ));
        }
        a.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0f64; n];
    for r in (0..n).rev() {
        let mut s = a[r][n];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }

    let mut v = [0.0f64; 3];
    for (r, &i) in states.iter().enumerate() {
        v[i] = x[r].max(0.0);
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("stationary solve produced no mass".into()));
    }
    for vi in &mut v {
        *vi /= total;
    }

    let mut residual: f64 = 0.0;
    for j in 0..3 {
        let vp: f64 = (0..3).map(|i| v[i] * p[i][j]).sum();
        residual = residual.max((vp - v[j]).abs());
    }
    if residual > 1e-10 {
        return Err(Error::Numerical(format!(
            "stationarity residual {residual:.3e} exceeds 1e-10"
        )));
    }

    Ok(SteadyState { probabilities: v })
}

/// Mean recoveries per slot and sum rate of the stationary two-user chain.
pub fn analytical_sum_rate(p: f64, rate: f64, b_mean: f64) -> Result<(f64, f64)> {
    let ev = event_probabilities(p, rate, b_mean)?;
    let model = build_transition_model(&ev)?;
    let v = steady_state(&model)?.probabilities;
    let tpm = throughput_matrix(&model);
    let mut throughput = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            throughput += v[i] * tpm[i][j];
        }
    }
    Ok((throughput, rate * throughput))
}
