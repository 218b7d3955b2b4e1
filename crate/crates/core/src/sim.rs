//! Slot-by-slot simulation of the random-access system.
//!
//! Each user holds an endless queue of packets and transmits its current
//! one with probability `p` per slot. The receiver runs in-slot SIC, stores
//! any residual as a buffered slot, and feeds the newly decoded packets into
//! the cross-slot cancellation cascade; slots whose remaining copies can
//! never be decoded are evicted afterwards. Experiments are reproducible:
//! every random draw comes from a counter-based stream seeded per
//! experiment, and the parallel runner yields bit-identical results to a
//! serial one.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{is_potential, sample_snr, Scheme, SystemConfig};
use crate::error::{Error, Result};
use crate::recovery::{
    evict_dead_slots, intra_slot_detect, recovery_cascade, BufferedSlot, CollisionBuffer,
    PacketCopy, PacketId,
};

/// Per-user bookkeeping: the packet currently at the head of the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserState {
    pub user: usize,
    /// Sequence number of the current head-of-queue packet.
    pub sequence: u64,
    /// True when the current packet has failed at least once.
    pub backlogged: bool,
    /// True once the current packet has been transmitted at least once.
    attempted: bool,
}

impl UserState {
    fn new(user: usize) -> Self {
        UserState {
            user,
            sequence: 0,
            backlogged: false,
            attempted: false,
        }
    }

    fn current_packet(&self) -> PacketId {
        PacketId::new(self.user, self.sequence)
    }
}

/// Buffer summary used by the two-user chain comparison: number of distinct
/// packets in the buffer that could still be decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferState {
    /// No potential packet buffered.
    Empty,
    /// Two distinct potential packets.
    TwoPotential,
    /// Exactly one potential packet.
    OnePotential,
}

impl BufferState {
    /// Index in chain order (`S0`, `S2_2`, `S2_1`).
    pub fn index(&self) -> usize {
        match self {
            BufferState::Empty => 0,
            BufferState::TwoPotential => 1,
            BufferState::OnePotential => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BufferState::Empty => "S0",
            BufferState::TwoPotential => "S2_2",
            BufferState::OnePotential => "S2_1",
        }
    }
}

impl std::fmt::Display for BufferState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Classifies a buffer by its number of distinct potential packets.
/// Only defined up to two; more means the system has more than two users.
pub fn classify_buffer_state(buffer: &CollisionBuffer, rho_th: f64) -> Result<BufferState> {
    let mut ids = BTreeSet::new();
    for slot in buffer.slots() {
        for c in &slot.copies {
            if is_potential(c.snr.value(), rho_th) {
                ids.insert(c.id);
            }
        }
    }
    match ids.len() {
        0 => Ok(BufferState::Empty),
        1 => Ok(BufferState::OnePotential),
        2 => Ok(BufferState::TwoPotential),
        n => Err(Error::Parameter(format!(
            "{n} distinct potential packets; the three-state summary covers two users only"
        ))),
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot: u64,
    /// Copies transmitted this slot.
    pub transmitted: usize,
    /// Every packet recovered this slot (in-slot and cascade), sorted.
    pub recovered: Vec<PacketId>,
    /// Buffered slots right after the cascade, before eviction.
    pub buffered_slots: usize,
    /// Buffer classification after the slot (two-user systems only).
    pub state: Option<BufferState>,
}

/// One running experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SystemConfig,
    rho_th: f64,
    b_mean: f64,
    users: Vec<UserState>,
    buffer: CollisionBuffer,
    rng: ChaCha8Rng,
    slot_index: u64,
}

impl Simulation {
    pub fn new(config: &SystemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rho_th = config.thresholds()?.rho_th();
        Ok(Simulation {
            config: config.clone(),
            rho_th,
            b_mean: config.snr_linear(),
            users: (0..config.users).map(UserState::new).collect(),
            buffer: CollisionBuffer::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            slot_index: 0,
        })
    }

    pub fn buffer(&self) -> &CollisionBuffer {
        &self.buffer
    }

    pub fn user_states(&self) -> &[UserState] {
        &self.users
    }

    /// Advances one slot: draw activity and fades, then process.
    ///
    /// The draw order is fixed (per user in index order: one activity draw,
    /// then one fade draw if active) and never depends on scheme or buffer
    /// state, so runs of different schemes under one seed see identical
    /// channels.
    pub fn step(&mut self) -> Result<SlotReport> {
        let mut copies = Vec::new();
        for u in 0..self.users.len() {
            if self.rng.gen::<f64>() < self.config.p {
                let snr = sample_snr(&mut self.rng, self.b_mean)?;
                copies.push(PacketCopy::new(self.users[u].current_packet(), snr));
            }
        }
        self.apply_slot(copies)
    }

    /// Processes one slot's copies: SIC, buffering, cascade, eviction, acks.
    pub(crate) fn apply_slot(&mut self, copies: Vec<PacketCopy>) -> Result<SlotReport> {
        let slot = self.slot_index;
        self.slot_index += 1;

        let transmitted = copies.len();
        let transmitters: Vec<usize> = copies.iter().map(|c| c.id.user).collect();
        for &u in &transmitters {
            debug_assert_eq!(
                copies.iter().find(|c| c.id.user == u).unwrap().id.sequence,
                self.users[u].sequence,
                "user transmitted a packet that is not at its queue head"
            );
            self.users[u].attempted = true;
        }

        let (decoded, residual) = intra_slot_detect(&copies, self.rho_th);

        let recovered_set: BTreeSet<PacketId>;
        let buffered_slots;
        match self.config.scheme {
            Scheme::IntraOnly => {
                recovered_set = decoded.into_iter().collect();
                buffered_slots = 0;
            }
            Scheme::CrossSlot => {
                // Buffer the residual before cascading so recoveries seeded
                // by this slot can also cancel copies inside this slot.
                if !residual.is_empty() {
                    self.buffer.store(BufferedSlot::new(slot, residual)?)?;
                }
                if decoded.is_empty() {
                    // The buffer is always left at its detection fixpoint,
                    // so without new recoveries nothing can move.
                    recovered_set = BTreeSet::new();
                } else {
                    let seed: BTreeSet<PacketId> = decoded.into_iter().collect();
                    recovered_set = recovery_cascade(&mut self.buffer, &seed, self.rho_th);
                }
                buffered_slots = self.buffer.len();
                evict_dead_slots(&mut self.buffer, self.rho_th);
            }
        }

        for id in &recovered_set {
            let st = &mut self.users[id.user];
            debug_assert_eq!(st.sequence, id.sequence, "stale packet recovered");
            st.sequence += 1;
            st.backlogged = false;
            st.attempted = false;
        }
        for &u in &transmitters {
            if self.users[u].attempted {
                self.users[u].backlogged = true;
            }
        }

        let state = if self.config.users == 2 {
            Some(classify_buffer_state(&self.buffer, self.rho_th)?)
        } else {
            None
        };

        Ok(SlotReport {
            slot,
            transmitted,
            recovered: recovered_set.into_iter().collect(),
            buffered_slots,
            state,
        })
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub recovered_packets: u64,
    /// Distinct packets transmitted at least once; recoveries cannot exceed
    /// this.
    pub distinct_transmitted: u64,
    /// Recovered packets per slot.
    pub throughput: f64,
    /// Throughput times the encoding rate.
    pub sum_rate: f64,
    /// Mean buffered slots, sampled after each cascade and before eviction.
    pub mean_buffer_occupancy: f64,
    /// Fraction of slots ending in each buffer state (two-user runs only).
    pub state_histogram: Option<[f64; 3]>,
}

/// Runs one full experiment with an explicit stream seed.
pub fn run_experiment(config: &SystemConfig, seed: u64) -> Result<SimMetrics> {
    let mut sim = Simulation::new(config, seed)?;
    let mut recovered: u64 = 0;
    let mut occupancy_sum: u64 = 0;
    let mut state_counts = [0u64; 3];

    for _ in 0..config.n_slots {
        let report = sim.step()?;
        recovered += report.recovered.len() as u64;
        occupancy_sum += report.buffered_slots as u64;
        if let Some(s) = report.state {
            state_counts[s.index()] += 1;
        }
    }

    let distinct_transmitted: u64 = sim
        .users
        .iter()
        .map(|u| u.sequence + u64::from(u.attempted))
        .sum();
    debug_assert!(recovered <= distinct_transmitted);

    let slots = config.n_slots as f64;
    let throughput = recovered as f64 / slots;
    Ok(SimMetrics {
        recovered_packets: recovered,
        distinct_transmitted,
        throughput,
        sum_rate: config.rate * throughput,
        mean_buffer_occupancy: occupancy_sum as f64 / slots,
        state_histogram: (config.users == 2).then(|| state_counts.map(|c| c as f64 / slots)),
    })
}

/// Sample mean with its standard error (absent for a single sample).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl MeanStderr {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n > 0, "no samples");
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        });
        MeanStderr { mean, stderr }
    }
}

/// Averages over all experiments of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_experiments: usize,
    pub throughput: MeanStderr,
    pub sum_rate: MeanStderr,
    pub buffer_occupancy: MeanStderr,
    pub state_histogram: Option<[MeanStderr; 3]>,
}

/// Derives the seed of experiment `index` from the master seed.
///
/// SplitMix64 over `master + (index + 1) * golden`, so experiment streams
/// are decorrelated while staying reproducible from one number.
pub fn experiment_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn summarize(config: &SystemConfig, metrics: Vec<SimMetrics>) -> MonteCarloSummary {
    let collect = |f: fn(&SimMetrics) -> f64| -> Vec<f64> { metrics.iter().map(f).collect() };
    let histogram = (config.users == 2).then(|| {
        let mut per_state = [const { Vec::new() }; 3];
        for m in &metrics {
            let h = m.state_histogram.expect("two-user run carries a histogram");
            for (dst, v) in per_state.iter_mut().zip(h) {
                dst.push(v);
            }
        }
        per_state.map(|v| MeanStderr::from_samples(&v))
    });
    MonteCarloSummary {
        n_experiments: metrics.len(),
        throughput: MeanStderr::from_samples(&collect(|m| m.throughput)),
        sum_rate: MeanStderr::from_samples(&collect(|m| m.sum_rate)),
        buffer_occupancy: MeanStderr::from_samples(&collect(|m| m.mean_buffer_occupancy)),
        state_histogram: histogram,
    }
}

/// Runs all experiments of a configuration in parallel.
///
/// Seeds are assigned by experiment index before the work is distributed,
/// and results are collected in index order, so the summary is bit-identical
/// to [`run_monte_carlo_serial`].
pub fn run_monte_carlo(config: &SystemConfig) -> Result<MonteCarloSummary> {
    config.validate()?;
    let metrics: Vec<SimMetrics> = (0..config.n_experiments as u64)
        .into_par_iter()
        .map(|i| run_experiment(config, experiment_seed(config.seed, i)))
        .collect::<Result<_>>()?;
    Ok(summarize(config, metrics))
}

/// Single-threaded reference runner with identical output.
pub fn run_monte_carlo_serial(config: &SystemConfig) -> Result<MonteCarloSummary> {
    config.validate()?;
    let metrics: Vec<SimMetrics> = (0..config.n_experiments as u64)
        .map(|i| run_experiment(config, experiment_seed(config.seed, i)))
        .collect::<Result<_>>()?;
    Ok(summarize(config, metrics))
}
