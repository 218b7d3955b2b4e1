//! Random uplink NOMA with cross-slot interference cancellation.
//!
//! K users share one channel. In every slot each user transmits with
//! probability `p` at a fixed encoding rate `R`; collisions are not discarded
//! but kept in a buffer, and whenever a packet is recovered its copies are
//! cancelled from all buffered slots, which can free further packets.
//!
//! The crate provides three layers:
//!
//! * [`sim`] - slot-level Monte Carlo simulation of the full protocol for
//!   arbitrary K,
//! * [`markov`] - the closed-form two-user Markov chain (slot-activity event
//!   probabilities, transition polynomials, steady state, sum rate),
//! * [`optim`] - grid search over `(p, R)` maximizing the sum rate, with an
//!   analytical backend for K = 2 and a simulation backend for any K.
//!
//! [`channel`] holds the fading and SIC primitives shared by all layers, and
//! [`recovery`] the collision buffer with the cancellation cascade.

pub mod channel;
pub mod error;
pub mod markov;
pub mod optim;
pub mod recovery;
pub mod sim;

pub use channel::{sic_prefix_length, SnrSample, SystemConfig, Scheme, Thresholds};
pub use error::{Error, Result};
pub use markov::{
    analytical_sum_rate, build_transition_model, build_transition_model_with,
    event_probabilities, event_probabilities_mc, steady_state, throughput_matrix,
    EventProbabilities, SteadyState, TransitionLayout, TransitionModel, TransitionPolynomial,
    STATE_LABELS,
};
pub use optim::{
    build_lookup_table, grid_axis, grid_search_analytical, grid_search_simulated, sweep_k,
    GridSpec, OptimizationResult, SearchMethod, SweepRow, SweepVariant, LOOKUP_TABLE_HEADER,
};
pub use recovery::{
    cross_slot_cancel, evict_dead_slots, intra_slot_detect, recovery_cascade, BufferedSlot,
    CollisionBuffer, PacketCopy, PacketId,
};
pub use sim::{
    classify_buffer_state, experiment_seed, run_experiment, run_monte_carlo,
    run_monte_carlo_serial, BufferState, MeanStderr, MonteCarloSummary, SimMetrics, Simulation,
    SlotReport, UserState,
};
