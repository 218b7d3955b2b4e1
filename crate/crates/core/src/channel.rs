//! Fading model and the SIC decoding conditions.
//!
//! Every transmission attempt sees an independent Rayleigh fade, so the
//! received SNR of one packet copy is exponential with mean `B` (the average
//! SNR, `10^(snr_db/10)` with unit transmit power). A receiver decoding a
//! slot applies successive interference cancellation in descending SNR
//! order: the copy currently decoded must clear the threshold
//! `rho_th = 2^R - 1` against the sum of all weaker copies plus noise.

use rand::Rng;

use crate::error::{Error, Result};

/// Transmission scheme simulated for a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Failed slots are buffered; recovered packets are cancelled from the
    /// buffer, which can free further packets (the full protocol).
    CrossSlot,
    /// Only in-slot SIC; residual collisions are discarded.
    IntraOnly,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::CrossSlot => "cross-slot",
            Scheme::IntraOnly => "intra-only",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-slot" => Ok(Scheme::CrossSlot),
            "intra-only" => Ok(Scheme::IntraOnly),
            other => Err(Error::Parameter(format!(
                "unknown scheme '{other}' (expected 'cross-slot' or 'intra-only')"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full description of one simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of users K.
    pub users: usize,
    /// Average received SNR in dB.
    pub snr_db: f64,
    /// Per-slot transmission probability.
    pub p: f64,
    /// Encoding rate R in bit/s/Hz.
    pub rate: f64,
    /// Slots per experiment.
    pub n_slots: u64,
    /// Independent experiments to average over.
    pub n_experiments: usize,
    /// Master seed; per-experiment seeds are derived from it.
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            users: 2,
            snr_db: 25.0,
            p: 0.5,
            rate: 2.0,
            n_slots: 200,
            n_experiments: 1000,
            seed: 1,
            scheme: Scheme::CrossSlot,
        }
    }
}

impl SystemConfig {
    /// Average SNR on the linear scale.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        Thresholds::from_rate(self.rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::Parameter("users must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Parameter(format!(
                "transmission probability must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "rate must be positive and finite, got {}",
                self.rate
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Parameter(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )));
        }
        if self.n_slots == 0 {
            return Err(Error::Parameter("n_slots must be at least 1".into()));
        }
        if self.n_experiments == 0 {
            return Err(Error::Parameter("n_experiments must be at least 1".into()));
        }
        Ok(())
    }
}

/// Decoding threshold derived from the encoding rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    rho_th: f64,
}

impl Thresholds {
    /// `rho_th = 2^R - 1`.
    pub fn from_rate(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || rate.is_nan() {
            return Err(Error::Parameter(format!(
                "rate must be positive, got {rate}"
            )));
        }
        Ok(Thresholds {
            rho_th: rate.exp2() - 1.0,
        })
    }

    pub fn rho_th(&self) -> f64 {
        self.rho_th
    }
}

/// Received SNR of one packet copy. Non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSample {
    b: f64,
}

impl SnrSample {
    pub fn new(b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Parameter(format!(
                "SNR sample must be finite and non-negative, got {b}"
            )));
        }
        Ok(SnrSample { b })
    }

    pub fn value(&self) -> f64 {
        self.b
    }
}

/// Inverse-CDF map from a uniform draw on (0, 1] to an exponential SNR with
/// mean `b_mean`. `u = 1` maps to zero SNR.
pub(crate) fn snr_from_uniform(u: f64, b_mean: f64) -> f64 {
    debug_assert!(u > 0.0 && u <= 1.0);
    -b_mean * u.ln()
}

/// Draws one received SNR, exponential with mean `b_mean`.
pub fn sample_snr<R: Rng + ?Sized>(rng: &mut R, b_mean: f64) -> Result<SnrSample> {
    if !(b_mean > 0.0) || !b_mean.is_finite() {
        return Err(Error::Parameter(format!(
            "mean SNR must be positive and finite, got {b_mean}"
        )));
    }
    // gen::<f64>() covers [0, 1); flip it so the log argument stays positive.
    let u = 1.0 - rng.gen::<f64>();
    SnrSample::new(snr_from_uniform(u, b_mean))
}

/// True when a copy could be decoded once all interference is gone.
///
/// Strict comparison: the in-slot decoding test uses `>=`, so the two differ
/// only at `b == rho_th` exactly, which has probability zero under the
/// continuous fading model.
pub fn is_potential(b: f64, rho_th: f64) -> bool {
    b > rho_th
}

/// Number of copies recovered by in-slot SIC.
///
/// Copies are processed in descending SNR order; copy `k` is recovered when
/// `b_(k) >= rho_th * (1 + sum of all weaker copies)`. The scan stops at the
/// first failure, so the result is the length of the maximal decodable
/// prefix.
pub fn sic_prefix_length(snrs: &[f64], rho_th: f64) -> Result<usize> {
    debug_assert!(rho_th > 0.0);
    for &b in snrs {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Parameter(format!(
                "SNR values must be finite and non-negative, got {b}"
            )));
        }
    }
    let mut sorted: Vec<f64> = snrs.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite SNRs"));

    let mut interference: f64 = sorted.iter().sum();
    let mut m = 0;
    for &b in &sorted {
        interference -= b;
        if b >= rho_th * (1.0 + interference) {
            m += 1;
        } else {
            break;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_from_rate() {
        let t = Thresholds::from_rate(1.0).unwrap();
        assert_eq!(t.rho_th(), 1.0);
        let t = Thresholds::from_rate(3.0).unwrap();
        assert_eq!(t.rho_th(), 7.0);
        assert!(Thresholds::from_rate(0.0).is_err());
        assert!(Thresholds::from_rate(-1.0).is_err());
    }

    #[test]
    fn uniform_boundary_maps_to_zero_snr() {
        assert_eq!(snr_from_uniform(1.0, 316.0), 0.0);
        let b = snr_from_uniform((-1.0f64).exp(), 10.0);
        assert!((b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sample_snr_rejects_bad_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_snr(&mut rng, 0.0).is_err());
        assert!(sample_snr(&mut rng, -3.0).is_err());
        assert!(sample_snr(&mut rng, f64::INFINITY).is_err());
    }

    #[test]
    fn sample_mean_matches_configured_mean() {
        let b_mean = 316.227766;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_snr(&mut rng, b_mean).unwrap().value();
        }
        let mean = sum / n as f64;
        // three sigma of the sample mean is b_mean * 3 / sqrt(n) ~ 0.95
        assert!(
            (mean - b_mean).abs() < 1.0,
            "sample mean {mean} too far from {b_mean}"
        );
    }

    #[test]
    fn sample_distribution_is_exponential() {
        // Kolmogorov-Smirnov against the exponential CDF at the 1% level.
        let b_mean = 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_snr(&mut rng, b_mean).unwrap().value())
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let f = 1.0 - (-x / b_mean).exp();
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((f - lo).abs()).max((hi - f).abs());
        }
        let critical = 1.6276 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }

    #[test]
    fn prefix_single_strong_copy() {
        assert_eq!(sic_prefix_length(&[10.0, 0.5], 1.0).unwrap(), 1);
    }

    #[test]
    fn prefix_boundary_is_inclusive() {
        // weakest copy sits exactly on the threshold
        assert_eq!(sic_prefix_length(&[3.0, 1.0], 1.0).unwrap(), 2);
    }

    #[test]
    fn prefix_total_failure() {
        assert_eq!(sic_prefix_length(&[0.5, 0.4], 1.0).unwrap(), 0);
    }

    #[test]
    fn prefix_empty_slot() {
        assert_eq!(sic_prefix_length(&[], 1.0).unwrap(), 0);
    }

    #[test]
    fn prefix_rejects_negative_snr() {
        assert!(sic_prefix_length(&[1.0, -0.1], 1.0).is_err());
    }

    #[test]
    fn prefix_stops_at_first_failure() {
        // middle copy fails even though the weakest would pass alone
        assert_eq!(sic_prefix_length(&[10.0, 0.5, 1.2], 1.0).unwrap(), 1);
    }

    #[test]
    fn potentiality_is_strict() {
        assert!(!is_potential(1.0, 1.0));
        assert!(is_potential(1.0 + 1e-12, 1.0));
        assert!(!is_potential(0.3, 1.0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SystemConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.p = 0.0;
        assert!(cfg.validate().is_err());
        cfg.p = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.rate = -2.0;
        assert!(cfg.validate().is_err());
        cfg.rate = 6.0;
        cfg.users = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn linear_snr_conversion() {
        let cfg = SystemConfig {
            snr_db: 25.0,
            ..SystemConfig::default()
        };
        assert!((cfg.snr_linear() - 316.22776601683796).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn prefix_is_permutation_invariant(
            mut xs in proptest::collection::vec(0.0f64..50.0, 0..8),
            seed in 0u64..1000,
        ) {
            let rho = 1.0;
            let m = sic_prefix_length(&xs, rho).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..4 {
                for i in (1..xs.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    xs.swap(i, j);
                }
                proptest::prop_assert_eq!(sic_prefix_length(&xs, rho).unwrap(), m);
            }
        }

        #[test]
        fn removing_interference_never_hurts_survivors(
            xs in proptest::collection::vec(0.01f64..50.0, 1..8),
            removed in 0usize..8,
        ) {
            let rho = 1.0;
            let removed = removed % xs.len();
            let m_full = sic_prefix_length(&xs, rho).unwrap();

            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let recovered: Vec<f64> = sorted[..m_full].to_vec();
            // count how many of the recovered values remain after removal
            let mut remaining_recovered = recovered.len();
            if recovered.contains(&xs[removed]) {
                remaining_recovered -= 1;
            }

            let mut reduced = xs.clone();
            reduced.remove(removed);
            let m_reduced = sic_prefix_length(&reduced, rho).unwrap();
            proptest::prop_assert!(
                m_reduced >= remaining_recovered,
                "m dropped from {} (minus removal) to {}", m_full, m_reduced
            );
        }
    }
}
