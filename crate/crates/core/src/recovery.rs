//! Collision buffer and the cross-slot cancellation cascade.
//!
//! A slot whose SIC pass leaves undecoded copies is kept as a
//! [`BufferedSlot`]. When any packet is recovered later, its copies are
//! removed from every buffered slot, which lowers the interference seen by
//! the remaining copies; re-running in-slot detection may then free further
//! packets, and the process repeats until nothing changes.

use std::collections::BTreeSet;

use crate::channel::{is_potential, SnrSample};
use crate::error::{Error, Result};

/// Identity of one packet: owner plus per-user sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId {
    pub user: usize,
    pub sequence: u64,
}

impl PacketId {
    pub fn new(user: usize, sequence: u64) -> Self {
        PacketId { user, sequence }
    }
}

/// One received copy of a packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketCopy {
    pub id: PacketId,
    pub snr: SnrSample,
}

impl PacketCopy {
    pub fn new(id: PacketId, snr: SnrSample) -> Self {
        PacketCopy { id, snr }
    }

    fn b(&self) -> f64 {
        self.snr.value()
    }
}

/// Residual of one slot: the copies in-slot SIC could not decode.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedSlot {
    pub slot_index: u64,
    pub copies: Vec<PacketCopy>,
}

impl BufferedSlot {
    pub fn new(slot_index: u64, copies: Vec<PacketCopy>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &copies {
            if !seen.insert(c.id) {
                return Err(Error::Parameter(format!(
                    "duplicate packet {:?} within one slot",
                    c.id
                )));
            }
        }
        Ok(BufferedSlot { slot_index, copies })
    }

    /// True when at least one copy could still be decoded after
    /// cancellation of everything else.
    pub fn has_potential(&self, rho_th: f64) -> bool {
        self.copies.iter().any(|c| is_potential(c.b(), rho_th))
    }
}

/// All buffered residual slots, ordered by slot index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionBuffer {
    slots: Vec<BufferedSlot>,
}

impl CollisionBuffer {
    pub fn new() -> Self {
        CollisionBuffer::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[BufferedSlot] {
        &self.slots
    }

    pub fn total_copies(&self) -> usize {
        self.slots.iter().map(|s| s.copies.len()).sum()
    }

    /// Appends a residual slot. Indices must be strictly increasing.
    pub fn store(&mut self, slot: BufferedSlot) -> Result<()> {
        if let Some(last) = self.slots.last() {
            if slot.slot_index <= last.slot_index {
                return Err(Error::Parameter(format!(
                    "slot index {} not after {}",
                    slot.slot_index, last.slot_index
                )));
            }
        }
        self.slots.push(slot);
        Ok(())
    }

    /// Test and oracle constructor that accepts any slot labelling.
    pub fn from_slots(slots: Vec<BufferedSlot>) -> Self {
        CollisionBuffer { slots }
    }

    /// Distinct users owning at least one potential copy.
    pub fn potential_owners(&self, rho_th: f64) -> BTreeSet<usize> {
        let mut owners = BTreeSet::new();
        for slot in &self.slots {
            for c in &slot.copies {
                if is_potential(c.b(), rho_th) {
                    owners.insert(c.id.user);
                }
            }
        }
        owners
    }
}

/// In-slot SIC pass over one slot's copies.
///
/// Returns the recovered ids and the residual copies. Copies are decoded in
/// descending SNR order, ties broken toward the lower user index; the
/// decoded prefix ends at the first copy that fails its threshold test.
pub fn intra_slot_detect(copies: &[PacketCopy], rho_th: f64) -> (Vec<PacketId>, Vec<PacketCopy>) {
    debug_assert!(rho_th > 0.0);
    let mut sorted: Vec<PacketCopy> = copies.to_vec();
    sorted.sort_by(|x, y| {
        y.b()
            .partial_cmp(&x.b())
            .expect("finite SNRs")
            .then(x.id.user.cmp(&y.id.user))
    });

    let mut interference: f64 = sorted.iter().map(|c| c.b()).sum();
    let mut m = 0;
    for c in &sorted {
        interference -= c.b();
        if c.b() >= rho_th * (1.0 + interference) {
            m += 1;
        } else {
            break;
        }
    }
    let residual = sorted.split_off(m);
    (sorted.into_iter().map(|c| c.id).collect(), residual)
}

/// Removes every copy of the recovered packets; slots left empty disappear.
pub fn cross_slot_cancel(buffer: &mut CollisionBuffer, recovered: &BTreeSet<PacketId>) {
    if recovered.is_empty() {
        return;
    }
    for slot in &mut buffer.slots {
        slot.copies.retain(|c| !recovered.contains(&c.id));
    }
    buffer.slots.retain(|s| !s.copies.is_empty());
}

/// Iterates cancellation and re-detection to the fixpoint.
///
/// Each round removes the copies of everything recovered so far and then
/// re-runs in-slot detection on every buffered slot against the same buffer
/// snapshot, so the result does not depend on the order slots are scanned.
/// Returns the full recovered set, seed included.
pub fn recovery_cascade(
    buffer: &mut CollisionBuffer,
    recovered_seed: &BTreeSet<PacketId>,
    rho_th: f64,
) -> BTreeSet<PacketId> {
    let mut all: BTreeSet<PacketId> = recovered_seed.clone();
    let mut pending: BTreeSet<PacketId> = recovered_seed.clone();
    loop {
        cross_slot_cancel(buffer, &pending);
        pending = BTreeSet::new();
        for slot in &buffer.slots {
            let (ids, _) = intra_slot_detect(&slot.copies, rho_th);
            for id in ids {
                debug_assert!(!all.contains(&id), "packet recovered twice");
                pending.insert(id);
            }
        }
        if pending.is_empty() {
            return all;
        }
        all.extend(pending.iter().copied());
    }
}

/// Drops slots with no potential copy; they can never yield a recovery.
pub fn evict_dead_slots(buffer: &mut CollisionBuffer, rho_th: f64) {
    buffer.slots.retain(|s| s.has_potential(rho_th));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn id(user: usize, sequence: u64) -> PacketId {
        PacketId::new(user, sequence)
    }

    fn copy(user: usize, b: f64) -> PacketCopy {
        PacketCopy::new(id(user, 0), SnrSample::new(b).unwrap())
    }

    fn slot(index: u64, copies: Vec<PacketCopy>) -> BufferedSlot {
        BufferedSlot::new(index, copies).unwrap()
    }

    fn seed_set(ids: &[PacketId]) -> BTreeSet<PacketId> {
        ids.iter().copied().collect()
    }

    #[test]
    fn detect_recovers_strongest_only() {
        let (rec, res) = intra_slot_detect(&[copy(0, 10.0), copy(1, 0.5)], 1.0);
        assert_eq!(rec, vec![id(0, 0)]);
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].id, id(1, 0));
    }

    #[test]
    fn detect_recovers_both_at_boundary() {
        let (rec, res) = intra_slot_detect(&[copy(1, 1.0), copy(0, 3.0)], 1.0);
        assert_eq!(rec, vec![id(0, 0), id(1, 0)]);
        assert!(res.is_empty());
    }

    #[test]
    fn detect_handles_total_collision() {
        let (rec, res) = intra_slot_detect(&[copy(0, 0.5), copy(1, 0.4)], 1.0);
        assert!(rec.is_empty());
        assert_eq!(res.len(), 2);
    }

    #[test]
    fn detect_breaks_snr_ties_by_user_index() {
        // at this threshold both equal copies decode; order is by user index
        let (rec, _) = intra_slot_detect(&[copy(3, 5.0), copy(1, 5.0)], 0.5);
        assert_eq!(rec, vec![id(1, 0), id(3, 0)]);
    }

    #[test]
    fn cancel_removes_copies_and_empty_slots() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5), copy(1, 0.9)])).unwrap();
        buf.store(slot(3, vec![copy(0, 0.7)])).unwrap();
        cross_slot_cancel(&mut buf, &seed_set(&[id(0, 0)]));
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.slots()[0].copies.len(), 1);
        assert_eq!(buf.slots()[0].copies[0].id, id(1, 0));
    }

    #[test]
    fn cancel_with_absent_id_changes_nothing() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5), copy(1, 0.9)])).unwrap();
        let before = buf.clone();
        cross_slot_cancel(&mut buf, &seed_set(&[id(5, 9)]));
        assert_eq!(buf, before);
    }

    #[test]
    fn cancel_empty_set_is_noop() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5)])).unwrap();
        let before = buf.clone();
        cross_slot_cancel(&mut buf, &BTreeSet::new());
        assert_eq!(buf, before);
    }

    #[test]
    fn store_rejects_non_increasing_index() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(4, vec![copy(0, 1.5)])).unwrap();
        assert!(buf.store(slot(4, vec![copy(1, 1.5)])).is_err());
        assert!(buf.store(slot(2, vec![copy(1, 1.5)])).is_err());
    }

    #[test]
    fn slot_rejects_duplicate_ids() {
        assert!(BufferedSlot::new(0, vec![copy(0, 1.0), copy(0, 2.0)]).is_err());
    }

    #[test]
    fn cascade_frees_blocked_partner() {
        // {X: 1.5, Y: 0.9}; recovering Y elsewhere frees X
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5), copy(1, 0.9)])).unwrap();
        let all = recovery_cascade(&mut buf, &seed_set(&[id(1, 0)]), 1.0);
        assert_eq!(all, seed_set(&[id(0, 0), id(1, 0)]));
        assert!(buf.is_empty());
    }

    #[test]
    fn cascade_chains_across_slots() {
        // {A, B} and {B, C}: recovering A frees B, cancelling B frees C.
        let a = id(0, 0);
        let b = id(1, 0);
        let c = id(2, 0);
        let mut buf = CollisionBuffer::new();
        buf.store(slot(
            0,
            vec![
                PacketCopy::new(a, SnrSample::new(1.5).unwrap()),
                PacketCopy::new(b, SnrSample::new(1.2).unwrap()),
            ],
        ))
        .unwrap();
        buf.store(slot(
            1,
            vec![
                PacketCopy::new(b, SnrSample::new(1.4).unwrap()),
                PacketCopy::new(c, SnrSample::new(1.3).unwrap()),
            ],
        ))
        .unwrap();
        // both slots are at their in-slot fixpoint before the seed arrives
        for s in buf.slots() {
            let (rec, _) = intra_slot_detect(&s.copies, 1.0);
            assert!(rec.is_empty());
        }
        let all = recovery_cascade(&mut buf, &seed_set(&[a]), 1.0);
        assert_eq!(all, seed_set(&[a, b, c]));
        assert!(buf.is_empty());
    }

    #[test]
    fn cascade_with_empty_seed_on_fixpoint_buffer_is_noop() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5), copy(1, 0.9)])).unwrap();
        let before = buf.clone();
        let all = recovery_cascade(&mut buf, &BTreeSet::new(), 1.0);
        assert!(all.is_empty());
        assert_eq!(buf, before);
    }

    #[test]
    fn evict_drops_only_dead_slots() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 0.8), copy(1, 0.5)])).unwrap();
        buf.store(slot(1, vec![copy(0, 1.2), copy(1, 0.5)])).unwrap();
        evict_dead_slots(&mut buf, 1.0);
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.slots()[0].slot_index, 1);
    }

    #[test]
    fn evict_on_empty_buffer_is_noop() {
        let mut buf = CollisionBuffer::new();
        evict_dead_slots(&mut buf, 1.0);
        assert!(buf.is_empty());
    }

    // -- randomized structure for the cascade properties --

    fn random_buffer(rng: &mut ChaCha8Rng) -> CollisionBuffer {
        let n_slots = rng.gen_range(0..6);
        let mut slots = Vec::new();
        for i in 0..n_slots {
            let n_copies = rng.gen_range(1..5);
            let mut copies: Vec<PacketCopy> = Vec::new();
            for _ in 0..n_copies {
                let user = rng.gen_range(0..6usize);
                let seq = rng.gen_range(0..3u64);
                if copies.iter().any(|c| c.id == id(user, seq)) {
                    continue;
                }
                let mut b: f64 = rng.gen_range(0.01..30.0);
                if (b - 1.0).abs() < 1e-6 {
                    b += 0.01;
                }
                copies.push(PacketCopy::new(id(user, seq), SnrSample::new(b).unwrap()));
            }
            slots.push(BufferedSlot::new(i as u64, copies).unwrap());
        }
        CollisionBuffer::from_slots(slots)
    }

    fn random_seed_ids(rng: &mut ChaCha8Rng, buf: &CollisionBuffer) -> BTreeSet<PacketId> {
        let mut ids = BTreeSet::new();
        for s in buf.slots() {
            for c in &s.copies {
                if rng.gen::<f64>() < 0.3 {
                    ids.insert(c.id);
                }
            }
        }
        if rng.gen::<f64>() < 0.3 {
            ids.insert(id(17, 9));
        }
        ids
    }

    fn canonical(buf: &CollisionBuffer) -> Vec<Vec<(PacketId, u64)>> {
        let mut v: Vec<Vec<(PacketId, u64)>> = buf
            .slots()
            .iter()
            .map(|s| {
                let mut c: Vec<(PacketId, u64)> = s
                    .copies
                    .iter()
                    .map(|c| (c.id, c.snr.value().to_bits()))
                    .collect();
                c.sort();
                c
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn cascade_conservation_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..400 {
            let mut buf = random_buffer(&mut rng);
            let seed = random_seed_ids(&mut rng, &buf);
            let all = recovery_cascade(&mut buf, &seed, 1.0);
            assert!(all.is_superset(&seed));
            for s in buf.slots() {
                for c in &s.copies {
                    assert!(!all.contains(&c.id), "recovered id still buffered");
                }
            }
            // a second run with nothing new must change nothing
            let before = buf.clone();
            let again = recovery_cascade(&mut buf, &BTreeSet::new(), 1.0);
            assert!(again.is_empty());
            assert_eq!(buf, before);
        }
    }

    #[test]
    fn cascade_is_monotone_in_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..400 {
            let buf = random_buffer(&mut rng);
            let s1 = random_seed_ids(&mut rng, &buf);
            let mut s2 = s1.clone();
            s2.extend(random_seed_ids(&mut rng, &buf));

            let mut b1 = buf.clone();
            let mut b2 = buf;
            let a1 = recovery_cascade(&mut b1, &s1, 1.0);
            let a2 = recovery_cascade(&mut b2, &s2, 1.0);
            assert!(a2.is_superset(&a1), "larger seed lost recoveries");
        }
    }

    #[test]
    fn cascade_is_scan_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..400 {
            let buf = random_buffer(&mut rng);
            let seed = random_seed_ids(&mut rng, &buf);

            let mut shuffled_slots = buf.slots().to_vec();
            for i in (1..shuffled_slots.len()).rev() {
                let j = rng.gen_range(0..=i);
                shuffled_slots.swap(i, j);
            }
            let mut shuffled = CollisionBuffer::from_slots(shuffled_slots);

            let mut plain = buf;
            let a1 = recovery_cascade(&mut plain, &seed, 1.0);
            let a2 = recovery_cascade(&mut shuffled, &seed, 1.0);
            assert_eq!(a1, a2);
            assert_eq!(canonical(&plain), canonical(&shuffled));
        }
    }

    #[test]
    fn eviction_never_changes_cascade_outcome() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..400 {
            let buf = random_buffer(&mut rng);
            let seed = random_seed_ids(&mut rng, &buf);

            let mut evicted = buf.clone();
            evict_dead_slots(&mut evicted, 1.0);
            let mut plain = buf;

            let a1 = recovery_cascade(&mut plain, &seed, 1.0);
            let a2 = recovery_cascade(&mut evicted, &seed, 1.0);
            assert_eq!(a1, a2, "eviction changed the recovered set");
        }
    }

    #[test]
    fn potential_owners_counts_distinct_users() {
        let mut buf = CollisionBuffer::new();
        buf.store(slot(0, vec![copy(0, 1.5), copy(1, 0.9)])).unwrap();
        buf.store(slot(1, vec![PacketCopy::new(id(0, 1), SnrSample::new(2.0).unwrap())]))
            .unwrap();
        let owners = buf.potential_owners(1.0);
        assert_eq!(owners.into_iter().collect::<Vec<_>>(), vec![0]);
    }
}
