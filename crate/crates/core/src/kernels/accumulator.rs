use crate::semiring::Semiring;

const EMPTY: usize = usize::MAX;
const HASH_MULT: u64 = 0x9E37_79B9_7F4A_7C15;
const MIN_CAPACITY: usize = 16;

/// Open-addressing accumulator keyed by row index.
///
/// Capacity is a power of two and occupancy never exceeds half of it.
/// Entries are emitted in first-insertion order, which makes the output a
/// function of the input order alone.
#[derive(Debug, Clone)]
pub struct HashAccumulator<T> {
    keys: Vec<usize>,
    slot_entry: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<T>,
    slots_used: Vec<usize>,
    shift: u32,
}

impl<T: Copy> HashAccumulator<T> {
    /// Sized for about `estimate` distinct keys without growing.
    pub fn with_estimate(estimate: usize) -> Self {
        let mut acc = HashAccumulator {
            keys: Vec::new(),
            slot_entry: Vec::new(),
            rows: Vec::new(),
            vals: Vec::new(),
            slots_used: Vec::new(),
            shift: 64,
        };
        acc.allocate(capacity_for(estimate));
        acc
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    pub fn occupancy(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Clears all entries and ensures room for `estimate` keys.
    pub fn reset(&mut self, estimate: usize) {
        let want = capacity_for(estimate);
        if want > self.keys.len() {
            self.allocate(want);
        } else {
            for &s in &self.slots_used {
                self.keys[s] = EMPTY;
            }
        }
        self.slots_used.clear();
        self.rows.clear();
        self.vals.clear();
    }

    fn allocate(&mut self, capacity: usize) {
        debug_assert!(capacity.is_power_of_two());
        self.keys = vec![EMPTY; capacity];
        self.slot_entry = vec![0; capacity];
        self.shift = 64 - capacity.trailing_zeros();
        self.slots_used.clear();
    }

    #[inline]
    fn home(&self, key: usize) -> usize {
        ((key as u64).wrapping_mul(HASH_MULT) >> self.shift) as usize
    }

    // Returns (slot, found).
    #[inline]
    fn probe(&self, key: usize) -> (usize, bool) {
        let mask = self.keys.len() - 1;
        let mut s = self.home(key);
        loop {
            let k = self.keys[s];
            if k == key {
                return (s, true);
            }
            if k == EMPTY {
                return (s, false);
            }
            s = (s + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let capacity = self.keys.len() * 2;
        self.allocate(capacity);
        for (e, &row) in self.rows.iter().enumerate() {
            let (s, _) = self.probe(row);
            self.keys[s] = row;
            self.slot_entry[s] = e;
            self.slots_used.push(s);
        }
    }

    fn insert_new(&mut self, slot: usize, key: usize, val: T) {
        self.keys[slot] = key;
        self.slot_entry[slot] = self.rows.len();
        self.slots_used.push(slot);
        self.rows.push(key);
        self.vals.push(val);
        if 2 * self.rows.len() > self.keys.len() {
            self.grow();
        }
    }

    /// Adds `val` into the entry for `key` with the semiring's addition.
    #[inline]
    pub fn accumulate<S: Semiring<Elem = T>>(&mut self, key: usize, val: T, sr: S) {
        let (s, found) = self.probe(key);
        if found {
            let e = self.slot_entry[s];
            self.vals[e] = sr.add(self.vals[e], val);
        } else {
            self.insert_new(s, key, val);
        }
    }

    /// Inserts `key` if absent; returns true when it was new.
    #[inline]
    pub fn insert_key(&mut self, key: usize, placeholder: T) -> bool {
        let (s, found) = self.probe(key);
        if !found {
            self.insert_new(s, key, placeholder);
        }
        !found
    }

    pub fn get(&self, key: usize) -> Option<T> {
        let (s, found) = self.probe(key);
        found.then(|| self.vals[self.slot_entry[s]])
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.rows.iter().copied().zip(self.vals.iter().copied())
    }

    /// Appends entries in insertion order, skipping those `keep` rejects.
    pub fn drain_into(&mut self, rows: &mut Vec<usize>, vals: &mut Vec<T>, keep: impl Fn(T) -> bool) {
        for (&r, &v) in self.rows.iter().zip(&self.vals) {
            if keep(v) {
                rows.push(r);
                vals.push(v);
            }
        }
        self.reset(0);
    }
}

fn capacity_for(estimate: usize) -> usize {
    estimate
        .saturating_mul(2)
        .max(MIN_CAPACITY)
        .checked_next_power_of_two()
        .expect("accumulator capacity overflow")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::PlusTimes;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn capacity_is_power_of_two_and_at_least_twice_estimate() {
        for est in [0, 1, 7, 8, 9, 100, 1000] {
            let acc = HashAccumulator::<i64>::with_estimate(est);
            assert!(acc.capacity().is_power_of_two());
            assert!(acc.capacity() >= 2 * est);
        }
    }

    proptest! {
        #[test]
        fn behaves_like_a_map(ops in proptest::collection::vec((0usize..500, -10i64..10), 0..400), est in 0usize..50) {
            let sr = PlusTimes::<i64>::new();
            let mut acc = HashAccumulator::with_estimate(est);
            let mut reference = BTreeMap::new();
            let mut first_seen = Vec::new();
            for &(k, v) in &ops {
                acc.accumulate(k, v, sr);
                if !reference.contains_key(&k) {
                    first_seen.push(k);
                }
                *reference.entry(k).or_insert(0) += v;
                prop_assert!(2 * acc.occupancy() <= acc.capacity());
            }
            for (&k, &v) in &reference {
                prop_assert_eq!(acc.get(k), Some(v));
            }
            let order: Vec<usize> = acc.entries().map(|(k, _)| k).collect();
            prop_assert_eq!(order, first_seen);
            acc.reset(3);
            prop_assert!(acc.is_empty());
            for &(k, _) in &ops {
                prop_assert_eq!(acc.get(k), None);
            }
        }
    }
}
