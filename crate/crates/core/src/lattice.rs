//! Microscopic occupation state and jump counters.
//!
//! Sites run from `-N` to `N`. The state keeps the set of active bonds, the
//! bonds whose endpoints disagree, in a swap-remove index so the event loop
//! can insert, remove, and uniformly sample in constant time. Counters track
//! rightward and leftward jumps per bond, including the two boundary
//! channels, and expose the conservation and homogeneity audits.

use rand::Rng;

const NO_POSITION: u32 = u32::MAX;

/// Occupation configuration with an active-bond index.
#[derive(Debug, Clone)]
pub struct LatticeState {
    n: usize,
    occupation: Vec<u8>,
    /// Bond slots for bonds `x = -N..N-1`, indexed by `x + N`.
    active: Vec<u32>,
    position: Vec<u32>,
}

impl LatticeState {
    /// Number of sites `2N + 1`.
    pub fn sites(&self) -> usize {
        2 * self.n + 1
    }

    pub fn half_width(&self) -> usize {
        self.n
    }

    fn site_index(&self, x: isize) -> usize {
        debug_assert!(x.unsigned_abs() <= self.n);
        (x + self.n as isize) as usize
    }

    fn bond_index(&self, x: isize) -> usize {
        debug_assert!(-(self.n as isize) <= x && x < self.n as isize);
        (x + self.n as isize) as usize
    }

    pub fn from_occupation(n: usize, occupation: Vec<u8>) -> Option<LatticeState> {
        if n == 0 || occupation.len() != 2 * n + 1 {
            return None;
        }
        if occupation.iter().any(|&v| v > 1) {
            return None;
        }
        let mut state = LatticeState {
            n,
            occupation,
            active: Vec::with_capacity(2 * n),
            position: vec![NO_POSITION; 2 * n],
        };
        for b in 0..2 * n {
            if state.occupation[b] != state.occupation[b + 1] {
                state.position[b] = state.active.len() as u32;
                state.active.push(b as u32);
            }
        }
        Some(state)
    }

    pub fn all_empty(n: usize) -> LatticeState {
        Self::from_occupation(n, vec![0; 2 * n + 1]).expect("valid width")
    }

    pub fn all_full(n: usize) -> LatticeState {
        Self::from_occupation(n, vec![1; 2 * n + 1]).expect("valid width")
    }

    /// Independent sites, each occupied with probability `density(x / N)`.
    pub fn sample_product(
        n: usize,
        density: impl Fn(f64) -> f64,
        rng: &mut impl Rng,
    ) -> LatticeState {
        let occupation = (0..2 * n + 1)
            .map(|k| {
                let y = (k as f64 - n as f64) / n as f64;
                u8::from(rng.random::<f64>() < density(y))
            })
            .collect();
        Self::from_occupation(n, occupation).expect("valid width")
    }

    pub fn occupied(&self, x: isize) -> bool {
        self.occupation[self.site_index(x)] == 1
    }

    pub fn occupation(&self) -> &[u8] {
        &self.occupation
    }

    pub fn particle_count(&self) -> usize {
        self.occupation.iter().map(|&v| v as usize).sum()
    }

    /// Number of bonds whose endpoints disagree.
    pub fn active_bonds(&self) -> usize {
        self.active.len()
    }

    /// Bond coordinate of the `k`-th active bond.
    pub fn active_bond(&self, k: usize) -> isize {
        self.active[k] as isize - self.n as isize
    }

    pub fn is_bond_active(&self, x: isize) -> bool {
        self.position[self.bond_index(x)] != NO_POSITION
    }

    fn set_bond(&mut self, b: usize, now_active: bool) {
        let was_active = self.position[b] != NO_POSITION;
        if was_active == now_active {
            return;
        }
        if now_active {
            self.position[b] = self.active.len() as u32;
            self.active.push(b as u32);
        } else {
            let slot = self.position[b] as usize;
            let last = *self.active.last().expect("active set not empty");
            self.active.swap_remove(slot);
            if slot < self.active.len() {
                self.position[last as usize] = slot as u32;
            }
            self.position[b] = NO_POSITION;
        }
    }

    fn refresh_bond(&mut self, b: usize) {
        let now_active = self.occupation[b] != self.occupation[b + 1];
        self.set_bond(b, now_active);
    }

    /// Swap the occupations across bond `x`. The bond itself stays active;
    /// its two neighbors may toggle.
    pub fn exchange(&mut self, x: isize) {
        let b = self.bond_index(x);
        debug_assert!(self.occupation[b] != self.occupation[b + 1]);
        self.occupation.swap(b, b + 1);
        if b > 0 {
            self.refresh_bond(b - 1);
        }
        if b + 1 < 2 * self.n {
            self.refresh_bond(b + 1);
        }
    }

    /// Flip the occupation of an edge site (`x = -N` or `x = N`).
    pub fn flip_edge(&mut self, x: isize) {
        assert!(x.unsigned_abs() == self.n, "flip only acts on edge sites");
        let s = self.site_index(x);
        self.occupation[s] ^= 1;
        if x < 0 {
            self.refresh_bond(0);
        } else {
            self.refresh_bond(2 * self.n - 1);
        }
    }

    /// Configuration as a bitmask with site `-N` at bit 0.
    pub fn bitmask(&self) -> u64 {
        self.occupation
            .iter()
            .enumerate()
            .map(|(k, &v)| (v as u64) << k)
            .sum()
    }

    /// Rebuild the active-bond set from scratch and compare; used by audits.
    pub fn audit_active_bonds(&self) -> bool {
        let mut expected: Vec<u32> = (0..2 * self.n as u32)
            .filter(|&b| self.occupation[b as usize] != self.occupation[b as usize + 1])
            .collect();
        let mut got = self.active.clone();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return false;
        }
        self.active
            .iter()
            .enumerate()
            .all(|(slot, &b)| self.position[b as usize] == slot as u32)
    }
}

/// Cumulative jump counts per bond, boundary channels included:
/// `x = -N-1` is the left reservoir channel and `x = N` the right one.
#[derive(Debug, Clone)]
pub struct CurrentCounters {
    n: usize,
    rightward: Vec<i64>,
    leftward: Vec<i64>,
}

impl CurrentCounters {
    pub fn new(n: usize) -> CurrentCounters {
        CurrentCounters {
            n,
            rightward: vec![0; 2 * n + 2],
            leftward: vec![0; 2 * n + 2],
        }
    }

    fn index(&self, x: isize) -> usize {
        debug_assert!(-(self.n as isize) - 1 <= x && x <= self.n as isize);
        (x + self.n as isize + 1) as usize
    }

    /// Record one jump across bond `x`; `rightward` means from `x` to `x+1`.
    pub fn record(&mut self, x: isize, rightward: bool) {
        let k = self.index(x);
        if rightward {
            self.rightward[k] += 1;
        } else {
            self.leftward[k] += 1;
        }
    }

    pub fn rightward(&self, x: isize) -> i64 {
        self.rightward[self.index(x)]
    }

    pub fn leftward(&self, x: isize) -> i64 {
        self.leftward[self.index(x)]
    }

    /// Signed count `rightward - leftward` across bond `x`.
    pub fn signed(&self, x: isize) -> i64 {
        let k = self.index(x);
        self.rightward[k] - self.leftward[k]
    }

    pub fn signed_all(&self) -> Vec<i64> {
        self.rightward
            .iter()
            .zip(&self.leftward)
            .map(|(r, l)| r - l)
            .collect()
    }

    pub fn total_events(&self) -> u64 {
        self.rightward
            .iter()
            .chain(&self.leftward)
            .map(|&v| v as u64)
            .sum()
    }

    /// Exact bookkeeping identity: the occupation change of every site equals
    /// the inflow minus outflow of its two bonds.
    pub fn conservation_holds(&self, initial: &[u8], current: &[u8]) -> bool {
        debug_assert_eq!(initial.len(), 2 * self.n + 1);
        debug_assert_eq!(current.len(), 2 * self.n + 1);
        (0..2 * self.n + 1).all(|k| {
            let x = k as isize - self.n as isize;
            let delta = current[k] as i64 - initial[k] as i64;
            delta == self.signed(x - 1) - self.signed(x)
        })
    }

    /// Largest spread of signed counts over the interior range `x = -N..N`.
    pub fn homogeneity_span(&self) -> i64 {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for x in -(self.n as isize)..=(self.n as isize) {
            let v = self.signed(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }
}

/// Signed count across the bond at macroscopic position `y`, divided by the
/// current normalization `N^{1+alpha}`.
pub fn rescaled_current(
    counters: &CurrentCounters,
    scaling: &crate::protocol::ScalingParameters,
    y: f64,
) -> f64 {
    let n = scaling.n() as f64;
    let x = (n * y).floor().clamp(-n, n) as isize;
    counters.signed(x) as f64 / scaling.current_normalization()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::replica_seed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn active_set_tracks_construction() {
        let s = LatticeState::from_occupation(2, vec![1, 0, 0, 1, 1]).unwrap();
        assert_eq!(s.active_bonds(), 2);
        assert!(s.is_bond_active(-2));
        assert!(s.is_bond_active(0));
        assert!(!s.is_bond_active(-1));
        assert!(s.audit_active_bonds());
        assert_eq!(s.particle_count(), 3);
        assert_eq!(s.bitmask(), 0b11001);
    }

    #[test]
    fn exchange_keeps_bond_active_and_updates_neighbors() {
        let mut s = LatticeState::from_occupation(2, vec![1, 0, 0, 1, 1]).unwrap();
        s.exchange(-2);
        assert_eq!(s.occupation(), &[0, 1, 0, 1, 1]);
        assert!(s.is_bond_active(-2));
        assert!(s.is_bond_active(-1));
        assert!(s.audit_active_bonds());
    }

    #[test]
    fn edge_flips_touch_only_edge_bonds() {
        let mut s = LatticeState::all_empty(3);
        s.flip_edge(-3);
        assert!(s.occupied(-3));
        assert_eq!(s.active_bonds(), 1);
        s.flip_edge(3);
        assert_eq!(s.active_bonds(), 2);
        assert!(s.audit_active_bonds());
    }

    #[test]
    fn random_walk_preserves_audits_and_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(41, 0));
        let n = 6;
        let mut state = LatticeState::sample_product(n, |_| 0.5, &mut rng);
        let initial = state.occupation().to_vec();
        let mut counters = CurrentCounters::new(n);
        for _ in 0..5000 {
            let boundary_move = rng.random::<f64>() < 0.2 || state.active_bonds() == 0;
            if boundary_move {
                let left = rng.random::<f64>() < 0.5;
                let x = if left { -(n as isize) } else { n as isize };
                let was_occupied = state.occupied(x);
                state.flip_edge(x);
                if left {
                    counters.record(-(n as isize) - 1, !was_occupied);
                } else {
                    counters.record(n as isize, was_occupied);
                }
            } else {
                let k = rng.random_range(0..state.active_bonds());
                let x = state.active_bond(k);
                let rightward = state.occupied(x);
                state.exchange(x);
                counters.record(x, rightward);
            }
            assert!(state.audit_active_bonds());
            assert!(counters.conservation_holds(&initial, state.occupation()));
            assert!(counters.homogeneity_span() <= 2 * n as i64);
        }
        assert!(counters.total_events() == 5000);
    }

    #[test]
    fn rescaled_current_uses_floor_indexing() {
        let scaling = crate::protocol::ScalingParameters::new(4, 1.0, 1.0).unwrap();
        let mut counters = CurrentCounters::new(4);
        counters.record(0, true);
        counters.record(0, true);
        counters.record(-3, false);
        // N^{1+alpha} = 16
        assert!((rescaled_current(&counters, &scaling, 0.0) - 2.0 / 16.0).abs() < 1e-15);
        assert!((rescaled_current(&counters, &scaling, 0.1) - 2.0 / 16.0).abs() < 1e-15);
        assert!((rescaled_current(&counters, &scaling, -0.7) + 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(counters.signed(-3), -1);
        assert_eq!(counters.homogeneity_span(), 3);
    }
}
