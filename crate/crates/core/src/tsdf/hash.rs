//! Open-addressed hash from block coordinates to arena indices.
//!
//! Linear probing over a power-of-two slot array, grown at 75% load, with
//! backward-shift deletion so no tombstones are needed. Blocks live in a
//! dense arena; removal swaps the last block into the hole.

use super::{BlockCoord, VoxelBlock};

const EMPTY: u32 = u32::MAX;
const MIN_SLOTS: usize = 64;

#[inline]
fn hash(c: &BlockCoord) -> u64 {
    let h = (c[0] as i64 as u64).wrapping_mul(73_856_093)
        ^ (c[1] as i64 as u64).wrapping_mul(19_349_669)
        ^ (c[2] as i64 as u64).wrapping_mul(83_492_791);
    // Fold the high bits in so the low-bit mask sees all of them.
    h ^ (h >> 29) ^ (h >> 47)
}

#[derive(Clone, Debug)]
pub(crate) struct BlockHash {
    slots: Vec<u32>,
    blocks: Vec<VoxelBlock>,
}

impl Default for BlockHash {
    fn default() -> Self {
        Self {
            slots: vec![EMPTY; MIN_SLOTS],
            blocks: Vec::new(),
        }
    }
}

impl BlockHash {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[VoxelBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [VoxelBlock] {
        &mut self.blocks
    }

    #[inline]
    fn mask(&self) -> usize {
        self.slots.len() - 1
    }

    /// Slot holding `c`, or the empty slot where it would go.
    #[inline]
    fn probe(&self, c: &BlockCoord) -> (usize, bool) {
        let mask = self.mask();
        let mut s = hash(c) as usize & mask;
        loop {
            let e = self.slots[s];
            if e == EMPTY {
                return (s, false);
            }
            if self.blocks[e as usize].coord == *c {
                return (s, true);
            }
            s = (s + 1) & mask;
        }
    }

    #[inline]
    pub fn index_of(&self, c: &BlockCoord) -> Option<usize> {
        match self.probe(c) {
            (s, true) => Some(self.slots[s] as usize),
            _ => None,
        }
    }

    #[inline]
    pub fn get(&self, c: &BlockCoord) -> Option<&VoxelBlock> {
        self.index_of(c).map(|i| &self.blocks[i])
    }

    /// Inserts a block whose coordinate must not be present; returns its index.
    pub fn insert(&mut self, block: VoxelBlock) -> usize {
        if (self.blocks.len() + 1) * 4 > self.slots.len() * 3 {
            self.grow();
        }
        let (s, found) = self.probe(&block.coord);
        assert!(!found, "block {:?} inserted twice", block.coord);
        let idx = self.blocks.len();
        self.slots[s] = idx as u32;
        self.blocks.push(block);
        idx
    }

    pub fn remove(&mut self, c: &BlockCoord) -> Option<VoxelBlock> {
        let (s, found) = self.probe(c);
        if !found {
            return None;
        }
        let idx = self.slots[s] as usize;
        self.delete_slot(s);
        let last = self.blocks.len() - 1;
        if idx != last {
            let moved = self.blocks[last].coord;
            let (ms, _) = self.probe(&moved);
            self.slots[ms] = idx as u32;
        }
        Some(self.blocks.swap_remove(idx))
    }

    fn delete_slot(&mut self, mut hole: usize) {
        let mask = self.mask();
        self.slots[hole] = EMPTY;
        let mut s = (hole + 1) & mask;
        while self.slots[s] != EMPTY {
            let home = hash(&self.blocks[self.slots[s] as usize].coord) as usize & mask;
            // Move the entry back if its home does not lie cyclically in
            // (hole, s].
            let dist_home = s.wrapping_sub(home) & mask;
            let dist_hole = s.wrapping_sub(hole) & mask;
            if dist_home >= dist_hole {
                self.slots[hole] = self.slots[s];
                self.slots[s] = EMPTY;
                hole = s;
            }
            s = (s + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let n = self.slots.len() * 2;
        self.slots = vec![EMPTY; n];
        let mask = n - 1;
        for (idx, b) in self.blocks.iter().enumerate() {
            let mut s = hash(&b.coord) as usize & mask;
            while self.slots[s] != EMPTY {
                s = (s + 1) & mask;
            }
            self.slots[s] = idx as u32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    proptest! {
        #[test]
        fn behaves_like_a_set(ops in prop::collection::vec((any::<bool>(), -6i32..6, -6i32..6, -3i32..3), 1..400)) {
            let mut h = BlockHash::default();
            let mut model = BTreeSet::new();
            for (ins, x, y, z) in ops {
                let c = [x, y, z];
                if ins {
                    if model.insert(c) {
                        h.insert(VoxelBlock::new(c));
                    }
                } else {
                    prop_assert_eq!(h.remove(&c).is_some(), model.remove(&c));
                }
                prop_assert_eq!(h.len(), model.len());
            }
            for c in &model {
                let i = h.index_of(c).unwrap();
                prop_assert_eq!(h.blocks()[i].coord, *c);
            }
            let stored: BTreeSet<_> = h.blocks().iter().map(|b| b.coord).collect();
            prop_assert_eq!(stored, model);
        }
    }

    #[test]
    fn grows_past_initial_capacity() {
        let mut h = BlockHash::default();
        for k in 0..1000 {
            h.insert(VoxelBlock::new([k, -k, k / 3]));
        }
        assert_eq!(h.len(), 1000);
        assert!(h.slots.len() * 3 >= h.len() * 4);
        for k in 0..1000 {
            assert!(h.get(&[k, -k, k / 3]).is_some());
        }
        assert!(h.get(&[1, 1, 1]).is_none());
    }
}
