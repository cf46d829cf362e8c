//! Merkle-protected slots for container state MACs.
//!
//! Slot values and every tree node live in a [`TamperRegion`]; only the root
//! tag is held in the store object itself, standing in for a reserved
//! register. The tree is a binary heap: node 1 is the root, leaf `i` is node
//! `capacity + i`. Leaf node tag = MAC(merkle-leaf, i, value), inner node tag
//! = MAC(merkle-node, left, right).
//!
//! Region layout with `T` tag bytes:
//! `[slot values: capacity * T][nodes 2..2*capacity: T each]`.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mac::{Authenticator, Domain, MacInput, MacTag};
use crate::region::TamperRegion;

pub const DEFAULT_CAPACITY: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotHandle {
    index: u64,
    generation: u64,
}

impl SlotHandle {
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// Sibling tags of one slot, verified against the root at a given region
/// epoch. While the epoch is unchanged nobody has written the region, so a
/// write to that slot can reuse them instead of re-verifying.
#[derive(Debug, Clone)]
struct VerifiedPath {
    index: u64,
    epoch: u64,
    siblings: Vec<MacTag>,
}

#[derive(Debug)]
pub struct MerkleStore {
    mac: Arc<Authenticator>,
    region: TamperRegion,
    capacity: u64,
    root: MacTag,
    generations: Vec<u64>,
    live: Vec<bool>,
    free: Vec<u64>,
    next_unused: u64,
    cache: Option<VerifiedPath>,
}

impl MerkleStore {
    pub fn new(mac: Arc<Authenticator>) -> Self {
        MerkleStore::with_capacity(mac, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(mac: Arc<Authenticator>, capacity: u64) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        let width = mac.width();
        let mut store = MerkleStore {
            mac,
            region: TamperRegion::new(),
            capacity,
            root: MacTag::zero(width),
            generations: Vec::new(),
            live: Vec::new(),
            free: Vec::new(),
            next_unused: 0,
            cache: None,
        };
        let leaves = vec![MacTag::zero(width); capacity as usize];
        store.rebuild(&leaves);
        store
    }

    fn tag_len(&self) -> u64 {
        self.mac.tag_len() as u64
    }

    fn width(&self) -> u32 {
        self.mac.width()
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// MAC levels on a verification path, leaf level included. A read costs
    /// exactly this many MAC computations.
    pub fn depth(&self) -> u32 {
        self.capacity.trailing_zeros() + 1
    }

    pub fn root(&self) -> MacTag {
        self.root
    }

    pub fn live_slots(&self) -> usize {
        self.live.iter().filter(|l| **l).count()
    }

    pub fn region(&self) -> &TamperRegion {
        &self.region
    }

    pub fn region_mut(&mut self) -> &mut TamperRegion {
        &mut self.region
    }

    /// Byte range of slot `index`'s stored value.
    pub fn value_range(&self, index: u64) -> Range<u64> {
        let t = self.tag_len();
        index * t..(index + 1) * t
    }

    /// Byte range of heap node `node` (2 ≤ node < 2·capacity).
    pub fn node_range(&self, node: u64) -> Range<u64> {
        let t = self.tag_len();
        let start = self.capacity * t + (node - 2) * t;
        start..start + t
    }

    /// Heap nodes whose stored tags a read of `index` checks: the leaf node,
    /// its stored ancestors and the sibling at every level.
    pub fn path_nodes(&self, index: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut j = self.capacity + index;
        while j > 1 {
            out.push(j);
            out.push(j ^ 1);
            j /= 2;
        }
        out
    }

    fn leaf_mac(&self, index: u64, value: &MacTag) -> MacTag {
        self.mac
            .compute(&MacInput::new(Domain::MerkleLeaf).word(index).tag(value))
    }

    fn node_mac(&self, left: &MacTag, right: &MacTag) -> MacTag {
        self.mac
            .compute(&MacInput::new(Domain::MerkleNode).tag(left).tag(right))
    }

    fn check(&self, h: SlotHandle) -> Result<()> {
        let i = h.index as usize;
        if i < self.live.len() && self.live[i] && self.generations[i] == h.generation {
            Ok(())
        } else {
            Err(Error::StaleHandle)
        }
    }

    pub fn alloc(&mut self) -> Result<SlotHandle> {
        let index = match self.free.pop() {
            Some(i) => i,
            None => {
                if self.next_unused == self.capacity {
                    self.grow()?;
                }
                self.next_unused += 1;
                self.generations.push(0);
                self.live.push(false);
                self.next_unused - 1
            }
        };
        let i = index as usize;
        self.generations[i] += 1;
        self.live[i] = true;
        Ok(SlotHandle {
            index,
            generation: self.generations[i],
        })
    }

    /// Zeroes the slot and retires the handle.
    pub fn free(&mut self, h: SlotHandle) -> Result<()> {
        self.check(h)?;
        let zeroed = self.write(h, &MacTag::zero(self.width()));
        self.live[h.index as usize] = false;
        self.free.push(h.index);
        zeroed
    }

    /// Returns the slot value after checking its whole path against the root.
    pub fn read(&mut self, h: SlotHandle) -> Result<MacTag> {
        self.check(h)?;
        let (value, siblings) = self.verify_path(h.index).map_err(Error::integrity)?;
        self.cache = Some(VerifiedPath {
            index: h.index,
            epoch: self.region.epoch(),
            siblings,
        });
        Ok(value)
    }

    /// Updates the slot and every tag on its path, root included.
    ///
    /// The siblings folded into the new root must themselves be genuine, so
    /// the old path is verified first unless it was verified by the previous
    /// read or write of this slot with no region write since.
    pub fn write(&mut self, h: SlotHandle, value: &MacTag) -> Result<()> {
        self.check(h)?;
        let epoch = self.region.epoch();
        let siblings = match self.cache.take() {
            Some(c) if c.index == h.index && c.epoch == epoch => c.siblings,
            _ => self.verify_path(h.index).map_err(Error::integrity)?.1,
        };
        let mut node = self.capacity + h.index;
        let mut acc = self.leaf_mac(h.index, value);
        let mut stores = vec![(self.value_range(h.index).start, *value)];
        for sibling in &siblings {
            stores.push((self.node_range(node).start, acc));
            acc = if node.is_multiple_of(2) {
                self.node_mac(&acc, sibling)
            } else {
                self.node_mac(sibling, &acc)
            };
            node /= 2;
        }
        for (offset, tag) in stores {
            self.region.store_tag(offset, &tag)?;
        }
        self.root = acc;
        self.cache = Some(VerifiedPath {
            index: h.index,
            epoch: self.region.epoch(),
            siblings,
        });
        Ok(())
    }

    /// Recomputes the path of `index` from region contents: `depth()` MACs.
    /// Stored ancestors must match their recomputation and the top must match
    /// the root. Returns the value and the sibling tags bottom-up.
    fn verify_path(&mut self, index: u64) -> Result<(MacTag, Vec<MacTag>)> {
        let w = self.width();
        let value = self.region.load_tag(self.value_range(index).start, w)?;
        let mut node = self.capacity + index;
        let mut acc = self.leaf_mac(index, &value);
        let mut ok = true;
        let mut siblings = Vec::with_capacity(self.depth() as usize - 1);
        while node > 1 {
            let stored = self.region.load_tag(self.node_range(node).start, w)?;
            ok &= stored.ct_eq(&acc);
            let sibling = self.region.load_tag(self.node_range(node ^ 1).start, w)?;
            acc = if node.is_multiple_of(2) {
                self.node_mac(&acc, &sibling)
            } else {
                self.node_mac(&sibling, &acc)
            };
            siblings.push(sibling);
            node /= 2;
        }
        if ok && acc.ct_eq(&self.root) {
            Ok((value, siblings))
        } else {
            Err(Error::Mac)
        }
    }

    /// Verifies every slot against the root, then rebuilds at twice the
    /// capacity with the same values.
    fn grow(&mut self) -> Result<()> {
        let w = self.width();
        let mut leaves = Vec::with_capacity(self.capacity as usize * 2);
        for i in 0..self.capacity {
            leaves.push(
                self.region
                    .load_tag(self.value_range(i).start, w)
                    .map_err(Error::integrity)?,
            );
        }
        if !self.full_root(&leaves).ct_eq(&self.root) {
            return Err(Error::Mac);
        }
        self.capacity *= 2;
        leaves.resize(self.capacity as usize, MacTag::zero(w));
        self.rebuild(&leaves);
        Ok(())
    }

    fn full_tree(&self, leaves: &[MacTag]) -> Vec<MacTag> {
        let cap = leaves.len();
        let mut nodes = vec![MacTag::zero(self.width()); 2 * cap];
        for (i, v) in leaves.iter().enumerate() {
            nodes[cap + i] = self.leaf_mac(i as u64, v);
        }
        for j in (1..cap).rev() {
            nodes[j] = self.node_mac(&nodes[2 * j], &nodes[2 * j + 1]);
        }
        nodes
    }

    fn full_root(&self, leaves: &[MacTag]) -> MacTag {
        self.full_tree(leaves)[1]
    }

    fn rebuild(&mut self, leaves: &[MacTag]) {
        let nodes = self.full_tree(leaves);
        let t = self.tag_len();
        self.region.grow_to(self.capacity * t + (2 * self.capacity).saturating_sub(2) * t);
        for (i, v) in leaves.iter().enumerate() {
            let off = self.value_range(i as u64).start;
            self.region.store_tag(off, v).expect("layout fits region");
        }
        for (j, tag) in nodes.iter().enumerate().skip(2) {
            let off = self.node_range(j as u64).start;
            self.region.store_tag(off, tag).expect("layout fits region");
        }
        self.root = nodes[1];
        self.cache = None;
    }

    /// Recomputes the whole tree from region contents and compares it with
    /// the root and every stored node.
    pub fn audit(&self) -> bool {
        let w = self.width();
        let Ok(leaves) = (0..self.capacity)
            .map(|i| {
                let r = self.value_range(i);
                self.region
                    .peek(r.start, r.end - r.start)
                    .ok()
                    .and_then(|b| MacTag::from_le_slice(b, w))
                    .ok_or(())
            })
            .collect::<Result<Vec<_>, ()>>()
        else {
            return false;
        };
        let nodes = self.full_tree(&leaves);
        nodes[1] == self.root
            && (2..2 * self.capacity).all(|j| {
                let r = self.node_range(j);
                self.region
                    .peek(r.start, r.end - r.start)
                    .ok()
                    .and_then(|b| MacTag::from_le_slice(b, w))
                    == Some(nodes[j as usize])
            })
    }
}
