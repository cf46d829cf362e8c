//! Ordered map on a red-black tree whose node MACs chain their children.
//!
//! Node MAC: `MAC(nonce, H(key ‖ value), left MAC, left color, right MAC,
//! right color)`, with a fixed null MAC (and black) for absent children. A
//! node's color is thus authenticated by its parent; the root must be black.
//! Recoloring a node only changes its parent's MAC, and the colors of a
//! verified node's children can be read without verifying them. The header MAC
//! `MAC(nonce, leftmost MAC, rightmost MAC, root MAC)` is the state MAC kept
//! in safe storage. Every operation verifies the header and then each node it
//! reads, top-down, so a node is only trusted once its MAC has been checked
//! against a MAC its verified parent committed to. Descending also checks each
//! child's parent link.
//!
//! Region layout with `T` tag bytes: header
//! `[root: u64][leftmost: u64][rightmost: u64][nonce: T]`, then node records
//! `[key: u64][color: u8][left: u64][right: u64][parent: u64][mac: T]
//! [value len: u32][value]`. Offset 0 is the header, so 0 doubles as the null
//! link.
//!
//! Rebalancing follows the textbook (CLRS) insert and delete algorithms.

use std::collections::{HashMap, HashSet};
use std::ops::Range;
use std::rc::Rc;

use crate::context::SecureContext;
use crate::error::{Error, Result};
use crate::mac::{element_hash, Digest, Domain, ElementHasher, MacInput, MacTag};
use crate::region::{AdversaryScript, TamperRegion};
use crate::safe_storage::SlotHandle;

pub const NIL: u64 = 0;
const BLACK: u8 = 0;
const RED: u8 = 1;

const ROOT_OFF: u64 = 0;
const LEFTMOST_OFF: u64 = 8;
const RIGHTMOST_OFF: u64 = 16;
const NONCE_OFF: u64 = 24;

const KEY: u64 = 0;
const COLOR: u64 = 8;
const LEFT: u64 = 9;
const RIGHT: u64 = 17;
const PARENT: u64 = 25;
const MAC: u64 = 33;

/// Longest root-to-leaf walk accepted before declaring the links corrupt.
const MAX_HEIGHT: usize = 130;

/// Byte ranges of one node record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbNodeLayout {
    pub offset: u64,
    pub key: Range<u64>,
    pub color: Range<u64>,
    pub left: Range<u64>,
    pub right: Range<u64>,
    pub parent: Range<u64>,
    pub mac: Range<u64>,
    pub value_len: Range<u64>,
    pub value: Range<u64>,
}

/// A verified node held in locals for the rest of one operation.
#[derive(Debug, Clone)]
struct WorkNode {
    key: u64,
    left: u64,
    right: u64,
    parent: u64,
    digest: Digest,
    value: Vec<u8>,
    mac_dirty: bool,
}

pub struct AuthRbTree {
    ctx: Rc<SecureContext>,
    region: TamperRegion,
    slot: SlotHandle,
    hasher: ElementHasher,
    null_mac: MacTag,
    len_hint: u64,
    free: HashMap<u64, Vec<u64>>,
    // Per-operation scratch, empty between operations: MACs and colors
    // committed to by verified parents (or the header), verified records,
    // and nodes recolored by this operation.
    trusted: HashMap<u64, MacTag>,
    colors: HashMap<u64, u8>,
    work: HashMap<u64, WorkNode>,
    recolored: HashSet<u64>,
    root: u64,
}

impl AuthRbTree {
    pub fn new(ctx: &Rc<SecureContext>) -> Result<Self> {
        AuthRbTree::with_hasher(ctx, element_hash)
    }

    pub fn with_hasher(ctx: &Rc<SecureContext>, hasher: ElementHasher) -> Result<Self> {
        let slot = ctx.storage().alloc()?;
        let nonce = ctx.fresh_nonce();
        let w = ctx.mac().width();
        let zero = MacTag::zero(w);
        let null_mac = node_mac_with(ctx.mac(), &nonce, &Digest::ZERO, (&zero, BLACK), (&zero, BLACK));
        let mut t = AuthRbTree {
            ctx: Rc::clone(ctx),
            region: TamperRegion::new(),
            slot,
            hasher,
            null_mac,
            len_hint: 0,
            free: HashMap::new(),
            trusted: HashMap::new(),
            colors: HashMap::new(),
            work: HashMap::new(),
            recolored: HashSet::new(),
            root: NIL,
        };
        let header = t.header_len();
        t.region.alloc(header);
        t.region.store_tag(NONCE_OFF, &nonce)?;
        let empty = t.header_mac(&nonce, &null_mac, &null_mac, &null_mac);
        ctx.storage().write(slot, &empty)?;
        Ok(t)
    }

    fn t(&self) -> u64 {
        self.ctx.mac().tag_len() as u64
    }

    fn width(&self) -> u32 {
        self.ctx.mac().width()
    }

    pub fn header_len(&self) -> u64 {
        NONCE_OFF + self.t()
    }

    fn vlen_off(&self) -> u64 {
        MAC + self.t()
    }

    fn value_off(&self) -> u64 {
        MAC + self.t() + 4
    }

    pub fn region(&self) -> &TamperRegion {
        &self.region
    }

    pub fn region_mut(&mut self) -> &mut TamperRegion {
        &mut self.region
    }

    pub fn between_ops(&mut self, script: &AdversaryScript) -> Result<usize> {
        self.region.fire_between_ops(script)
    }

    pub fn context(&self) -> &Rc<SecureContext> {
        &self.ctx
    }

    /// The MAC standing in for an absent child.
    pub fn null_mac(&self) -> MacTag {
        self.null_mac
    }

    /// Header MAC of an empty tree with this instance's nonce.
    pub fn empty_header_mac(&self) -> MacTag {
        let nonce = MacTag::from_le_slice(
            self.region.peek(NONCE_OFF, self.t()).expect("header present"),
            self.width(),
        )
        .unwrap_or(MacTag::zero(self.width()));
        self.header_mac(&nonce, &self.null_mac, &self.null_mac, &self.null_mac)
    }

    pub fn state_mac(&self) -> Result<MacTag> {
        self.ctx.storage().read(self.slot)
    }

    /// Element count as tracked by this handle (not read from the region).
    pub fn len(&self) -> u64 {
        self.len_hint
    }

    pub fn is_empty(&self) -> bool {
        self.len_hint == 0
    }

    fn header_mac(&self, nonce: &MacTag, lm: &MacTag, rm: &MacTag, root: &MacTag) -> MacTag {
        self.ctx.mac().compute(
            &MacInput::new(Domain::RbHeader)
                .tag(nonce)
                .tag(lm)
                .tag(rm)
                .tag(root),
        )
    }

    fn node_mac(&self, nonce: &MacTag, digest: &Digest, l: (&MacTag, u8), r: (&MacTag, u8)) -> MacTag {
        node_mac_with(self.ctx.mac(), nonce, digest, l, r)
    }

    fn digest(&self, key: u64, value: &[u8]) -> Digest {
        let mut buf = Vec::with_capacity(8 + value.len());
        buf.extend_from_slice(&key.to_le_bytes());
        buf.extend_from_slice(value);
        (self.hasher)(&buf)
    }

    // ---- verification -------------------------------------------------

    fn check_ptr(&self, ptr: u64) -> Result<()> {
        if ptr != NIL && ptr < self.header_len() {
            return Err(Error::Mac);
        }
        Ok(())
    }

    fn load_child_mac(&mut self, ptr: u64) -> Result<MacTag> {
        if ptr == NIL {
            return Ok(self.null_mac);
        }
        self.check_ptr(ptr)?;
        let w = self.width();
        self.region.load_tag(ptr + MAC, w)
    }

    fn load_child(&mut self, ptr: u64) -> Result<(MacTag, u8)> {
        if ptr == NIL {
            return Ok((self.null_mac, BLACK));
        }
        let mac = self.load_child_mac(ptr)?;
        let color = self.region.load_u8(ptr + COLOR)?;
        if color > RED {
            return Err(Error::Mac);
        }
        Ok((mac, color))
    }

    fn trust(&mut self, ptr: u64, mac: MacTag) -> Result<()> {
        if ptr == NIL {
            return Ok(());
        }
        match self.trusted.insert(ptr, mac) {
            Some(old) if old != mac => Err(Error::Mac),
            _ => Ok(()),
        }
    }

    fn trust_color(&mut self, ptr: u64, color: u8) -> Result<()> {
        if ptr == NIL {
            return Ok(());
        }
        match self.colors.insert(ptr, color) {
            Some(old) if old != color => Err(Error::Mac),
            _ => Ok(()),
        }
    }

    fn clear_scratch(&mut self) {
        self.trusted.clear();
        self.colors.clear();
        self.work.clear();
        self.recolored.clear();
    }

    /// Checks the header against the state MAC and returns the nonce and
    /// the stored leftmost and rightmost links.
    fn begin(&mut self) -> Result<(MacTag, u64, u64)> {
        self.clear_scratch();
        let state = self.ctx.storage().read(self.slot)?;
        let w = self.width();
        let nonce = self.region.load_tag(NONCE_OFF, w)?;
        let root = self.region.load_u64(ROOT_OFF)?;
        let lm_ptr = self.region.load_u64(LEFTMOST_OFF)?;
        let rm_ptr = self.region.load_u64(RIGHTMOST_OFF)?;
        let root_mac = self.load_child_mac(root)?;
        let lm = self.load_child_mac(lm_ptr)?;
        let rm = self.load_child_mac(rm_ptr)?;
        if self.header_mac(&nonce, &lm, &rm, &root_mac) != state {
            return Err(Error::Mac);
        }
        // An empty tree has all three links null, and only then.
        if (root == NIL) != (lm_ptr == NIL) || (root == NIL) != (rm_ptr == NIL) {
            return Err(Error::Mac);
        }
        self.trust(root, root_mac)?;
        self.trust_color(root, BLACK)?;
        self.trust(lm_ptr, lm)?;
        self.trust(rm_ptr, rm)?;
        self.root = root;
        Ok((nonce, lm_ptr, rm_ptr))
    }

    /// Verifies the record at `off` against its trusted MAC and caches it.
    fn verify(&mut self, off: u64, expected_parent: u64, nonce: &MacTag) -> Result<()> {
        if off == NIL || self.work.contains_key(&off) {
            return Ok(());
        }
        self.check_ptr(off)?;
        let trusted = *self.trusted.get(&off).ok_or(Error::Mac)?;
        let trusted_color = *self.colors.get(&off).ok_or(Error::Mac)?;
        let key = self.region.load_u64(off + KEY)?;
        let color = self.region.load_u8(off + COLOR)?;
        let left = self.region.load_u64(off + LEFT)?;
        let right = self.region.load_u64(off + RIGHT)?;
        let parent = self.region.load_u64(off + PARENT)?;
        let vlen = self.region.load_u32(off + self.vlen_off())? as u64;
        let value = self.region.load(off + self.value_off(), vlen)?;
        if color != trusted_color || parent != expected_parent {
            return Err(Error::Mac);
        }
        let (lm, lc) = self.load_child(left)?;
        let (rm, rc) = self.load_child(right)?;
        let digest = self.digest(key, &value);
        if self.node_mac(nonce, &digest, (&lm, lc), (&rm, rc)) != trusted {
            return Err(Error::Mac);
        }
        self.trust(left, lm)?;
        self.trust_color(left, lc)?;
        self.trust(right, rm)?;
        self.trust_color(right, rc)?;
        self.work.insert(
            off,
            WorkNode {
                key,
                left,
                right,
                parent,
                digest,
                value,
                mac_dirty: false,
            },
        );
        Ok(())
    }

    fn node(&self, off: u64) -> &WorkNode {
        &self.work[&off]
    }

    fn node_mut(&mut self, off: u64) -> &mut WorkNode {
        self.work.get_mut(&off).expect("node verified before modification")
    }

    fn left(&self, x: u64) -> u64 {
        self.node(x).left
    }

    fn right(&self, x: u64) -> u64 {
        self.node(x).right
    }

    fn parent(&self, x: u64) -> u64 {
        self.node(x).parent
    }

    /// Color committed to by the node's verified parent; null links are
    /// black.
    fn color(&self, x: u64) -> u8 {
        if x == NIL {
            BLACK
        } else {
            self.colors[&x]
        }
    }

    fn set_color(&mut self, x: u64, c: u8) -> Result<()> {
        if self.color(x) != c {
            self.colors.insert(x, c);
            self.recolored.insert(x);
            self.region.store_u8(x + COLOR, c)?;
        }
        Ok(())
    }

    fn set_left(&mut self, x: u64, y: u64) -> Result<()> {
        let n = self.node_mut(x);
        if n.left != y {
            n.left = y;
            n.mac_dirty = true;
            self.region.store_u64(x + LEFT, y)?;
        }
        Ok(())
    }

    fn set_right(&mut self, x: u64, y: u64) -> Result<()> {
        let n = self.node_mut(x);
        if n.right != y {
            n.right = y;
            n.mac_dirty = true;
            self.region.store_u64(x + RIGHT, y)?;
        }
        Ok(())
    }

    /// Parent links are not MAC inputs, so a node that was never read can
    /// have its parent overwritten without verifying it first.
    fn set_parent(&mut self, x: u64, p: u64) -> Result<()> {
        if x == NIL {
            return Ok(());
        }
        if let Some(n) = self.work.get_mut(&x) {
            n.parent = p;
        }
        self.region.store_u64(x + PARENT, p)
    }

    fn set_root(&mut self, x: u64) {
        self.root = x;
    }

    // ---- rotations and rebalancing -----------------------------------

    fn rotate_left(&mut self, x: u64, nonce: &MacTag) -> Result<()> {
        let y = self.right(x);
        self.verify(y, x, nonce)?;
        let beta = self.left(y);
        self.set_right(x, beta)?;
        self.set_parent(beta, x)?;
        let xp = self.parent(x);
        self.set_parent(y, xp)?;
        if xp == NIL {
            self.set_root(y);
        } else if x == self.left(xp) {
            self.set_left(xp, y)?;
        } else {
            self.set_right(xp, y)?;
        }
        self.set_left(y, x)?;
        self.set_parent(x, y)
    }

    fn rotate_right(&mut self, x: u64, nonce: &MacTag) -> Result<()> {
        let y = self.left(x);
        self.verify(y, x, nonce)?;
        let beta = self.right(y);
        self.set_left(x, beta)?;
        self.set_parent(beta, x)?;
        let xp = self.parent(x);
        self.set_parent(y, xp)?;
        if xp == NIL {
            self.set_root(y);
        } else if x == self.right(xp) {
            self.set_right(xp, y)?;
        } else {
            self.set_left(xp, y)?;
        }
        self.set_right(y, x)?;
        self.set_parent(x, y)
    }

    fn insert_fixup(&mut self, mut z: u64, nonce: &MacTag) -> Result<()> {
        while self.color(self.parent(z)) == RED {
            let zp = self.parent(z);
            let zpp = self.parent(zp);
            if zp == self.left(zpp) {
                let y = self.right(zpp);
                if self.color(y) == RED {
                    self.set_color(zp, BLACK)?;
                    self.set_color(y, BLACK)?;
                    self.set_color(zpp, RED)?;
                    z = zpp;
                } else {
                    if z == self.right(zp) {
                        z = zp;
                        self.rotate_left(z, nonce)?;
                    }
                    let zp = self.parent(z);
                    let zpp = self.parent(zp);
                    self.set_color(zp, BLACK)?;
                    self.set_color(zpp, RED)?;
                    self.rotate_right(zpp, nonce)?;
                }
            } else {
                let y = self.left(zpp);
                if self.color(y) == RED {
                    self.set_color(zp, BLACK)?;
                    self.set_color(y, BLACK)?;
                    self.set_color(zpp, RED)?;
                    z = zpp;
                } else {
                    if z == self.left(zp) {
                        z = zp;
                        self.rotate_right(z, nonce)?;
                    }
                    let zp = self.parent(z);
                    let zpp = self.parent(zp);
                    self.set_color(zp, BLACK)?;
                    self.set_color(zpp, RED)?;
                    self.rotate_left(zpp, nonce)?;
                }
            }
        }
        let root = self.root;
        self.set_color(root, BLACK)
    }

    fn transplant(&mut self, u: u64, v: u64) -> Result<()> {
        let up = self.parent(u);
        if up == NIL {
            self.set_root(v);
        } else if u == self.left(up) {
            self.set_left(up, v)?;
        } else {
            self.set_right(up, v)?;
        }
        self.set_parent(v, up)
    }

    /// `x` may be null, hence the explicit parent.
    fn delete_fixup(&mut self, mut x: u64, mut xp: u64, nonce: &MacTag) -> Result<()> {
        while x != self.root && self.color(x) == BLACK {
            if x == self.left(xp) {
                let mut w = self.right(xp);
                self.verify(w, xp, nonce)?;
                if self.color(w) == RED {
                    self.set_color(w, BLACK)?;
                    self.set_color(xp, RED)?;
                    self.rotate_left(xp, nonce)?;
                    w = self.right(xp);
                    self.verify(w, xp, nonce)?;
                }
                let (wl, wr) = (self.left(w), self.right(w));
                if self.color(wl) == BLACK && self.color(wr) == BLACK {
                    self.set_color(w, RED)?;
                    x = xp;
                    xp = self.parent(x);
                } else {
                    if self.color(wr) == BLACK {
                        self.set_color(wl, BLACK)?;
                        self.set_color(w, RED)?;
                        self.rotate_right(w, nonce)?;
                        w = self.right(xp);
                        self.verify(w, xp, nonce)?;
                    }
                    let c = self.color(xp);
                    self.set_color(w, c)?;
                    self.set_color(xp, BLACK)?;
                    let wr = self.right(w);
                    self.set_color(wr, BLACK)?;
                    self.rotate_left(xp, nonce)?;
                    x = self.root;
                    xp = NIL;
                }
            } else {
                let mut w = self.left(xp);
                self.verify(w, xp, nonce)?;
                if self.color(w) == RED {
                    self.set_color(w, BLACK)?;
                    self.set_color(xp, RED)?;
                    self.rotate_right(xp, nonce)?;
                    w = self.left(xp);
                    self.verify(w, xp, nonce)?;
                }
                let (wl, wr) = (self.left(w), self.right(w));
                if self.color(wl) == BLACK && self.color(wr) == BLACK {
                    self.set_color(w, RED)?;
                    x = xp;
                    xp = self.parent(x);
                } else {
                    if self.color(wl) == BLACK {
                        self.set_color(wr, BLACK)?;
                        self.set_color(w, RED)?;
                        self.rotate_left(w, nonce)?;
                        w = self.left(xp);
                        self.verify(w, xp, nonce)?;
                    }
                    let c = self.color(xp);
                    self.set_color(w, c)?;
                    self.set_color(xp, BLACK)?;
                    let wl = self.left(w);
                    self.set_color(wl, BLACK)?;
                    self.rotate_right(xp, nonce)?;
                    x = self.root;
                    xp = NIL;
                }
            }
        }
        if x != NIL {
            self.set_color(x, BLACK)?;
        }
        Ok(())
    }

    // ---- commit --------------------------------------------------------

    /// Recomputes MACs for every modified node and its ancestors, bottom-up
    /// from the final root. Returns (MAC, changed).
    fn rehash(&mut self, x: u64, nonce: &MacTag, depth: usize) -> Result<(MacTag, bool)> {
        if x == NIL {
            return Ok((self.null_mac, false));
        }
        if depth > MAX_HEIGHT {
            return Err(Error::Mac);
        }
        let recolored = self.recolored.contains(&x);
        let Some(n) = self.work.get(&x) else {
            return self.trusted.get(&x).map(|m| (*m, recolored)).ok_or(Error::Mac);
        };
        let (l, r, dirty) = (n.left, n.right, n.mac_dirty);
        let (lm, l_changed) = self.rehash(l, nonce, depth + 1)?;
        let (rm, r_changed) = self.rehash(r, nonce, depth + 1)?;
        if !dirty && !l_changed && !r_changed {
            return self.trusted.get(&x).map(|m| (*m, recolored)).ok_or(Error::Mac);
        }
        let (lc, rc) = (self.color(l), self.color(r));
        let mac = self.node_mac(nonce, &self.work[&x].digest, (&lm, lc), (&rm, rc));
        self.region.store_tag(x + MAC, &mac)?;
        self.trusted.insert(x, mac);
        Ok((mac, true))
    }

    fn mac_of(&self, x: u64) -> Result<MacTag> {
        if x == NIL {
            Ok(self.null_mac)
        } else {
            self.trusted.get(&x).copied().ok_or(Error::Mac)
        }
    }

    fn commit(&mut self, nonce: &MacTag, leftmost: u64, rightmost: u64) -> Result<()> {
        let root = self.root;
        if self.color(root) != BLACK {
            return Err(Error::Invariant("red root after rebalancing".into()));
        }
        self.rehash(root, nonce, 0)?;
        let header = self.header_mac(
            nonce,
            &self.mac_of(leftmost)?,
            &self.mac_of(rightmost)?,
            &self.mac_of(root)?,
        );
        self.region.store_u64(ROOT_OFF, root)?;
        self.region.store_u64(LEFTMOST_OFF, leftmost)?;
        self.region.store_u64(RIGHTMOST_OFF, rightmost)?;
        self.ctx.storage().write(self.slot, &header)
    }

    fn finish<T>(&mut self, r: Result<T>) -> Result<T> {
        self.clear_scratch();
        r.map_err(Error::integrity)
    }

    // ---- allocation ----------------------------------------------------

    fn alloc_node(&mut self, key: u64, value: &[u8], parent: u64) -> Result<u64> {
        let vlen = u32::try_from(value.len())
            .map_err(|_| Error::Config("value larger than 4 GiB".into()))?;
        let size = self.value_off() + value.len() as u64;
        let off = match self.free.get_mut(&size).and_then(Vec::pop) {
            Some(off) => off,
            None => self.region.alloc(size),
        };
        self.region.store_u64(off + KEY, key)?;
        self.region.store_u8(off + COLOR, RED)?;
        self.region.store_u64(off + LEFT, NIL)?;
        self.region.store_u64(off + RIGHT, NIL)?;
        self.region.store_u64(off + PARENT, parent)?;
        self.region.store_tag(off + MAC, &MacTag::zero(self.width()))?;
        self.region.store_u32(off + self.vlen_off(), vlen)?;
        self.region.store(off + self.value_off(), value)?;
        let digest = self.digest(key, value);
        self.colors.insert(off, RED);
        self.work.insert(
            off,
            WorkNode {
                key,
                left: NIL,
                right: NIL,
                parent,
                digest,
                value: value.to_vec(),
                mac_dirty: true,
            },
        );
        Ok(off)
    }

    fn free_node(&mut self, off: u64) {
        let size = self.value_off() + self.node(off).value.len() as u64;
        self.work.remove(&off);
        self.trusted.remove(&off);
        self.colors.remove(&off);
        self.recolored.remove(&off);
        self.free.entry(size).or_default().push(off);
    }

    // ---- public operations ---------------------------------------------

    pub fn insert(&mut self, key: u64, value: &[u8]) -> Result<()> {
        let r = self.insert_inner(key, value);
        self.finish(r)
    }

    fn insert_inner(&mut self, key: u64, value: &[u8]) -> Result<()> {
        let (nonce, mut leftmost, mut rightmost) = self.begin()?;
        let mut y = NIL;
        let mut x = self.root;
        let (mut all_left, mut all_right) = (true, true);
        let mut steps = 0;
        let mut go_left = false;
        while x != NIL {
            steps += 1;
            if steps > MAX_HEIGHT {
                return Err(Error::Mac);
            }
            self.verify(x, y, &nonce)?;
            y = x;
            let k = self.node(x).key;
            if key < k {
                go_left = true;
                all_right = false;
                x = self.left(x);
            } else if key > k {
                go_left = false;
                all_left = false;
                x = self.right(x);
            } else {
                return Err(Error::DuplicateKey(key));
            }
        }
        let z = self.alloc_node(key, value, y)?;
        if y == NIL {
            self.set_root(z);
        } else if go_left {
            self.set_left(y, z)?;
        } else {
            self.set_right(y, z)?;
        }
        if all_left {
            leftmost = z;
        }
        if all_right {
            rightmost = z;
        }
        self.insert_fixup(z, &nonce)?;
        self.commit(&nonce, leftmost, rightmost)?;
        self.len_hint += 1;
        Ok(())
    }

    /// Verified descent to `key`. Returns the node and whether every step
    /// went left / right (i.e. whether a node without a left / right child
    /// there is the minimum / maximum).
    fn descend(&mut self, key: u64, nonce: &MacTag) -> Result<(u64, bool, bool)> {
        let mut parent = NIL;
        let mut x = self.root;
        let (mut all_left, mut all_right) = (true, true);
        for _ in 0..MAX_HEIGHT {
            if x == NIL {
                return Err(Error::KeyNotFound(key));
            }
            self.verify(x, parent, nonce)?;
            let k = self.node(x).key;
            parent = x;
            if key < k {
                all_right = false;
                x = self.left(x);
            } else if key > k {
                all_left = false;
                x = self.right(x);
            } else {
                return Ok((x, all_left, all_right));
            }
        }
        Err(Error::Mac)
    }

    /// Follows left (or right) links from a verified node to the end.
    fn spine(&mut self, mut x: u64, leftward: bool, nonce: &MacTag) -> Result<u64> {
        for _ in 0..MAX_HEIGHT {
            let next = if leftward { self.left(x) } else { self.right(x) };
            if next == NIL {
                return Ok(x);
            }
            self.verify(next, x, nonce)?;
            x = next;
        }
        Err(Error::Mac)
    }

    pub fn erase(&mut self, key: u64) -> Result<()> {
        let r = self.erase_inner(key);
        self.finish(r)
    }

    fn erase_inner(&mut self, key: u64) -> Result<()> {
        let (nonce, mut leftmost, mut rightmost) = self.begin()?;
        let (z, all_left, all_right) = self.descend(key, &nonce)?;
        let (zl, zr, zp) = (self.left(z), self.right(z), self.parent(z));

        // New extremes are the in-order neighbours of z; find them before
        // the tree is restructured.
        if all_left && zl == NIL {
            leftmost = if zr != NIL {
                self.verify(zr, z, &nonce)?;
                self.spine(zr, true, &nonce)?
            } else {
                zp
            };
        }
        if all_right && zr == NIL {
            rightmost = if zl != NIL {
                self.verify(zl, z, &nonce)?;
                self.spine(zl, false, &nonce)?
            } else {
                zp
            };
        }

        let mut y_color = self.color(z);
        let x;
        let xp;
        if zl == NIL {
            x = zr;
            xp = zp;
            self.transplant(z, zr)?;
        } else if zr == NIL {
            x = zl;
            xp = zp;
            self.transplant(z, zl)?;
        } else {
            self.verify(zr, z, &nonce)?;
            let y = self.spine(zr, true, &nonce)?;
            y_color = self.color(y);
            x = self.right(y);
            if self.parent(y) == z {
                xp = y;
            } else {
                xp = self.parent(y);
                self.transplant(y, x)?;
                self.set_right(y, zr)?;
                self.set_parent(zr, y)?;
            }
            self.transplant(z, y)?;
            self.set_left(y, zl)?;
            self.set_parent(zl, y)?;
            let c = self.color(z);
            self.set_color(y, c)?;
        }
        self.free_node(z);
        if y_color == BLACK {
            self.delete_fixup(x, xp, &nonce)?;
        }
        if self.root == NIL {
            leftmost = NIL;
            rightmost = NIL;
        }
        self.commit(&nonce, leftmost, rightmost)?;
        self.len_hint = self.len_hint.saturating_sub(1);
        Ok(())
    }

    pub fn find(&mut self, key: u64) -> Result<Vec<u8>> {
        let r = (|| {
            let (nonce, _, _) = self.begin()?;
            let (x, _, _) = self.descend(key, &nonce)?;
            Ok(self.node(x).value.clone())
        })();
        self.finish(r)
    }

    pub fn contains_key(&mut self, key: u64) -> Result<bool> {
        match self.find(key) {
            Ok(_) => Ok(true),
            Err(Error::KeyNotFound(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn extreme(&mut self, leftward: bool) -> Result<(u64, Vec<u8>)> {
        let r = (|| {
            let (nonce, lm, rm) = self.begin()?;
            let root = self.root;
            if root == NIL {
                return Err(Error::EmptyStructure);
            }
            self.verify(root, NIL, &nonce)?;
            let x = self.spine(root, leftward, &nonce)?;
            if x != if leftward { lm } else { rm } {
                return Err(Error::Mac);
            }
            let n = self.node(x);
            Ok((n.key, n.value.clone()))
        })();
        self.finish(r)
    }

    pub fn minimum(&mut self) -> Result<(u64, Vec<u8>)> {
        self.extreme(true)
    }

    pub fn maximum(&mut self) -> Result<(u64, Vec<u8>)> {
        self.extreme(false)
    }

    // ---- inspection ------------------------------------------------------

    pub fn header_ranges(&self) -> [Range<u64>; 4] {
        [
            ROOT_OFF..ROOT_OFF + 8,
            LEFTMOST_OFF..LEFTMOST_OFF + 8,
            RIGHTMOST_OFF..RIGHTMOST_OFF + 8,
            NONCE_OFF..NONCE_OFF + self.t(),
        ]
    }

    pub fn node_layout(&self, off: u64) -> Option<RbNodeLayout> {
        let vo = off + self.value_off();
        let vlen = u32::from_le_bytes(self.region.peek(off + self.vlen_off(), 4).ok()?.try_into().ok()?) as u64;
        self.region.peek(vo, vlen).ok()?;
        Some(RbNodeLayout {
            offset: off,
            key: off + KEY..off + COLOR,
            color: off + COLOR..off + LEFT,
            left: off + LEFT..off + RIGHT,
            right: off + RIGHT..off + PARENT,
            parent: off + PARENT..off + MAC,
            mac: off + MAC..off + self.vlen_off(),
            value_len: off + self.vlen_off()..vo,
            value: vo..vo + vlen,
        })
    }

    /// Offsets of the nodes reachable from the stored root, in key order.
    /// Reads without hooks or verification.
    pub fn node_offsets(&self) -> Option<Vec<u64>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        let mut seen = HashSet::new();
        let mut x = self.region.peek_u64(ROOT_OFF).ok()?;
        loop {
            while x != NIL {
                if !seen.insert(x) {
                    return None;
                }
                stack.push(x);
                x = self.region.peek_u64(x + LEFT).ok()?;
            }
            let Some(n) = stack.pop() else { break };
            out.push(n);
            x = self.region.peek_u64(n + RIGHT).ok()?;
        }
        Some(out)
    }

    /// Full check of region contents: every node MAC and parent link, the
    /// header MAC against safe storage, and the red-black invariants.
    pub fn audit(&mut self) -> Result<()> {
        let w = self.width();
        let tag_at = |r: &TamperRegion, off: u64| -> Result<MacTag> {
            MacTag::from_le_slice(r.peek(off, self.t())?, w).ok_or(Error::Mac)
        };
        let nonce = tag_at(&self.region, NONCE_OFF)?;
        let root = self.region.peek_u64(ROOT_OFF)?;

        // Returns (MAC, color, black height).
        fn walk(
            t: &AuthRbTree,
            x: u64,
            parent: u64,
            nonce: &MacTag,
            depth: usize,
            bounds: (Option<u64>, Option<u64>),
            tag_at: &dyn Fn(&TamperRegion, u64) -> Result<MacTag>,
        ) -> Result<(MacTag, u8, u32)> {
            if x == NIL {
                return Ok((t.null_mac, BLACK, 1));
            }
            if depth > MAX_HEIGHT || x < t.header_len() {
                return Err(Error::Mac);
            }
            let r = &t.region;
            let key = r.peek_u64(x + KEY)?;
            let color = r.peek(x + COLOR, 1)?[0];
            let left = r.peek_u64(x + LEFT)?;
            let right = r.peek_u64(x + RIGHT)?;
            if r.peek_u64(x + PARENT)? != parent {
                return Err(Error::Invariant(format!("bad parent link at {x}")));
            }
            if bounds.0.is_some_and(|lo| key <= lo) || bounds.1.is_some_and(|hi| key >= hi) {
                return Err(Error::Invariant(format!("key order violated at {x}")));
            }
            if color > RED {
                return Err(Error::Invariant(format!("bad color at {x}")));
            }
            if color == RED {
                for c in [left, right] {
                    if c != NIL && r.peek(c + COLOR, 1)?[0] == RED {
                        return Err(Error::Invariant(format!("red-red edge at {x}")));
                    }
                }
            }
            let vlen = u32::from_le_bytes(r.peek(x + t.vlen_off(), 4)?.try_into().unwrap()) as u64;
            let value = r.peek(x + t.value_off(), vlen)?;
            let (lm, lc, lh) = walk(t, left, x, nonce, depth + 1, (bounds.0, Some(key)), tag_at)?;
            let (rm, rc, rh) = walk(t, right, x, nonce, depth + 1, (Some(key), bounds.1), tag_at)?;
            if lh != rh {
                return Err(Error::Invariant(format!("unequal black heights at {x}")));
            }
            let mac = t.node_mac(nonce, &t.digest(key, value), (&lm, lc), (&rm, rc));
            if mac != tag_at(r, x + MAC)? {
                return Err(Error::Mac);
            }
            Ok((mac, color, lh + u32::from(color == BLACK)))
        }

        let (root_mac, _, _) = walk(self, root, NIL, &nonce, 0, (None, None), &tag_at)?;
        if root != NIL && self.region.peek(root + COLOR, 1)?[0] != BLACK {
            return Err(Error::Invariant("red root".into()));
        }
        let nodes = self.node_offsets().ok_or(Error::Mac)?;
        let lm = self.region.peek_u64(LEFTMOST_OFF)?;
        let rm = self.region.peek_u64(RIGHTMOST_OFF)?;
        if lm != nodes.first().copied().unwrap_or(NIL) || rm != nodes.last().copied().unwrap_or(NIL) {
            return Err(Error::Invariant("leftmost/rightmost links stale".into()));
        }
        let mac_or_null = |x: u64| if x == NIL { Ok(self.null_mac) } else { tag_at(&self.region, x + MAC) };
        let header = self.header_mac(&nonce, &mac_or_null(lm)?, &mac_or_null(rm)?, &root_mac);
        if header != self.state_mac()? {
            return Err(Error::Mac);
        }
        if nodes.len() as u64 != self.len_hint {
            return Err(Error::Invariant("node count differs from handle count".into()));
        }
        Ok(())
    }
}

fn node_mac_with(
    mac: &crate::mac::Authenticator,
    nonce: &MacTag,
    digest: &Digest,
    (lm, lc): (&MacTag, u8),
    (rm, rc): (&MacTag, u8),
) -> MacTag {
    mac.compute(
        &MacInput::new(Domain::RbNode)
            .tag(nonce)
            .digest(digest)
            .tag(lm)
            .word(lc as u64)
            .tag(rm)
            .word(rc as u64),
    )
}

impl Drop for AuthRbTree {
    fn drop(&mut self) {
        let _ = self.ctx.storage().free(self.slot);
    }
}

impl std::fmt::Debug for AuthRbTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthRbTree")
            .field("slot", &self.slot)
            .field("len", &self.len_hint)
            .field("region_len", &self.region.len())
            .finish()
    }
}
