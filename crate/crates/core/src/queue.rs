//! FIFO container authenticated by index MACs.
//!
//! The element enqueued as the i-th overall carries `MAC(H(x), nonce, i)`;
//! the state MAC is `MAC(nonce, back, front)`. Indices only grow, so an old
//! element MAC can never match a later position.
//!
//! Region layout with `T` tag bytes: header
//! `[nonce: T][front index][back index][front ptr][back ptr][end ptr]`
//! (all u64) followed by entries `[data len: u32][element MAC: T][data]`.
//! The pointers locate the front entry, the back entry and the append
//! position.
//!
//! `dequeue` checks only the state MAC, not the element it removes. Call
//! `front` first to obtain a verified value.

use std::ops::Range;
use std::rc::Rc;

use crate::context::SecureContext;
use crate::error::{Error, Result};
use crate::mac::{element_hash, Domain, ElementHasher, MacInput, MacTag};
use crate::region::{AdversaryScript, TamperRegion};
use crate::safe_storage::SlotHandle;

/// A dead prefix at least this long, and at least as long as the live part,
/// is reclaimed by moving the live entries down.
const COMPACT_THRESHOLD: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueEntryLayout {
    pub len: Range<u64>,
    pub mac: Range<u64>,
    pub data: Range<u64>,
}

struct VerifiedState {
    nonce: MacTag,
    front: u64,
    back: u64,
}

impl VerifiedState {
    fn size(&self) -> u64 {
        self.back + 1 - self.front
    }
}

pub struct AuthQueue {
    ctx: Rc<SecureContext>,
    region: TamperRegion,
    slot: SlotHandle,
    hasher: ElementHasher,
    highest_issued: u64,
    data_tags_issued: u64,
}

impl AuthQueue {
    pub fn new(ctx: &Rc<SecureContext>) -> Result<Self> {
        AuthQueue::with_hasher(ctx, element_hash)
    }

    pub fn with_hasher(ctx: &Rc<SecureContext>, hasher: ElementHasher) -> Result<Self> {
        let slot = ctx.storage().alloc()?;
        let mut q = AuthQueue {
            ctx: Rc::clone(ctx),
            region: TamperRegion::new(),
            slot,
            hasher,
            highest_issued: 0,
            data_tags_issued: 0,
        };
        let nonce = ctx.fresh_nonce();
        let header = q.header_len();
        q.region.alloc(header);
        q.region.store_tag(0, &nonce)?;
        q.region.store_u64(q.front_off(), 1)?;
        q.region.store_u64(q.back_off(), 0)?;
        q.reset_pointers()?;
        let state = q.state_tag(&nonce, 0, 1);
        ctx.storage().write(slot, &state)?;
        Ok(q)
    }

    fn t(&self) -> u64 {
        self.ctx.mac().tag_len() as u64
    }

    pub fn nonce_range(&self) -> Range<u64> {
        0..self.t()
    }

    pub fn front_off(&self) -> u64 {
        self.t()
    }

    pub fn back_off(&self) -> u64 {
        self.t() + 8
    }

    pub fn front_ptr_off(&self) -> u64 {
        self.t() + 16
    }

    pub fn back_ptr_off(&self) -> u64 {
        self.t() + 24
    }

    pub fn end_ptr_off(&self) -> u64 {
        self.t() + 32
    }

    pub fn header_len(&self) -> u64 {
        self.t() + 40
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

    pub fn state_mac(&self) -> Result<MacTag> {
        self.ctx.storage().read(self.slot)
    }

    /// Number of element MACs created for storage over this instance's
    /// lifetime. Equals the highest issued index: each index is used once.
    pub fn data_tags_issued(&self) -> u64 {
        self.data_tags_issued
    }

    pub fn highest_issued_index(&self) -> u64 {
        self.highest_issued
    }

    fn state_tag(&self, nonce: &MacTag, back: u64, front: u64) -> MacTag {
        self.ctx.mac().compute(
            &MacInput::new(Domain::QueueState)
                .tag(nonce)
                .word(back)
                .word(front),
        )
    }

    fn data_tag(&self, value: &[u8], nonce: &MacTag, index: u64) -> MacTag {
        let h = (self.hasher)(value);
        self.ctx.mac().compute(
            &MacInput::new(Domain::QueueData)
                .digest(&h)
                .tag(nonce)
                .word(index),
        )
    }

    fn reset_pointers(&mut self) -> Result<()> {
        let h = self.header_len();
        self.region.store_u64(self.front_ptr_off(), h)?;
        self.region.store_u64(self.back_ptr_off(), h)?;
        self.region.store_u64(self.end_ptr_off(), h)
    }

    fn verify_state(&mut self) -> Result<VerifiedState> {
        let state = self.ctx.storage().read(self.slot)?;
        let nonce = self.region.load_tag(0, self.ctx.mac().width())?;
        let front = self.region.load_u64(self.front_off())?;
        let back = self.region.load_u64(self.back_off())?;
        if self.state_tag(&nonce, back, front) != state || back.wrapping_add(1) < front {
            return Err(Error::Mac);
        }
        Ok(VerifiedState { nonce, front, back })
    }

    /// Reads the entry at `ptr`, returning (value, stored MAC, next entry).
    fn read_entry(&mut self, ptr: u64) -> Result<(Vec<u8>, MacTag, u64)> {
        let t = self.t();
        let end = self.region.load_u64(self.end_ptr_off())?;
        if ptr < self.header_len() || ptr.checked_add(4 + t).is_none_or(|e| e > end) {
            return Err(Error::Mac);
        }
        let len = self.region.load_u32(ptr)? as u64;
        let data = ptr + 4 + t;
        if data + len > end {
            return Err(Error::Mac);
        }
        let mac = self.region.load_tag(ptr + 4, self.ctx.mac().width())?;
        let value = self.region.load(data, len)?;
        Ok((value, mac, data + len))
    }

    fn verified_at(&mut self, ptr_off: u64, index: u64, nonce: &MacTag) -> Result<Vec<u8>> {
        let ptr = self.region.load_u64(ptr_off)?;
        let (value, mac, _) = self.read_entry(ptr)?;
        if self.data_tag(&value, nonce, index) != mac {
            return Err(Error::Mac);
        }
        Ok(value)
    }

    fn guarded<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        f(self).map_err(Error::integrity)
    }

    pub fn enqueue(&mut self, value: &[u8]) -> Result<()> {
        self.guarded(|q| {
            let s = q.verify_state()?;
            let back = s.back.checked_add(1).ok_or(Error::IndexOverflow)?;
            let len = u32::try_from(value.len())
                .map_err(|_| Error::Config("element larger than 4 GiB".into()))?;
            let end = q.region.load_u64(q.end_ptr_off())?;
            if end < q.header_len() || end > q.region.len() {
                return Err(Error::Mac);
            }
            let t = q.t();
            let mac = q.data_tag(value, &s.nonce, back);
            q.data_tags_issued += 1;
            q.highest_issued = back;
            let new_end = end + 4 + t + value.len() as u64;
            q.region.grow_to(new_end);
            q.region.store_u32(end, len)?;
            q.region.store_tag(end + 4, &mac)?;
            q.region.store(end + 4 + t, value)?;
            if s.size() == 0 {
                q.region.store_u64(q.front_ptr_off(), end)?;
            }
            q.region.store_u64(q.back_ptr_off(), end)?;
            q.region.store_u64(q.end_ptr_off(), new_end)?;
            q.region.store_u64(q.back_off(), back)?;
            let state = q.state_tag(&s.nonce, back, s.front);
            q.ctx.storage().write(q.slot, &state)
        })
    }

    /// Removes the front element after checking the state MAC only.
    pub fn dequeue(&mut self) -> Result<()> {
        self.guarded(|q| {
            let s = q.verify_state()?;
            if s.size() == 0 {
                return Err(Error::EmptyStructure);
            }
            let front = s.front + 1;
            let state = q.state_tag(&s.nonce, s.back, front);
            q.ctx.storage().write(q.slot, &state)?;
            q.region.store_u64(q.front_off(), front)?;
            if front > s.back {
                return q.reset_pointers();
            }
            let ptr = q.region.load_u64(q.front_ptr_off())?;
            let (_, _, next) = q.read_entry(ptr)?;
            q.region.store_u64(q.front_ptr_off(), next)?;
            q.maybe_compact(next)
        })
    }

    fn maybe_compact(&mut self, front_ptr: u64) -> Result<()> {
        let header = self.header_len();
        let end = self.region.load_u64(self.end_ptr_off())?;
        let dead = front_ptr - header;
        if dead < COMPACT_THRESHOLD || dead < end.saturating_sub(front_ptr) {
            return Ok(());
        }
        let back_ptr = self.region.load_u64(self.back_ptr_off())?;
        if back_ptr < front_ptr || end < back_ptr {
            return Err(Error::Mac);
        }
        let live = self.region.load(front_ptr, end - front_ptr)?;
        self.region.store(header, &live)?;
        self.region.store_u64(self.front_ptr_off(), header)?;
        self.region.store_u64(self.back_ptr_off(), back_ptr - dead)?;
        self.region.store_u64(self.end_ptr_off(), end - dead)
    }

    pub fn front(&mut self) -> Result<Vec<u8>> {
        self.guarded(|q| {
            let s = q.verify_state()?;
            if s.size() == 0 {
                return Err(Error::EmptyStructure);
            }
            q.verified_at(q.front_ptr_off(), s.front, &s.nonce)
        })
    }

    /// Verifies the newest element against the back index, which must also
    /// be the newest index this instance issued.
    pub fn back(&mut self) -> Result<Vec<u8>> {
        self.guarded(|q| {
            let s = q.verify_state()?;
            if s.size() == 0 {
                return Err(Error::EmptyStructure);
            }
            if s.back != q.highest_issued {
                return Err(Error::Mac);
            }
            q.verified_at(q.back_ptr_off(), s.back, &s.nonce)
        })
    }

    pub fn size(&mut self) -> Result<u64> {
        self.guarded(|q| Ok(q.verify_state()?.size()))
    }

    pub fn is_empty(&mut self) -> Result<bool> {
        Ok(self.size()? == 0)
    }

    /// Live entry layouts front to back, read without hooks.
    pub fn entry_layouts(&self) -> Option<Vec<QueueEntryLayout>> {
        let t = self.t();
        let front = self.region.peek_u64(self.front_off()).ok()?;
        let back = self.region.peek_u64(self.back_off()).ok()?;
        let mut ptr = self.region.peek_u64(self.front_ptr_off()).ok()?;
        let mut out = Vec::new();
        for _ in front..=back {
            let len = u32::from_le_bytes(self.region.peek(ptr, 4).ok()?.try_into().ok()?) as u64;
            let data = ptr + 4 + t;
            self.region.peek(data, len).ok()?;
            out.push(QueueEntryLayout {
                len: ptr..ptr + 4,
                mac: ptr + 4..data,
                data: data..data + len,
            });
            ptr = data + len;
        }
        Some(out)
    }
}

impl Drop for AuthQueue {
    fn drop(&mut self) {
        let _ = self.ctx.storage().free(self.slot);
    }
}

impl std::fmt::Debug for AuthQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthQueue")
            .field("slot", &self.slot)
            .field("region_len", &self.region.len())
            .finish()
    }
}
