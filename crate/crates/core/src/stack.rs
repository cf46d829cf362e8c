//! LIFO container authenticated by a MAC chain.
//!
//! Each push stores the previous state MAC next to the element and makes
//! `MAC(H(x), nonce, size, previous)` the new state MAC. The chain starts at
//! the nonce, so the stack is empty exactly when the state MAC equals it.
//!
//! Region layout with `T` tag bytes: header `[nonce: T][size: u64][top: u64]`
//! followed by entries `[data][data len: u32][previous state MAC: T]`.
//! `top` is the offset just past the newest entry.

use std::ops::Range;
use std::rc::Rc;

use crate::context::SecureContext;
use crate::error::{Error, Result};
use crate::mac::{element_hash, Domain, ElementHasher, MacInput, MacTag};
use crate::region::{AdversaryScript, TamperRegion};
use crate::safe_storage::SlotHandle;

const NONCE_OFF: u64 = 0;

/// Byte ranges of one stored entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackEntryLayout {
    pub data: Range<u64>,
    pub len: Range<u64>,
    pub prev_mac: Range<u64>,
}

/// The verified top entry, kept in locals between checking and mutating.
struct VerifiedTop {
    value: Vec<u8>,
    size: u64,
    nonce: MacTag,
    prev: MacTag,
    entry_start: u64,
}

pub struct AuthStack {
    ctx: Rc<SecureContext>,
    region: TamperRegion,
    slot: SlotHandle,
    hasher: ElementHasher,
}

impl AuthStack {
    pub fn new(ctx: &Rc<SecureContext>) -> Result<Self> {
        AuthStack::with_hasher(ctx, element_hash)
    }

    pub fn with_hasher(ctx: &Rc<SecureContext>, hasher: ElementHasher) -> Result<Self> {
        let slot = ctx.storage().alloc()?;
        let mut s = AuthStack {
            ctx: Rc::clone(ctx),
            region: TamperRegion::new(),
            slot,
            hasher,
        };
        let nonce = ctx.fresh_nonce();
        let header = s.header_len();
        s.region.alloc(header);
        s.region.store_tag(NONCE_OFF, &nonce)?;
        s.region.store_u64(s.size_off(), 0)?;
        s.region.store_u64(s.top_off(), header)?;
        ctx.storage().write(slot, &nonce)?;
        Ok(s)
    }

    fn t(&self) -> u64 {
        self.ctx.mac().tag_len() as u64
    }

    fn width(&self) -> u32 {
        self.ctx.mac().width()
    }

    pub fn size_off(&self) -> u64 {
        self.t()
    }

    pub fn top_off(&self) -> u64 {
        self.t() + 8
    }

    pub fn header_len(&self) -> u64 {
        self.t() + 16
    }

    pub fn nonce_range(&self) -> Range<u64> {
        NONCE_OFF..self.t()
    }

    pub fn region(&self) -> &TamperRegion {
        &self.region
    }

    pub fn region_mut(&mut self) -> &mut TamperRegion {
        &mut self.region
    }

    /// Applies a Slow/Single script's between-operation actions.
    pub fn between_ops(&mut self, script: &AdversaryScript) -> Result<usize> {
        self.region.fire_between_ops(script)
    }

    pub fn context(&self) -> &Rc<SecureContext> {
        &self.ctx
    }

    /// The current state MAC, read through safe storage.
    pub fn state_mac(&self) -> Result<MacTag> {
        self.ctx.storage().read(self.slot)
    }

    fn element_mac(&self, value: &[u8], nonce: &MacTag, size: u64, prev: &MacTag) -> MacTag {
        let h = (self.hasher)(value);
        self.ctx.mac().compute(
            &MacInput::new(Domain::StackData)
                .digest(&h)
                .tag(nonce)
                .word(size)
                .tag(prev),
        )
    }

    /// Offset arithmetic on values read from the region; anything impossible
    /// for an intact stack is a tamper signal.
    fn entry_bounds(&mut self, top: u64) -> Result<(u64, u64, u64)> {
        let t = self.t();
        let prev_off = top.checked_sub(t).ok_or(Error::Mac)?;
        let len_off = prev_off.checked_sub(4).ok_or(Error::Mac)?;
        let len = self.region.load_u32(len_off)? as u64;
        let data_off = len_off.checked_sub(len).ok_or(Error::Mac)?;
        if data_off < self.header_len() {
            return Err(Error::Mac);
        }
        Ok((data_off, len, prev_off))
    }

    /// Checks the top entry against the state MAC (the shared core of top,
    /// pop, size and replace_top). An empty stored size is accepted only when
    /// the state MAC equals the nonce.
    fn verify_top(&mut self) -> Result<VerifiedTop> {
        let state = self.ctx.storage().read(self.slot)?;
        let w = self.width();
        let nonce = self.region.load_tag(NONCE_OFF, w)?;
        let size = self.region.load_u64(self.size_off())?;
        if size == 0 {
            return Err(if state == nonce {
                Error::EmptyStructure
            } else {
                Error::Mac
            });
        }
        let top = self.region.load_u64(self.top_off())?;
        let (data_off, len, prev_off) = self.entry_bounds(top)?;
        let value = self.region.load(data_off, len)?;
        let prev = self.region.load_tag(prev_off, w)?;
        let mac = self.element_mac(&value, &nonce, size, &prev);
        if mac != state {
            return Err(Error::Mac);
        }
        Ok(VerifiedTop {
            value,
            size,
            nonce,
            prev,
            entry_start: data_off,
        })
    }

    fn guarded<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        f(self).map_err(Error::integrity)
    }

    pub fn push(&mut self, value: &[u8]) -> Result<()> {
        self.guarded(|s| {
            let state = s.ctx.storage().read(s.slot)?;
            let w = s.width();
            let nonce = s.region.load_tag(NONCE_OFF, w)?;
            let size = s
                .region
                .load_u64(s.size_off())?
                .checked_add(1)
                .ok_or(Error::Mac)?;
            let top = s.region.load_u64(s.top_off())?;
            if top < s.header_len() || top > s.region.len() {
                return Err(Error::Mac);
            }
            let len = u32::try_from(value.len())
                .map_err(|_| Error::Config("element larger than 4 GiB".into()))?;
            let t = s.t();
            let end = top + value.len() as u64 + 4 + t;
            s.region.grow_to(end);
            s.region.store(top, value)?;
            s.region.store_u32(end - t - 4, len)?;
            s.region.store_tag(end - t, &state)?;
            s.region.store_u64(s.size_off(), size)?;
            s.region.store_u64(s.top_off(), end)?;
            let mac = s.element_mac(value, &nonce, size, &state);
            s.ctx.storage().write(s.slot, &mac)
        })
    }

    pub fn top(&mut self) -> Result<Vec<u8>> {
        self.guarded(|s| Ok(s.verify_top()?.value))
    }

    /// Verifies, commits the previous state MAC to safe storage, then
    /// shrinks the region copy.
    pub fn pop(&mut self) -> Result<Vec<u8>> {
        self.guarded(|s| {
            let v = s.verify_top()?;
            s.ctx.storage().write(s.slot, &v.prev)?;
            s.region.store_u64(s.size_off(), v.size - 1)?;
            s.region.store_u64(s.top_off(), v.entry_start)?;
            Ok(v.value)
        })
    }

    pub fn size(&mut self) -> Result<u64> {
        self.guarded(|s| match s.verify_top() {
            Ok(v) => Ok(v.size),
            Err(Error::EmptyStructure) => Ok(0),
            Err(e) => Err(e),
        })
    }

    pub fn is_empty(&mut self) -> Result<bool> {
        Ok(self.size()? == 0)
    }

    /// Same result as `pop` followed by `push(value)`, with one verification
    /// and one safe-storage write.
    pub fn replace_top(&mut self, value: &[u8]) -> Result<()> {
        self.guarded(|s| {
            let v = s.verify_top()?;
            let len = u32::try_from(value.len())
                .map_err(|_| Error::Config("element larger than 4 GiB".into()))?;
            let t = s.t();
            let end = v.entry_start + value.len() as u64 + 4 + t;
            s.region.grow_to(end);
            s.region.store(v.entry_start, value)?;
            s.region.store_u32(end - t - 4, len)?;
            s.region.store_tag(end - t, &v.prev)?;
            s.region.store_u64(s.top_off(), end)?;
            let mac = s.element_mac(value, &v.nonce, v.size, &v.prev);
            s.ctx.storage().write(s.slot, &mac)
        })
    }

    /// Entry layouts bottom to top, read without hooks. Meant for adversaries
    /// and tests; returns `None` if the stored layout is inconsistent.
    pub fn entry_layouts(&self) -> Option<Vec<StackEntryLayout>> {
        let t = self.t();
        let header = self.header_len();
        let size = self.region.peek_u64(self.size_off()).ok()?;
        let mut top = self.region.peek_u64(self.top_off()).ok()?;
        let mut out = Vec::new();
        for _ in 0..size {
            let prev = top.checked_sub(t)?;
            let len_off = prev.checked_sub(4)?;
            let len = u32::from_le_bytes(self.region.peek(len_off, 4).ok()?.try_into().ok()?);
            let data = len_off.checked_sub(len as u64)?;
            if data < header {
                return None;
            }
            out.push(StackEntryLayout {
                data: data..len_off,
                len: len_off..prev,
                prev_mac: prev..top,
            });
            top = data;
        }
        out.reverse();
        Some(out)
    }
}

impl Drop for AuthStack {
    fn drop(&mut self) {
        let _ = self.ctx.storage().free(self.slot);
    }
}

impl std::fmt::Debug for AuthStack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuthStack")
            .field("slot", &self.slot)
            .field("region_len", &self.region.len())
            .finish()
    }
}
