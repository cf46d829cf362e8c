//! Adversary-visible memory.
//!
//! Every byte of persistent container state lives in a [`TamperRegion`].
//! Locals inside a container operation stand in for registers and are out of
//! the adversary's reach. Adversaries are described by an
//! [`AdversaryScript`] and act at one of three interposition points:
//!
//! * `Fast` - on every load overlapping a target ([`Trigger::EveryLoad`]);
//!   the closest library-level analogue of racing individual spills.
//! * `Slow` - between public container operations ([`Trigger::BetweenOps`]).
//! * `Single` - only at explicitly marked vulnerable points
//!   ([`Trigger::AtVulnerablePoint`]).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mac::MacTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Load,
    Store,
    Tamper,
}

/// One journal record; serializes as `{"op":..,"offset":..,"len":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JournalEntry {
    pub op: AccessKind,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryModel {
    Single,
    Slow,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    EveryLoad,
    BetweenOps,
    AtVulnerablePoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperAction {
    pub trigger: Trigger,
    pub offset: u64,
    pub bytes: Vec<u8>,
}

impl TamperAction {
    pub fn new(trigger: Trigger, offset: u64, bytes: impl Into<Vec<u8>>) -> Self {
        TamperAction {
            trigger,
            offset,
            bytes: bytes.into(),
        }
    }

    fn overlaps(&self, offset: u64, len: u64) -> bool {
        let end = self.offset + self.bytes.len() as u64;
        self.offset < offset + len && offset < end
    }
}

/// When and how memory is mutated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryScript {
    model: AdversaryModel,
    actions: Vec<TamperAction>,
}

impl AdversaryScript {
    /// Rejects triggers the model cannot use: `Slow` only acts between
    /// operations, `Single` only at vulnerable points. `Fast` may use any.
    pub fn new(model: AdversaryModel, actions: Vec<TamperAction>) -> Result<Self> {
        let allowed = |t: &Trigger| match model {
            AdversaryModel::Fast => true,
            AdversaryModel::Slow => matches!(t, Trigger::BetweenOps),
            AdversaryModel::Single => matches!(t, Trigger::AtVulnerablePoint(_)),
        };
        if actions.iter().all(|a| allowed(&a.trigger)) {
            Ok(AdversaryScript { model, actions })
        } else {
            Err(Error::ModelMismatch)
        }
    }

    pub fn slow(actions: Vec<TamperAction>) -> Result<Self> {
        AdversaryScript::new(AdversaryModel::Slow, actions)
    }

    pub fn model(&self) -> AdversaryModel {
        self.model
    }

    pub fn actions(&self) -> &[TamperAction] {
        &self.actions
    }
}

/// Growable byte store exposed to the adversary.
///
/// Offsets handed out by [`alloc`](Self::alloc) stay valid for the lifetime
/// of the region; growth never relocates existing bytes.
#[derive(Debug, Default, Clone)]
pub struct TamperRegion {
    bytes: Vec<u8>,
    journal: Option<Vec<JournalEntry>>,
    script: Option<AdversaryScript>,
    epoch: u64,
}

impl TamperRegion {
    pub fn new() -> Self {
        TamperRegion::default()
    }

    pub fn len(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Monotone counter bumped by every store and every applied tamper.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Appends `len` zero bytes and returns their offset.
    pub fn alloc(&mut self, len: u64) -> u64 {
        let offset = self.len();
        self.grow_to(offset + len);
        offset
    }

    /// Ensures the region is at least `end` bytes long.
    pub fn grow_to(&mut self, end: u64) {
        if end > self.len() {
            let end = end as usize;
            if end > self.bytes.capacity() {
                self.bytes.reserve(end.max(self.bytes.capacity() * 2) - self.bytes.len());
            }
            self.bytes.resize(end, 0);
        }
    }

    pub fn enable_journal(&mut self) {
        self.journal.get_or_insert_with(Vec::new);
    }

    pub fn take_journal(&mut self) -> Vec<JournalEntry> {
        self.journal.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn journal(&self) -> &[JournalEntry] {
        self.journal.as_deref().unwrap_or(&[])
    }

    /// The journal as JSON lines.
    pub fn journal_jsonl(&self) -> String {
        self.journal()
            .iter()
            .map(|e| serde_json::to_string(e).expect("journal entry serializes") + "\n")
            .collect()
    }

    /// Installs a script whose `EveryLoad` actions fire inside [`load`](Self::load).
    pub fn attach_script(&mut self, script: AdversaryScript) {
        self.script = Some(script);
    }

    pub fn detach_script(&mut self) -> Option<AdversaryScript> {
        self.script.take()
    }

    fn record(&mut self, op: AccessKind, offset: u64, len: u64) {
        if let Some(j) = self.journal.as_mut() {
            j.push(JournalEntry { op, offset, len });
        }
    }

    fn range(&self, offset: u64, len: u64) -> Result<std::ops::Range<usize>> {
        match offset.checked_add(len) {
            Some(end) if end <= self.len() => Ok(offset as usize..end as usize),
            _ => Err(Error::OutOfBounds {
                offset,
                len,
                size: self.len(),
            }),
        }
    }

    fn fire_on_load(&mut self, offset: u64, len: u64) {
        let Some(script) = self.script.take() else {
            return;
        };
        for action in &script.actions {
            if action.trigger == Trigger::EveryLoad && action.overlaps(offset, len) {
                self.apply(action);
            }
        }
        self.script = Some(script);
    }

    /// Applies one action if it lies inside the region; returns whether it did.
    fn apply(&mut self, action: &TamperAction) -> bool {
        match self.range(action.offset, action.bytes.len() as u64) {
            Ok(r) => {
                self.bytes[r].copy_from_slice(&action.bytes);
                self.epoch += 1;
                self.record(AccessKind::Tamper, action.offset, action.bytes.len() as u64);
                true
            }
            Err(_) => false,
        }
    }

    pub fn load_into(&mut self, offset: u64, out: &mut [u8]) -> Result<()> {
        let len = out.len() as u64;
        let r = self.range(offset, len)?;
        if self.script.is_some() {
            self.fire_on_load(offset, len);
        }
        out.copy_from_slice(&self.bytes[r]);
        self.record(AccessKind::Load, offset, len);
        Ok(())
    }

    pub fn load(&mut self, offset: u64, len: u64) -> Result<Vec<u8>> {
        self.range(offset, len)?;
        let mut out = vec![0u8; len as usize];
        self.load_into(offset, &mut out)?;
        Ok(out)
    }

    pub fn load_u64(&mut self, offset: u64) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.load_into(offset, &mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    pub fn load_u32(&mut self, offset: u64) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.load_into(offset, &mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn load_u8(&mut self, offset: u64) -> Result<u8> {
        let mut buf = [0u8; 1];
        self.load_into(offset, &mut buf)?;
        Ok(buf[0])
    }

    /// Loads a stored tag; bits above `width` make it unreadable, which is
    /// reported as an authentication failure.
    pub fn load_tag(&mut self, offset: u64, width: u32) -> Result<MacTag> {
        let mut buf = [0u8; 16];
        let len = crate::mac::tag_byte_len(width);
        self.load_into(offset, &mut buf[..len])?;
        MacTag::from_le_slice(&buf[..len], width).ok_or(Error::Mac)
    }

    pub fn store(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        let r = self.range(offset, data.len() as u64)?;
        self.bytes[r].copy_from_slice(data);
        self.epoch += 1;
        self.record(AccessKind::Store, offset, data.len() as u64);
        Ok(())
    }

    pub fn store_u64(&mut self, offset: u64, value: u64) -> Result<()> {
        self.store(offset, &value.to_le_bytes())
    }

    pub fn store_u32(&mut self, offset: u64, value: u32) -> Result<()> {
        self.store(offset, &value.to_le_bytes())
    }

    pub fn store_u8(&mut self, offset: u64, value: u8) -> Result<()> {
        self.store(offset, &[value])
    }

    pub fn store_tag(&mut self, offset: u64, tag: &MacTag) -> Result<()> {
        let mut buf = [0u8; 16];
        let len = tag.byte_len();
        tag.write_le(&mut buf[..len]);
        self.store(offset, &buf[..len])
    }

    /// Adversary read: no hooks, no journal.
    pub fn peek(&self, offset: u64, len: u64) -> Result<&[u8]> {
        let r = self.range(offset, len)?;
        Ok(&self.bytes[r])
    }

    pub fn peek_u64(&self, offset: u64) -> Result<u64> {
        Ok(u64::from_le_bytes(self.peek(offset, 8)?.try_into().unwrap()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Adversary write, journaled as `tamper`.
    pub fn tamper(&mut self, offset: u64, bytes: &[u8]) -> Result<()> {
        self.range(offset, bytes.len() as u64)?;
        self.apply(&TamperAction::new(Trigger::BetweenOps, offset, bytes));
        Ok(())
    }

    /// XORs one byte in place; the usual single-byte mutation in tamper sweeps.
    pub fn tamper_xor(&mut self, offset: u64, mask: u8) -> Result<()> {
        let old = self.peek(offset, 1)?[0];
        self.tamper(offset, &[old ^ mask])
    }

    /// Fires the `BetweenOps` actions of a `Slow` script. A `Single` script
    /// only acts at labelled points, so this leaves the region untouched for
    /// it. Returns the number of actions applied.
    pub fn fire_between_ops(&mut self, script: &AdversaryScript) -> Result<usize> {
        match script.model {
            AdversaryModel::Fast => Err(Error::ModelMismatch),
            AdversaryModel::Single => Ok(0),
            AdversaryModel::Slow => Ok(self.fire_matching(script, |t| *t == Trigger::BetweenOps)),
        }
    }

    /// Fires the actions of a `Single` script registered for `label`.
    pub fn fire_vulnerable_point(&mut self, script: &AdversaryScript, label: &str) -> Result<usize> {
        match script.model {
            AdversaryModel::Fast => Err(Error::ModelMismatch),
            AdversaryModel::Slow => Ok(0),
            AdversaryModel::Single => Ok(self.fire_matching(script, |t| {
                matches!(t, Trigger::AtVulnerablePoint(l) if l == label)
            })),
        }
    }

    fn fire_matching(&mut self, script: &AdversaryScript, pred: impl Fn(&Trigger) -> bool) -> usize {
        script
            .actions
            .iter()
            .filter(|a| pred(&a.trigger))
            .filter(|a| self.apply(a))
            .count()
    }

    /// Whether `needle` occurs anywhere in the region.
    pub fn contains(&self, needle: &[u8]) -> bool {
        !needle.is_empty() && self.bytes.windows(needle.len()).any(|w| w == needle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region_123() -> TamperRegion {
        let mut r = TamperRegion::new();
        let off = r.alloc(3);
        r.store(off, &[1, 2, 3]).unwrap();
        r
    }

    #[test]
    fn store_then_load() {
        let mut r = region_123();
        assert_eq!(r.load(0, 3).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn fast_script_rewrites_on_load() {
        let mut r = region_123();
        let script = AdversaryScript::new(
            AdversaryModel::Fast,
            vec![TamperAction::new(Trigger::EveryLoad, 0, [9])],
        )
        .unwrap();
        r.attach_script(script);
        assert_eq!(r.load(0, 3).unwrap(), vec![9, 2, 3]);
        // A store is overwritten again by the next load.
        r.store(0, &[1]).unwrap();
        assert_eq!(r.load(0, 1).unwrap(), vec![9]);
        // Loads that do not overlap the target leave it alone.
        r.detach_script();
        r.store(0, &[1]).unwrap();
        r.attach_script(AdversaryScript::new(
            AdversaryModel::Fast,
            vec![TamperAction::new(Trigger::EveryLoad, 0, [9])],
        )
        .unwrap());
        assert_eq!(r.load(1, 2).unwrap(), vec![2, 3]);
        assert_eq!(r.peek(0, 1).unwrap(), &[1]);
    }

    #[test]
    fn out_of_bounds() {
        let mut r = region_123();
        assert!(matches!(r.load(2, 2), Err(Error::OutOfBounds { .. })));
        assert!(matches!(r.store(3, &[0]), Err(Error::OutOfBounds { .. })));
        assert!(matches!(r.load(u64::MAX, 2), Err(Error::OutOfBounds { .. })));
        // Zero-length stores are no-ops even at the end.
        let before = r.epoch();
        r.store(3, &[]).unwrap();
        assert_eq!(r.epoch(), before);
    }

    #[test]
    fn slow_and_single_leave_within_op_values_alone() {
        for model in [AdversaryModel::Slow, AdversaryModel::Single] {
            let mut r = region_123();
            let trigger = match model {
                AdversaryModel::Slow => Trigger::BetweenOps,
                _ => Trigger::AtVulnerablePoint("vuln".into()),
            };
            r.attach_script(
                AdversaryScript::new(model, vec![TamperAction::new(trigger, 0, [7])]).unwrap(),
            );
            r.store(0, &[5]).unwrap();
            assert_eq!(r.load(0, 1).unwrap(), vec![5]);
        }
    }

    #[test]
    fn script_validation() {
        let every = TamperAction::new(Trigger::EveryLoad, 0, [1]);
        assert_eq!(
            AdversaryScript::slow(vec![every.clone()]),
            Err(Error::ModelMismatch)
        );
        assert_eq!(
            AdversaryScript::new(AdversaryModel::Single, vec![every.clone()]),
            Err(Error::ModelMismatch)
        );
        assert!(AdversaryScript::new(AdversaryModel::Fast, vec![every]).is_ok());
    }

    #[test]
    fn fire_between_ops_rules() {
        let mut r = region_123();
        let empty = AdversaryScript::slow(vec![]).unwrap();
        assert_eq!(r.fire_between_ops(&empty).unwrap(), 0);
        assert_eq!(r.as_bytes(), &[1, 2, 3]);

        let slow = AdversaryScript::slow(vec![TamperAction::new(Trigger::BetweenOps, 1, [0xee])]).unwrap();
        assert_eq!(r.fire_between_ops(&slow).unwrap(), 1);
        assert_eq!(r.as_bytes(), &[1, 0xee, 3]);

        let single = AdversaryScript::new(
            AdversaryModel::Single,
            vec![TamperAction::new(Trigger::AtVulnerablePoint("a".into()), 0, [0])],
        )
        .unwrap();
        assert_eq!(r.fire_vulnerable_point(&single, "b").unwrap(), 0);
        assert_eq!(r.fire_between_ops(&single).unwrap(), 0);
        assert_eq!(r.as_bytes(), &[1, 0xee, 3]);
        assert_eq!(r.fire_vulnerable_point(&single, "a").unwrap(), 1);
        assert_eq!(r.as_bytes(), &[0, 0xee, 3]);

        let fast = AdversaryScript::new(AdversaryModel::Fast, vec![]).unwrap();
        assert_eq!(r.fire_between_ops(&fast), Err(Error::ModelMismatch));
    }

    #[test]
    fn journal_jsonl_schema() {
        let mut r = TamperRegion::new();
        r.enable_journal();
        let off = r.alloc(4);
        r.store_u32(off, 7).unwrap();
        r.load_u32(off).unwrap();
        r.tamper(off + 1, &[1]).unwrap();
        assert_eq!(
            r.journal_jsonl(),
            "{\"op\":\"store\",\"offset\":0,\"len\":4}\n\
             {\"op\":\"load\",\"offset\":0,\"len\":4}\n\
             {\"op\":\"tamper\",\"offset\":1,\"len\":1}\n"
        );
    }

    #[test]
    fn replaying_stores_reproduces_contents() {
        let mut a = TamperRegion::new();
        a.enable_journal();
        a.alloc(64);
        let writes: Vec<(u64, Vec<u8>)> = (0..40u64)
            .map(|i| ((i * 7) % 60, vec![i as u8; (i % 4 + 1) as usize]))
            .collect();
        for (off, data) in &writes {
            a.store(*off, data).unwrap();
        }
        let mut b = TamperRegion::new();
        b.alloc(64);
        let stores = a.journal().iter().filter(|e| e.op == AccessKind::Store).count();
        assert_eq!(stores, writes.len());
        for (off, data) in &writes {
            b.store(*off, data).unwrap();
        }
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn allocations_are_stable() {
        let mut r = TamperRegion::new();
        let a = r.alloc(10);
        r.store(a, b"0123456789").unwrap();
        for _ in 0..10 {
            r.alloc(1000);
        }
        assert_eq!(r.peek(a, 10).unwrap(), b"0123456789");
    }
}
