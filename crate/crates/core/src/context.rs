//! Per-thread trusted state shared by containers: the MAC engine, the safe
//! storage holding their state MACs, and the nonce source.

use std::cell::{RefCell, RefMut};
use std::rc::Rc;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::mac::{Authenticator, MacTag};
use crate::safe_storage::MerkleStore;

#[derive(Debug)]
pub struct SecureContext {
    mac: Arc<Authenticator>,
    storage: RefCell<MerkleStore>,
    nonce_rng: RefCell<ChaCha20Rng>,
}

impl SecureContext {
    pub fn new(mac: Arc<Authenticator>) -> Rc<Self> {
        SecureContext::build(mac, ChaCha20Rng::from_entropy())
    }

    /// Nonces drawn from a seeded generator, for reproducible runs.
    pub fn with_seed(mac: Arc<Authenticator>, seed: u64) -> Rc<Self> {
        SecureContext::build(mac, ChaCha20Rng::seed_from_u64(seed))
    }

    /// Shorthand: a seeded context over a fresh seeded key.
    pub fn from_config(backend: &str, seed: u64) -> Result<Rc<Self>> {
        let mac = Authenticator::from_config(backend, Some(seed))?;
        Ok(SecureContext::with_seed(Arc::new(mac), seed ^ 0x6e6f_6e63_6573))
    }

    fn build(mac: Arc<Authenticator>, rng: ChaCha20Rng) -> Rc<Self> {
        Rc::new(SecureContext {
            storage: RefCell::new(MerkleStore::new(Arc::clone(&mac))),
            mac,
            nonce_rng: RefCell::new(rng),
        })
    }

    pub fn mac(&self) -> &Authenticator {
        &self.mac
    }

    pub fn mac_arc(&self) -> Arc<Authenticator> {
        Arc::clone(&self.mac)
    }

    pub fn storage(&self) -> RefMut<'_, MerkleStore> {
        self.storage.borrow_mut()
    }

    /// A fresh random tag-width value.
    pub fn fresh_nonce(&self) -> MacTag {
        let mut buf = [0u8; 16];
        self.nonce_rng.borrow_mut().fill_bytes(&mut buf);
        MacTag::truncated(u128::from_le_bytes(buf), self.mac.width())
    }
}
