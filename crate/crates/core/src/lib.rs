//! Authenticated containers whose persistent state lives in
//! adversary-writable memory, plus the tools used to attack and measure them.
//!
//! ```
//! use authds::{AuthStack, SecureContext};
//!
//! let ctx = SecureContext::from_config("cmac128", 42)?;
//! let mut stack = AuthStack::new(&ctx)?;
//! stack.push(b"hello")?;
//! stack.region_mut().tamper_xor(0, 0x01)?; // flip a bit of the stored nonce
//! assert_eq!(stack.pop(), Err(authds::Error::Mac));
//! # Ok::<(), authds::Error>(())
//! ```

pub mod bench;
pub mod context;
pub mod error;
pub mod games;
pub mod mac;
pub mod queue;
pub mod rbtree;
pub mod region;
pub mod safe_storage;
pub mod stack;

pub use context::SecureContext;
pub use error::{Error, Result};
pub use queue::AuthQueue;
pub use mac::{Authenticator, Backend, Digest, Domain, MacInput, MacKey, MacTag};
pub use rbtree::AuthRbTree;
pub use region::{AdversaryModel, AdversaryScript, TamperAction, TamperRegion, Trigger};
pub use safe_storage::{MerkleStore, SlotHandle};
pub use stack::AuthStack;
