//! Reference-counted frame storage with a process-unique allocation identity.
//!
//! A [`Payload`] is a handle. Cloning the handle shares the same storage and
//! the same [`AllocId`]; moving it through a local channel therefore moves no
//! payload bytes. The only ways to get new storage are [`Payload::alloc`],
//! [`Payload::from_vec`], and the explicit copy paths ([`Payload::deep_copy`]
//! and copy-on-write in [`Payload::make_mut`]). Every copy path is counted,
//! both per source allocation and process-wide.

use std::fmt;
use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

static NEXT_ALLOC_ID: AtomicU64 = AtomicU64::new(1);
static BYTES_COPIED: AtomicU64 = AtomicU64::new(0);

/// Identity of one payload allocation. Never reused within a process run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AllocId(u64);

impl AllocId {
    fn fresh() -> Self {
        AllocId(NEXT_ALLOC_ID.fetch_add(1, Ordering::Relaxed))
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for AllocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("payload length must be positive")]
    InvalidSize,
}

/// Total payload bytes copied in this process by any copy path.
pub fn total_bytes_copied() -> u64 {
    BYTES_COPIED.load(Ordering::Relaxed)
}

struct Storage {
    id: AllocId,
    bytes: Box<[u8]>,
    /// Bytes copied out of this allocation.
    copied_out: AtomicU64,
}

#[derive(Clone)]
pub struct Payload {
    storage: Arc<Storage>,
    sealed: bool,
}

impl Payload {
    /// Allocates `len` zeroed bytes under a fresh identity.
    pub fn alloc(len: usize) -> Result<Self, PayloadError> {
        if len == 0 {
            return Err(PayloadError::InvalidSize);
        }
        Ok(Self::from_vec(vec![0u8; len]))
    }

    /// Allocates `len` bytes all set to `fill`.
    pub fn filled(len: usize, fill: u8) -> Result<Self, PayloadError> {
        if len == 0 {
            return Err(PayloadError::InvalidSize);
        }
        Ok(Self::from_vec(vec![fill; len]))
    }

    /// Takes ownership of `bytes` as a new allocation. No copy is made.
    pub fn from_vec(bytes: Vec<u8>) -> Self {
        Payload {
            storage: Arc::new(Storage {
                id: AllocId::fresh(),
                bytes: bytes.into_boxed_slice(),
                copied_out: AtomicU64::new(0),
            }),
            sealed: false,
        }
    }

    pub fn alloc_id(&self) -> AllocId {
        self.storage.id
    }

    pub fn len(&self) -> usize {
        self.storage.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.bytes.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.storage.bytes
    }

    /// True once the payload has been sent on a port.
    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub(crate) fn seal(&mut self) {
        self.sealed = true;
    }

    /// Number of handles currently sharing this allocation.
    pub fn share_count(&self) -> usize {
        Arc::strong_count(&self.storage)
    }

    /// Payload bytes that have been copied out of this allocation so far.
    pub fn bytes_copied_out(&self) -> u64 {
        self.storage.copied_out.load(Ordering::Relaxed)
    }

    /// In-place access while the payload is unsent and unshared.
    pub fn get_mut(&mut self) -> Option<&mut [u8]> {
        if self.sealed {
            return None;
        }
        Arc::get_mut(&mut self.storage).map(|s| &mut s.bytes[..])
    }

    /// Mutable access, copying into a fresh allocation if the payload has
    /// been sent or is shared (copy-on-write).
    pub fn make_mut(&mut self) -> &mut [u8] {
        if self.sealed || Arc::get_mut(&mut self.storage).is_none() {
            *self = self.deep_copy();
        }
        let storage = Arc::get_mut(&mut self.storage).expect("fresh copy is unshared");
        &mut storage.bytes[..]
    }

    /// Copies the bytes into a new, unsealed allocation with a fresh identity.
    pub fn deep_copy(&self) -> Payload {
        let len = self.len() as u64;
        self.storage.copied_out.fetch_add(len, Ordering::Relaxed);
        BYTES_COPIED.fetch_add(len, Ordering::Relaxed);
        Payload::from_vec(self.storage.bytes.to_vec())
    }
}

impl Deref for Payload {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        self.as_slice()
    }
}

impl AsRef<[u8]> for Payload {
    fn as_ref(&self) -> &[u8] {
        self.as_slice()
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payload")
            .field("alloc_id", &self.alloc_id())
            .field("len", &self.len())
            .field("sealed", &self.sealed)
            .finish()
    }
}
