//! Software-defined storage: deduplicating content store with an LRU cache.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::payload_digest;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StorageError {
    #[error("key {0:?} not found")]
    NotFound(String),
}

/// Least-recently-used cache with deterministic, serializable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LruCache<V> {
    capacity: usize,
    clock: u64,
    entries: BTreeMap<String, (u64, V)>,
    order: BTreeMap<u64, String>,
}

impl<V: Clone> LruCache<V> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            clock: 0,
            entries: BTreeMap::new(),
            order: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn touch(&mut self, key: &str) {
        self.clock += 1;
        let stamp = self.clock;
        if let Some((old, _)) = self.entries.get_mut(key) {
            self.order.remove(old);
            *old = stamp;
            self.order.insert(stamp, key.to_string());
        }
    }

    pub fn get(&mut self, key: &str) -> Option<V> {
        if !self.entries.contains_key(key) {
            return None;
        }
        self.touch(key);
        self.entries.get(key).map(|(_, v)| v.clone())
    }

    /// Inserts or refreshes `key`, evicting the least recently used entry if full.
    pub fn put(&mut self, key: &str, value: V) -> Option<String> {
        if self.capacity == 0 {
            return None;
        }
        if let Some(slot) = self.entries.get_mut(key) {
            slot.1 = value;
            self.touch(key);
            return None;
        }
        let mut evicted = None;
        if self.entries.len() >= self.capacity {
            if let Some((_, victim)) = self.order.pop_first() {
                self.entries.remove(&victim);
                evicted = Some(victim);
            }
        }
        self.clock += 1;
        self.order.insert(self.clock, key.to_string());
        self.entries.insert(key.to_string(), (self.clock, value));
        evicted
    }

    pub fn remove(&mut self, key: &str) {
        if let Some((stamp, _)) = self.entries.remove(key) {
            self.order.remove(&stamp);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreReceipt {
    pub blob: u64,
    pub deduplicated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Blob {
    data: Vec<u8>,
    refs: u64,
}

/// Keys map to content-addressed blobs; identical content is stored once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageController {
    keys: BTreeMap<String, u64>,
    blobs: BTreeMap<u64, Blob>,
    cache: LruCache<u64>,
    pub hits: u64,
    pub misses: u64,
}

impl StorageController {
    pub fn new(cache_capacity: usize) -> Self {
        Self {
            keys: BTreeMap::new(),
            blobs: BTreeMap::new(),
            cache: LruCache::new(cache_capacity),
            hits: 0,
            misses: 0,
        }
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.len()
    }

    /// Blob address for `data`: its digest, probing upward on a digest collision.
    fn address(&self, data: &[u8]) -> (u64, bool) {
        let mut addr = payload_digest(data);
        loop {
            match self.blobs.get(&addr) {
                None => return (addr, false),
                Some(b) if b.data == data => return (addr, true),
                Some(_) => addr = addr.wrapping_add(1),
            }
        }
    }

    fn release(&mut self, addr: u64) {
        if let Some(b) = self.blobs.get_mut(&addr) {
            b.refs -= 1;
            if b.refs == 0 {
                self.blobs.remove(&addr);
            }
        }
    }

    pub fn storage_put(&mut self, key: &str, value: &[u8]) -> StoreReceipt {
        let (addr, existing) = self.address(value);
        if existing {
            self.blobs.get_mut(&addr).unwrap().refs += 1;
        } else {
            self.blobs.insert(
                addr,
                Blob {
                    data: value.to_vec(),
                    refs: 1,
                },
            );
        }
        if let Some(old) = self.keys.insert(key.to_string(), addr) {
            self.release(old);
        }
        self.cache.remove(key);
        StoreReceipt {
            blob: addr,
            deduplicated: existing,
        }
    }

    pub fn storage_get(&mut self, key: &str) -> Result<(Vec<u8>, CacheOutcome), StorageError> {
        if let Some(addr) = self.cache.get(key) {
            self.hits += 1;
            return Ok((self.blobs[&addr].data.clone(), CacheOutcome::Hit));
        }
        let addr = *self
            .keys
            .get(key)
            .ok_or_else(|| StorageError::NotFound(key.to_string()))?;
        self.misses += 1;
        self.cache.put(key, addr);
        Ok((self.blobs[&addr].data.clone(), CacheOutcome::Miss))
    }
}
