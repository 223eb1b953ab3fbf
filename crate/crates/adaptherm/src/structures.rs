//! Memoized per-nodalization structures shared across threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use adaptherm_core::piml::{PhysicsContext, Structure, StructureCache};

/// Unbounded map from nodalization to its coarse structure. There are at
/// most 9¹¹ keys in principle, but training visits a few hundred.
#[derive(Default)]
pub struct SharedStructures {
    map: Mutex<HashMap<Vec<usize>, Arc<Structure>>>,
}

impl SharedStructures {
    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl StructureCache for SharedStructures {
    fn get(&self, ns: &[usize]) -> Option<Arc<Structure>> {
        self.map.lock().unwrap().get(ns).cloned()
    }

    fn put(&self, ns: &[usize], structure: Arc<Structure>) {
        self.map.lock().unwrap().entry(ns.to_vec()).or_insert(structure);
    }
}

/// `ctx` with a fresh shared cache attached.
pub fn with_cache(mut ctx: PhysicsContext) -> (PhysicsContext, Arc<SharedStructures>) {
    let cache = Arc::new(SharedStructures::default());
    ctx.cache = Some(cache.clone());
    (ctx, cache)
}
