//! Name-keyed registries of strategy objects.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Strategies of one family, looked up by name at runtime.
pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: Vec<(&'static str, Arc<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self { family, entries: Vec::new() }
    }

    /// Add a strategy; a later registration under the same name replaces the earlier one.
    pub fn register(&mut self, name: &'static str, item: Arc<T>) -> &mut Self {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
        self
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.iter().find(|(n, _)| *n == name).map(|(_, item)| Arc::clone(item)).ok_or_else(|| {
            Error::config(format!("unknown {} '{name}' (known: {})", self.family, self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Arc<T>)> {
        self.entries.iter().map(|(n, item)| (*n, item))
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("family", &self.family).field("names", &self.names()).finish()
    }
}
