//! Name-keyed lookup of interchangeable implementations.
//!
//! Stencil kernels, wavefront strategies and machine presets are all
//! selected at runtime by a short name (from the CLI or a config file).
//! Each family keeps one [`Registry`] of its built-in members.

use std::fmt;

use crate::error::{Error, Result};

/// Ordered name → entry map. Insertion order is the listing order.
pub struct Registry<T: ?Sized + 'static> {
    family: &'static str,
    entries: Vec<(&'static str, &'static T)>,
}

impl<T: ?Sized + 'static> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: Vec::new(),
        }
    }

    /// Adds an entry. Registering the same name twice is a programming error.
    pub fn register(mut self, name: &'static str, entry: &'static T) -> Self {
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "{} `{}` registered twice",
            self.family,
            name
        );
        self.entries.push((name, entry));
        self
    }

    pub fn get(&self, name: &str) -> Result<&'static T> {
        self.entries
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, e)| *e)
            .ok_or_else(|| Error::Unknown {
                kind: self.family,
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &'static T)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: ?Sized + 'static> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names().collect::<Vec<_>>())
            .finish()
    }
}
