//! Python bindings; filled in once the core crate is complete.
