//! Scene generators and the multistart oracle, shared with the core integration suites.

#[path = "../../core/tests/common/mod.rs"]
pub mod scenes;
