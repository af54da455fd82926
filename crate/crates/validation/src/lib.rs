//! Acceptance checks for the holographic register toolkit live in
//! `tests/acceptance.rs`.
