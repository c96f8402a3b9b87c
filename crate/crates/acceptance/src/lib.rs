//! End-to-end acceptance checks. The suite lives in `tests/acceptance.rs` and
//! drives the `bayes-cancel` binary built by the sibling CLI package.
