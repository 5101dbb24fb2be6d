//! Acceptance checks live in `tests/acceptance.rs`. Each prints a single
//! `criterion N: PASS|FAIL ...` line and fails when its bound is not met.
