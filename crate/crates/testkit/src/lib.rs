//! Reference implementations and fixtures shared by the test suites.
//!
//! The oracles here are deliberately naive (dense elimination, full scans,
//! exhaustive pairwise checks) so they can be trusted independently of the
//! optimized code under test.

pub mod criteria;
pub mod fixtures;
pub mod oracle;
pub mod transcripts;
