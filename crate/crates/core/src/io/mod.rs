//! File formats: measurements, device profiles, embedded reference tables and
//! report output.

pub mod fixtures;
pub mod format;
pub mod measurements;
pub mod profile;
pub mod report;
