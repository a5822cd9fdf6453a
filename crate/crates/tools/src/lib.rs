//! Config ingestion, file formats, plotting and the `gmcs` command line on
//! top of `gmcs-core`.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod io;
pub mod plot;
