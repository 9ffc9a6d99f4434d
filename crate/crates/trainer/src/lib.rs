//! Files, library, reports, live service and command line around
//! [`stroke_core`].
//!
//! - [`format`]: NDJSON pose/paddle streams and recording files
//! - [`library`]: directory-backed stroke library
//! - [`report`]: full-sequence analysis reports
//! - [`service`]: HTTP + websocket session service
//! - [`replay`]: client that streams files into the service
//! - [`synthetic`]: seeded demo strokes
//! - [`cli`]: the `stroke-trainer` command

// NaN must fail range checks, which `!(x > lo)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod format;
pub mod library;
pub mod replay;
pub mod report;
pub mod service;
pub mod synthetic;
