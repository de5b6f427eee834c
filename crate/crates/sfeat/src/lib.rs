//! File formats, dataset loading, training driver and reporting around
//! `sfeat-core`. The `sfeat` binary exposes them on the command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod driver;
pub mod inspect;
pub mod pnm;
pub mod report;
pub mod seqeval;
pub mod sequence;
pub mod trainlog;
