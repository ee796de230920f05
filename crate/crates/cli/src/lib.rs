//! Pipeline library behind the `occuload` command line: configuration,
//! stage orchestration and artifact emission.

pub mod config;
pub mod pipeline;
pub mod report;
