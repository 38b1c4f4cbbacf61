//! Timing analysis of post/comment event streams: interval extraction,
//! log-normal family fitting, goodness of fit, activity cycles and a
//! synthetic corpus generator.

pub mod distributions;
pub mod event_store;
pub mod intervals;
pub mod seed;
pub mod fitting;
pub mod goodness;
pub mod cycles;
pub mod synthgen;
pub mod forecast;
pub mod report;
