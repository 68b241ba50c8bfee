//! Measures how realistic simulated chatbot users are by comparing real and
//! simulated dialogue corpora along eight behavioral dimensions.

pub mod annotate;
pub mod compare;
pub mod corpus;
pub mod gateway;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod simulate;
pub mod textmetrics;
