//! Mining interactions between the Sustainable Development Goals and the
//! Planetary Boundaries from scholarly full texts.

pub mod analytics;
pub mod config;
pub mod corpus;
pub mod llm_gateway;
pub mod net;
pub mod pipeline;
pub mod reporting;
pub mod runner;
pub mod taxonomy;
