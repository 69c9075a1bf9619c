pub mod advisor;
pub mod composer;
pub mod cpg;
pub mod curator;
pub mod error;
pub mod evaluator;
pub mod gateway;
pub mod pipeline;
pub mod retriever;
pub mod roi_store;
pub mod source;
pub mod template;

pub use error::*;
pub use source::{LineSpan, SourceUnit};
