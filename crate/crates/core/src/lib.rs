pub mod clustering;
pub mod corpus;
pub mod error;
pub mod index;
pub mod keyword_norm;
pub mod recommender;
pub mod topic_space;
pub mod usage;

pub use error::{Error, Result};
