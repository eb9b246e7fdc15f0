pub mod augment;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod demo;
pub mod encoder;
pub mod ensemble;
pub mod eval;
pub mod pipeline;
pub mod router;
pub mod seed;
pub mod statml;
pub mod text;
