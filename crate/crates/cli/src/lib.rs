//! Configuration, persistence and subcommands of the `forge` tool.

pub mod build;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod manifest;
pub mod store;
pub mod textgen;
pub mod validate;

pub use build::cmd_build;
pub use evaluate::cmd_eval;
pub use ingest::cmd_ingest;
pub use validate::cmd_validate;
