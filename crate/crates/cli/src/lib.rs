//! Command-line interface and HTTP service for the `querytag` tagger.

pub mod cli;
pub mod config;
pub mod service;
