//! Config parsing, artifact writers and the acceptance suite for `ricci-iter`.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
