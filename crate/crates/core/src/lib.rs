pub mod annotate;
pub mod ast;
pub mod blocks;
pub mod cli;
pub mod config;
pub mod diff;
pub mod gateway;
pub mod report;
pub mod rules;
pub mod scour;
pub mod text;
