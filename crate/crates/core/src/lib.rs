pub mod arakelov;
pub mod cli;
pub mod contract;
pub mod error;
pub mod fiber;
pub mod numth;
pub mod paperforms;
pub mod ratlin;
