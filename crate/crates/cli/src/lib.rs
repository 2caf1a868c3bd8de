pub mod config;
pub mod experiments;
pub mod figures;
pub mod report;
pub mod selftest;
