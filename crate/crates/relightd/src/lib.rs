//! Command-line pipeline and local HTTP render service built on [`relit`].

pub mod cli;
pub mod data;
pub mod service;
