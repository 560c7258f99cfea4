//! Uncertainty-aware GUI agent engine.
//!
//! The agent loop plans a subgoal, narrows the screen's element list through
//! multi-pathway component recommendation, decides an action, reflects on the
//! result (rolling back and excluding failed targets), asks the user when a
//! decision is ambiguous, and records every step in an append-only memory.

pub mod bench;
pub mod config;
pub mod crm;
pub mod demo;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod prompts;
pub mod roles;
pub mod service;
pub mod sim;
pub mod text;
