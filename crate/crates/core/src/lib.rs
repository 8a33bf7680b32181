//! Stabilized knowledge distillation for cross-language code clone detection.

pub mod backend;
pub mod corpus;
pub mod eval;
pub mod prompting;
pub mod stabilize;
pub mod teacher;
pub mod variants;
