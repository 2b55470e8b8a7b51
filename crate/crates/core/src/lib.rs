//! Compiler-in-the-loop feedback harness for model-driven pass ordering.
//!
//! A model proposes a pass pipeline together with predicted instruction
//! counts and (optionally) the optimized IR. The harness compiles the input
//! with the proposed pipeline, measures how consistent the proposal was with
//! what the compiler actually produced, renders that as a feedback prompt and
//! lets the model try again. Autotuned pipelines and the backend's fixed size
//! pipeline serve as baselines.
//!
//! Module map:
//!
//! * [`ir_text`]: tokenizer, textual instruction counter and BLEU.
//! * [`mir`]: the mini SSA-like IR with parser, verifier, interpreter,
//!   optimization passes and a seeded corpus generator.
//! * [`backend`]: the compiler abstraction (mini and external optimizer).
//! * [`model`]: generation grammar and the model adapters.
//! * [`feedback`]: feedback records and Short/Long/Fast rendering.
//! * [`autotune`]: pass-order search baseline.
//! * [`orchestrator`]: Task Optimize, Task Feedback, sampling strategies and
//!   the iterative loop.
//! * [`metrics`]: per-example rows, aggregation, correlation, histograms and
//!   fine-tuning dataset emission.

pub mod autotune;
pub mod backend;
pub mod feedback;
pub mod ir_text;
pub mod metrics;
pub mod mir;
pub mod model;
pub mod orchestrator;

/// Version tag written into every exported file header.
pub const SCHEMA_VERSION: u32 = 1;
