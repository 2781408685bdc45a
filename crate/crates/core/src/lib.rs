//! Synthesis of hallucinated medical QA benchmarks and evaluation of
//! hallucination detectors against them.

pub mod harness;
pub mod model;
pub mod orchestrator;
pub mod pipeline;
pub mod pool;
pub mod prompts;
pub mod provider;
pub mod quality;
pub mod seeds;
pub mod semantic;
