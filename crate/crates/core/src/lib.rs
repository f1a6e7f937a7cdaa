pub mod chain;
pub mod cli;
pub mod derive;
pub mod flow;
pub mod gas;
pub mod ingest;
pub mod ponzi;
pub mod synth;
