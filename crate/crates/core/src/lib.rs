//! Workbench for knowledge-grounded response generation in longitudinal
//! dialogues.
//!
//! The crate is organised around the data flow of an experiment:
//!
//! * [`corpus`] loads two-session dialogue pairs, splits them at the
//!   dialogue level and windows second sessions into grounded samples.
//! * [`syntax`] ingests dependency parses (CoNLL-U) produced by an external
//!   parser.
//! * [`knowledge`] turns first-session user turns into one of three
//!   knowledge representations (raw text, bag of head nouns, personal space
//!   graph) and assembles model input sequences with segment maps.
//! * [`interchange`] defines the record files exchanged with a model runner.
//! * [`metrics`], [`attribution`] and [`humaneval`] evaluate what the
//!   runner and human judges produce.
//!
//! Everything in this crate is a pure function of its inputs and seeds.

pub mod attribution;
pub mod corpus;
pub mod humaneval;
pub mod interchange;
pub mod jsonl;
pub mod knowledge;
pub mod metrics;
pub mod rng;
pub mod syntax;

pub use corpus::{DialoguePair, GroundedSample, Session, SessionIndex, Speaker, Turn};
pub use knowledge::{InputSequence, Representation, Role, Segment};
