//! Question answering over knowledge-base subgraphs with relation nodes and
//! seed-directed message passing.
//!
//! The pipeline: [`kbstore`] loads facts and questions and cuts a
//! question-related subgraph, [`graphbuild`] turns it into a layered graph
//! where every triple becomes a relation node and edges point away from the
//! seed entities, [`model`] runs a gated graph-convolutional network over it
//! on top of the [`tensor`] autodiff engine, and [`harness`] trains, evaluates
//! and runs ablations.

pub mod graphbuild;
pub mod harness;
pub mod kbstore;
pub mod model;
pub mod tensor;
