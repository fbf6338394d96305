//! Rumor detection from user correlation and information propagation.
//!
//! A two-layer GCN over the user–tweet bipartite graph and a top-down GCN
//! over each reply tree (with root-feature enhancement) are fused and
//! classified into non-rumor / false / true / unverified. The crate also
//! carries the data protocol (filtering, stratified folds, early-detection
//! cutoffs, metrics, a synthetic generator) and a greedy adversarial attack
//! harness.

pub mod attacks;
pub mod data;
pub mod encoders;
pub mod experiment;
pub mod graphs;
pub mod model;
pub mod numerics;
