#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cv;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod patterns;
pub mod pca;
pub mod prox;
pub mod report;
pub mod rng;
pub mod sim;
pub mod solver;
