// `!(a < b)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adql;
pub mod dl3;
pub mod fits;
pub mod gateway;
pub mod geometry;
pub mod obscore;
pub mod processing;
pub mod provenance;
pub mod synthetic;
pub mod votable;
