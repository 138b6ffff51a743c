//! Label cover to hypergraph vertex cover, at desk scale.
//!
//! The crate follows a hardness reduction end to end on instances small
//! enough to enumerate: projection games ([`game`]), the multilayered
//! construction over them ([`layers`]), the p-biased long-code hypergraph
//! with its completeness witness and independent-set decoder ([`reduce`]),
//! vertex-cover solvers ([`solve`]), and the set-family toolkit the decoder
//! relies on ([`setfam`]). [`pipeline`] chains the stages into one report.
//!
//! Nothing here makes a hardness claim; every number is a property of the
//! concrete instance it was computed on.

pub mod game;
pub mod layers;
pub mod pipeline;
pub mod rational;
pub mod reduce;
pub mod setfam;
pub mod solve;

pub use rational::Rational;
