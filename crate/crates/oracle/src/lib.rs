//! Independent oracles for the skelsql test suites.
//!
//! Nothing here calls into `skelsql-core`: high-precision transcendental
//! functions are computed in big fixed-point arithmetic, Möbius addition in
//! exact rationals, and the matrix/retrieval oracles are straight-line
//! brute-force loops.

pub mod brute;
pub mod precise;
