//! Numerical toolkit for the nonlinear nonlocal equation
//! `(-Δ)^s u + b(x) h(x; u) + ψ(x; d, u) + a(x, u) = 0` on Ω = (-1, 1) with exterior
//! Dirichlet data: forward solver, Dirichlet-to-Neumann map, higher-order
//! linearization, Runge approximation and coefficient recovery.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod config;
pub mod dn_map;
pub mod error;
pub mod experiment;
pub mod fractional_ops;
pub mod grid;
pub mod inversion;
pub mod linearization;
pub mod quadrature;
pub mod runge;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Region};
