//! Delta-nabla calculus of variations on finite time scales.
//!
//! The crate is layered bottom-up:
//!
//! * [`expr`] parses and symbolically differentiates Lagrangians in the formal
//!   variables `t`, `y` and `v`.
//! * [`timescale`] holds finite time scales with their jump and graininess
//!   operators.
//! * [`calculus`] implements delta/nabla derivatives, shifts and integrals of
//!   grid functions.
//! * [`variational`] evaluates the product functional `J = J_delta * J_nabla`
//!   and the Euler–Lagrange, natural boundary and isoperimetric residuals.
//! * [`solver`] extremizes the discretized functional directly.
//! * [`cli`] implements the `tsvar` command line front end.

pub mod calculus;
pub mod cli;
pub mod expr;
pub mod fmt;
pub mod solver;
pub mod timescale;
pub mod variational;

pub use calculus::GridFunction;
pub use expr::{Binding, Expr, Var};
pub use timescale::TimeScale;
pub use variational::{Boundary, Constraint, Lagrangian, VariationalProblem};
