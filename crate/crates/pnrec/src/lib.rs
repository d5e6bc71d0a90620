//! Exact computer algebra for graded Poisson geometry.
//!
//! The crate implements a sparse polynomial algebra over arbitrary-precision
//! rationals in graded-commutative variables (odd variables anticommute and
//! square to zero), tensor calculus on top of it (Lie brackets, Lie
//! derivatives, Nijenhuis torsion, Magri-Morosi compatibility), structural
//! Poisson brackets with orbit multiplicities, bihamiltonian Lenard towers,
//! and the two descendant recursions that produce commuting Hamiltonian
//! hierarchies from a recursion operator or a degree -2 symmetric bivector.
//! The circle model, where everything is known in closed form, ships as a
//! built-in and anchors the test suite.
//!
//! No floating point is used anywhere; every comparison in the library and in
//! its tests is exact rational equality.

pub mod linalg;
pub mod model;
pub mod parse;
pub mod pencil;
pub mod poisson;
pub mod poly;
pub mod recursion;
pub mod report;
pub mod ring;
pub mod tensor;
pub mod variable;

pub use poly::{Coeff, Monomial, Polynomial, TruncationWindow};
pub use variable::{Parity, VarId, VarKind, Variable, VariableTable};
