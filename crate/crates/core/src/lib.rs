//! Arbitrary-precision evaluation and identity verification for the `q > 1`
//! zeta-function family: the single q-zeta, the q-double zeta and its star
//! variant, the circ variant carrying a single `q^{n_1}` weight and its star
//! variant, and the q-Mordell-Tornheim r-ple sum.
//!
//! The crate has four layers:
//!
//! - [`qnum`]: precision contexts, the base `q > 1`, complex values over MPFR
//!   floats, and the q-arithmetic primitives (`[a]_q`, `q^s`, rising
//!   coefficients, q-factorials, q-Pochhammer symbols).
//! - [`series`]: direct-summation evaluators with rigorous geometric tail
//!   bounds, plus brute-force oracles used for testing.
//! - [`expansion`]: binomial-expansion (continuation) evaluators, pole-set
//!   classification, the closed forms of the iterated limits at `(0,0)`, and
//!   a Richardson extrapolator for the `q -> 1` limits.
//! - [`identities`]: a catalog of the algebraic identities among these
//!   functions, a numerical verifier with residual/tolerance accounting, and
//!   a parity auditor contrasting as-stated formulas with derived-consistent
//!   variants.
//!
//! All evaluators are pure functions of their arguments; precision is always
//! passed explicitly via [`qnum::PrecisionCtx`], never ambient.

pub mod error;
pub mod expansion;
pub mod identities;
pub mod qnum;
pub mod series;

pub use error::{EvalError, Result};
pub use qnum::{CVal, PrecisionCtx, QBase, Status, ValueWithError};
