//! A centralized multiagent planning engine for STRIPS domains extended
//! with concurrent-action constraints. It parses LISP-style domain and
//! problem files, synthesizes concurrent nonlinear plans whose
//! n-linearizations provably achieve the goal, and cross-checks plans via
//! an executable joint-action semantics and a brute-force oracle.

pub mod bindings;
pub mod exec;
pub mod gen;
pub mod ground;
pub mod linearize;
pub mod lint;
pub mod model;
pub mod oracle;
pub mod ordering;
pub mod par;
pub mod parse;
pub mod plan;
pub mod planner;
pub mod print;
pub mod sexpr;

pub use ground::{prepare, Prepared};
pub use model::{Domain, Problem};
pub use plan::ConcurrentPlan;
