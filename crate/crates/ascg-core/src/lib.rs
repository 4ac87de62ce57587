//! Away-steps conditional gradient over compact polyhedra.
//!
//! Minimizes composite objectives `f(x) = g(Ex) + <b, x>` with strongly
//! convex `g` over a polytope given by structured vertex oracles or a general
//! H-representation. The solver keeps the iterate as an explicit convex
//! combination of vertices, prunes it with incremental Carathéodory
//! reductions, and ships a certificate layer that turns polyhedral geometry
//! (Hoffman constants, facial distances) into checkable linear convergence
//! rates for recorded runs.

pub mod caratheodory;
pub mod certificates;
pub mod demo;
pub mod linalg;
pub mod objective;
pub mod oracle;
pub mod polyhedron;
pub mod problem;
pub mod solver;

pub use caratheodory::{reduce_full, IrrState, WeightedVertex};
pub use certificates::{
    check_error_bound, check_rate_bound, check_vertex_facet_lemma, hoffman_theta,
    predicted_iterations, rate_certificate, CertificateError, CertificateOptions,
    ErrorBoundReport, LemmaReport, RateCertificate, ThetaVariant,
};
pub use demo::{
    extreme_points, hull_distance_squared, mapped_oracle_counterexample, MappedOracleDemo,
};
pub use objective::{CompositeObjective, InnerFn, ObjectiveSpec, QuadraticForm};
pub use oracle::{mapped_oracle_naive, vertex_oracle, verify_oracle, OracleAnswer};
pub use polyhedron::{GeometricConstants, HForm, Polytope, PolytopeKind, PolytopeSpec};
pub use problem::{Problem, ProblemError, ProblemSpec};
pub use solver::{
    cg_run, solve, validate_trace, Algorithm, AscgSolver, ReductionRule, SolverConfig,
    SolverTrace, StepRecord, StepType, StepsizeRule,
};
