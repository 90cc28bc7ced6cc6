//! Young integration, Young differential equations and rough transport.
//!
//! Paths are sampled on explicit time grids ([`SampledPath`]); every
//! integral is a tagged Riemann–Stieltjes sum over that grid, so results are
//! deterministic and refinement studies are explicit ([`dyadic_ladder`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod calculus;
pub mod characteristics;
pub mod composition;
pub mod driver;
pub mod error;
pub mod field;
pub mod integrate;
pub mod io;
pub mod path;
pub mod report;
pub mod symmetry;
pub mod yde;

pub use calculus::{chain_rule_residual, ito_kunita_residual, substitution_residual, sup_image_norm, TimeDependentMap};
pub use characteristics::{
    assemble_solution, build_char_field, invert_char_map, pde_residual, seed_from_initial_data, solve_characteristics,
    verify_compatibility, verify_inverse_flow_equation, CharField, CharTriple, HamiltonianSpec, SeedGrid,
    SolutionField,
};
pub use composition::{compose_flows, pushforward_field, Composition, PushforwardField};
pub use driver::{gen_deterministic, gen_fbm, DeterministicKind, DeterministicSpec, FbmSpec};
pub use error::{Error, Result};
pub use field::{FieldSpec, PointMap, ScalarObservable, SmoothMap};
pub use integrate::{
    certified_young_integral, first_order_remainder, indefinite_integral, young_integral, young_loeve_bound,
    young_loeve_constant, IntegralResult, OperatorPath, TagRule,
};
pub use path::{
    dyadic_ladder, holder_norm, p_variation, p_variation_metric, p_variation_norm, p_variation_over, Partition,
    SampledPath, VariationResult,
};
pub use report::{CheckReport, LevelResidual, ResidualReport};
pub use symmetry::{
    check_conserved_algebraic, check_conserved_trajectory, check_infinitesimal_symmetry, check_symmetry_map,
    check_symmetry_trajectory, lie_bracket, propagate_observable, SampleDomain,
};
pub use yde::{invert_flow, invert_flow_with, solve_flow, solve_yde, FlowMap, NewtonOptions, SolveConfig};
