//! Anisotropic-order DGSEM for the 2D compressible Navier-Stokes equations,
//! with fine-to-coarse directional truncation-error estimation, error-map
//! extrapolation and DOF-minimizing p-adaptation.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! the `*64` aliases below fix it to `f64`, which is what the solver and
//! the estimator are tuned for.

pub mod adaptation;
pub mod basis;
pub mod error;
pub mod error_map;
pub mod estimator;
pub mod mesh;
pub mod operator;
pub mod physics;
pub mod scalar;
pub mod solver;

pub use adaptation::{
    log_thresholds, select_orders, select_orders_independent, sweep_thresholds, AdaptationPlan,
    SweepOptions, SweepRow,
};
pub use basis::{
    differentiation_matrix, gauss_basis, interpolation_matrix, projection_matrix, BasisCache,
    InterpolationMatrix, NodalBasis, TransferMatrix, DEFAULT_MAX_ORDER,
};
pub use error::{Error, Result};
pub use error_map::{
    build_map_full_product, build_map_high_order, build_map_low_order, fit_loglinear, FitWindow,
    MapMethod, Provenance, RegressionFit, TauMap,
};
pub use estimator::{
    coarsen_solution, compose_norms, DirectionalSeries, Estimator, SampleKind, TauSample,
};
pub use mesh::{build_cartesian_mesh, dof_count, Direction, Element, Mesh, OrderLayout, Orders};
pub use operator::{
    Discretization, ElementSolution, Flavor, GlobalSolution, OperatorOutput, TauNorm,
};
pub use physics::{
    advective_flux, check_source, flipped_exponent_source, manufactured_source, manufactured_state,
    roe_flux, viscous_flux, FlowCase, FluxPair, GasParameters, ManufacturedCase, SourceCheck,
    State, StateGradient, UniformFlow,
};
pub use scalar::Scalar;
pub use solver::{discretization_error, solve_steady, ErrorNorms, SolveReport, SolverOptions};

pub type NodalBasis64 = NodalBasis<f64>;
pub type Mesh64 = Mesh<f64>;
pub type State64 = State<f64>;
pub type GasParameters64 = GasParameters<f64>;
pub type GlobalSolution64 = GlobalSolution<f64>;
pub type ElementSolution64 = ElementSolution<f64>;
pub type Discretization64 = Discretization<f64>;
pub type TauMap64 = TauMap<f64>;
pub type AdaptationPlan64 = AdaptationPlan<f64>;
