//! Smooth maps of the torus and their derivative cocycles.

pub mod bundle;
pub mod cocycles;
pub mod hyperbolicity;
pub mod map;
pub mod periodic;

pub use bundle::{
    canonical_frame, estimate_stable_bundle, estimate_unstable_bundle, BundleFrame, BundlePoint,
    BundleSide, RestrictedCocycle, DEFAULT_BUNDLE_STEPS, MAX_BUNDLE_RESIDUAL,
};
pub use cocycles::{derivative_cocycle, sample_torus, DerivativeCocycle, Field, TorusCocycle};
pub use hyperbolicity::{
    verify_partial_hyperbolicity, ConeParams, GrowthRates, HyperbolicityMargins,
    PartialHyperbolicity,
};
pub use map::{
    affine_anosov, exact_det, fold, linear_anosov, perturb_local_rotation, product_map,
    standard_map, torus_distance, wrap, BaseKind, Bump, MapSpec, PerturbationSpec, TorusMap,
    HYPERBOLICITY_TOL,
};
pub use periodic::{
    check_support_clearance, homoclinic_linear, newton_refine_periodic, periodic_points_linear,
    spectral_projectors, HomoclinicDatum, PeriodicPointDatum, DEFAULT_CLEARANCE_STEPS,
    DEFAULT_NEWTON_ITERATIONS, DEFAULT_NEWTON_TOL,
};
