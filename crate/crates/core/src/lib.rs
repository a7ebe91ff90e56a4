//! Numerical engine for linear transports along paths in vector bundles.
//!
//! A transport is specified by its coefficient functional `(γ, s) ↦ Γ(s; γ)`
//! in a single coordinate chart. From it the crate computes transport
//! matrices, the associated derivation along paths, torsion and curvature,
//! and, for flat transports, frames in which all coefficients vanish.
//!
//! Matrix conventions: `Γ[(i, j)] = Γ^i_{.j}` (row = upper index) and, for a
//! frame change, `A[(i, i′)] = A^i_{i′}` (columns are the new basis vectors).

pub mod connection;
pub mod curvature;
pub mod error;
pub mod flat;
pub mod frame;
pub mod geometries;
pub mod integrate;
pub mod linalg;
pub mod path;
pub mod torsion;
pub mod transport;

pub use connection::{connection_functional, CoefficientFunctional, ConnectionField};
pub use curvature::{contraction_discrepancy, curvature_matrix, curvature_tensor, CurvatureMatrix, CurvatureTensor};
pub use error::{Error, Result};
pub use flat::{
    build_flat_frame, coefficients_from_zero_frame, flatness_certificate, holonomic_obstruction, residual_coefficients,
    FlatFrameOptions, FlatFrameResult, FlatnessCertificate, Grid,
};
pub use frame::{frame_transform_coefficients, FrameField};
pub use geometries::Region;
pub use integrate::Integrator;
pub use path::{path_velocity, ChartSpec, Interval, Path, SectionAlongPath, TwoParamMap};
pub use torsion::{torsion_tensor, torsion_vector, TorsionTensor, TorsionVector};
pub use transport::{
    apply_transport, derivation_analytic, derivation_limit, loop_holonomy, loop_holonomy_periodic, transport_matrix, DerivationLimit,
    DerivationValue, TransportMatrix,
};
