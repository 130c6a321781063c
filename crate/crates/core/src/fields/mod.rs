//! Spectral calculus on the flat hyperkähler torus `ℍⁿ/ℤ^{4n}`.

mod grid;
mod ops;
mod snapshot;

pub use grid::{integrate, DerivPattern, ScalarField, TorusGrid};
pub use ops::{
    antisymmetry_defect, dd_j, dd_j_from_hessian, dd_j_matrix, det_ratio, hessian, metric_via_20,
    mixed_volume_check, omega20_phi, omega_phi, omega_phi_from_hessian, omega_phi_matrix, pf_ratio,
    q_real_defect, random_band_limited, residual_11, residual_20, volume_check, FlatBackground,
    Hessian, MatrixField, MetricField, QFormField,
};
pub use snapshot::{Snapshot, MAGIC, VERSION};
