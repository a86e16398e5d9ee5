//! Step-size limits: the deterministic period test, the mean-square matrix
//! `F`, the analytic bracket and exact search for `μ_max`, and randomised
//! checks of the Kronecker spectral-radius identities.

mod fmatrix;
mod gamma;
mod linalg;
mod report;
mod theorems;

pub use fmatrix::{
    build_f, build_f_general, build_full_f, is_doubly_stochastic, mu_bracket, mu_exact, sum_t_kron, zeta, MuSearch,
    STOCHASTIC_TOL,
};
pub use gamma::{build_gamma, check_prop1, GammaProduct};
pub use linalg::{eigen_moduli, eigenvalues, kron, perron_radius, spectral_radius, DENSE_LIMIT};
pub use report::{StabilityReport, Verdict};
pub use theorems::{
    kron_square_sum, random_matrix, theorem3_sides, verify_theorem1, verify_theorem2, verify_theorem3, TheoremReport,
    THEOREM1_TOL, THEOREM2_TOL, THEOREM3_TOL,
};
