//! Versioned tolerance table.
//!
//! Every pass/fail threshold used by the verification suites, the CLI and
//! the acceptance tests is read from here. Identities are checked as
//! relative residuals (absolute residual over the product of the norms of
//! the contracted factors).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub version: u32,
    /// Flat chart: all identity residuals.
    pub flat: f64,
    /// Quaternionic relations of a recovered J.
    pub quaternionic: f64,
    /// g <-> Omega round trip and J-anti-invariance of omega.
    pub bijection: f64,
    /// pre1..pre4 on a curved chart.
    pub pre: f64,
    /// fund1 and the hyperkähler trace identity.
    pub fund: f64,
    /// The four contracted curvature identities.
    pub fund2: f64,
    /// Conjugation pairing eq2 = conj(eq1)^T, eq4 = conj(eq3)^T.
    pub conjugation: f64,
    /// J-adapted frame trace and R(JX,JY) = R(X,Y).
    pub frame: f64,
    /// Laplacian-of-trace identity, relative.
    pub delta: f64,
    /// Each summand of the vanishing sum, relative.
    pub eqns: f64,
    /// Negative controls must exceed this relative residual.
    pub mutation_floor: f64,
    /// Negative control for the curvature traces.
    pub fund_negative_floor: f64,
    /// (2,0) route vs (1,1) route metrics on the torus.
    pub fform: f64,
    /// residual_20 vs residual_11 and (Pf ratio)^2 vs det ratio.
    pub equiv: f64,
    /// Fourth-order cancellation: phi-independence of the discrepancy.
    pub phi4_flat: f64,
    pub phi4_curved: f64,
    /// Trace inequality residual floor (absolute, O(1) quantities).
    pub trace_inequality: f64,
    /// Discrete maximum principle slack at the grid argmax of Q.
    pub max_principle: f64,
    /// Relative variation of C_emp between refinements.
    pub c_emp_variation: f64,
    /// Volume and b closed-form identities.
    pub volume: f64,
    pub b_closed_form: f64,
}

impl Thresholds {
    pub const V1: Thresholds = Thresholds {
        version: 1,
        flat: 1e-12,
        quaternionic: 1e-10,
        bijection: 1e-13,
        pre: 1e-6,
        fund: 1e-7,
        fund2: 1e-7,
        conjugation: 1e-12,
        frame: 1e-8,
        delta: 1e-6,
        eqns: 1e-7,
        mutation_floor: 1e-2,
        fund_negative_floor: 1e-3,
        fform: 1e-11,
        equiv: 1e-10,
        phi4_flat: 1e-9,
        phi4_curved: 1e-6,
        trace_inequality: 1e-10,
        max_principle: 1e-8,
        c_emp_variation: 0.02,
        volume: 1e-10,
        b_closed_form: 1e-9,
    };
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::V1
    }
}
