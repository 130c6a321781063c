//! Order-4 Taylor jets and the chart machinery built on them.

mod chart;
mod jet;
mod matrix;
mod normal;

pub use chart::{
    chart_jets, identity_coords, metric_jets, recover_j, ChartJets, EguchiHanson, FlatChart,
    KahlerPotential, POTENTIAL_ORDER,
};
pub use jet::{monomial_count, Jet, MAX_ORDER, MAX_VARS};
pub use matrix::JetMatrix;
pub use normal::{NormalChart, PulledBackChart, INVERSE_MAX_ITER, INVERSE_TOL};

