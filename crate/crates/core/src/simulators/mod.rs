//! Seeded sample-path generators for the two case-study models.

mod erlang;
mod nhpp;
mod rng;
mod var;

pub use erlang::{
    average_rate_model, simulate_erlang_path_with, simulate_erlang_r, ErlangRModel, ErlangState,
    InitialState, Observable,
};
pub use nhpp::{
    mce_arrival_rate, nhpp_arrival_times, RateFunction, RatePiece, MCE_AVERAGE_RATE, MCE_HORIZON,
};
pub use rng::RandomSource;
pub use var::{cholesky_psd, draw_innovations, simulate_var, InitialCondition, VarModel};
