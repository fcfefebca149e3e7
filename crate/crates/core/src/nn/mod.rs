//! Minimal feedforward networks with manual backpropagation.

mod adam;
mod io;
mod mlp;

pub use adam::{Adam, LrSchedule};
pub use io::{load_net, net_file_name, save_net, NetHeader, NetRole};
pub use mlp::{Cache, Mlp, MlpSpec, Mode, RunningStats, Scaling, BN_DEGENERATE, BN_EPS, BN_MOMENTUM};
