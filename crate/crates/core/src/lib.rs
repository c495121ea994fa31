//! Zonal day-ahead market clearing with implicit transmission-loss factors.
//!
//! * [`market`]: instance types and invariant checks.
//! * [`calibration`]: linear and piecewise loss factors from quadratic curves.
//! * [`formulation`]: LP/MILP construction, solving and price extraction.
//! * [`study`]: two-pass loss estimation, five-scenario runs and reports.
//! * [`io`]: CSV datasets, nodal-to-zonal aggregation, config files.

pub mod calibration;
pub mod formulation;
pub mod io;
pub mod market;
pub mod study;

pub use gridloss_milp as milp;
