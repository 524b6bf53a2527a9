//! Time-varying bivariate copulas.

mod evolution;
mod family;
mod fit;
mod sample;

pub use evolution::*;
pub use family::*;
pub use fit::*;
pub use sample::*;
