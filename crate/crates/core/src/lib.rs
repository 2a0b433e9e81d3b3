//! Discovery of dimensionless groups from data.

pub mod buckinet;
pub mod datagen;
pub mod dsindy;
pub mod error;
pub mod nullspace;
pub mod optfit;
pub mod pitransform;
pub mod regress;
pub mod units;

pub use error::{Error, Result};

/// Exact exponent type used for units and nullspace vectors.
pub type Rational = num_rational::Ratio<i64>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/groups.md")]
    mod groups {}
    #[doc = include_str!("../../../book/src/optfit.md")]
    mod optfit {}
    #[doc = include_str!("../../../book/src/buckinet.md")]
    mod buckinet {}
    #[doc = include_str!("../../../book/src/dsindy.md")]
    mod dsindy {}
    #[doc = include_str!("../../../book/src/simulate.md")]
    mod simulate {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/pendulum.md")]
    mod pendulum {}
}
