pub mod assembly;
pub mod basis;
pub mod error;
pub mod mesh;
pub mod model;
pub mod montecarlo;
pub mod sparse;
pub mod stochastic;
pub mod timestepper;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/basis.md")]
    mod basis {}
    #[doc = include_str!("../../../book/src/mesh.md")]
    mod mesh {}
    #[doc = include_str!("../../../book/src/scheme.md")]
    mod scheme {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
}
