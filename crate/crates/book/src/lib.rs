//! The user guide, compiled so that its code blocks run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/multiindex.md")]
pub mod multiindex {}

#[doc = include_str!("../../../book/src/coupled_smc.md")]
pub mod coupled_smc {}

#[doc = include_str!("../../../book/src/estimators.md")]
pub mod estimators {}

#[doc = include_str!("../../../book/src/allocation.md")]
pub mod allocation {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/rates.md")]
pub mod rates {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
