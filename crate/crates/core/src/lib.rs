//! Multi-index sequential Monte Carlo ratio estimators for Bayesian inverse
//! problems, with a randomized variant whose unnormalized parts carry no
//! discretization bias.
//!
//! The crate is layered bottom-up:
//!
//! * [`multiindex`]: mixed differences, index sets and the allocation
//!   distribution `p_α`;
//! * [`models`]: forward models addressed by a multi-index;
//! * [`smc`]: the tempered SMC sampler on the coupled target of a mixed
//!   difference;
//! * [`estimators`]: single-level, MISMC and randomized MISMC ratio estimators;
//! * [`rates`]: rate fitting and increment audits;
//! * [`harness`]: configs, planning, references and experiment output.
//!
//! ```
//! use rmismc::estimators::rmismc_estimate;
//! use rmismc::models::toy::ToyModel;
//! use rmismc::multiindex::AllocationDistribution;
//! use rmismc::seed::SeedPath;
//! use rmismc::smc::SmcConfig;
//! use rmismc::MultiIndex;
//!
//! let mut rng = SeedPath::new(1).rng();
//! let model = ToyModel::synthetic(0.5, 0.2, &mut rng)?;
//! let dist = AllocationDistribution::new(vec![4.0], vec![1.0], MultiIndex::from([0]))?;
//! let est = rmismc_estimate(&model, &dist, 400, 20, &SmcConfig::default(), 1e-12, &SeedPath::new(7))?;
//! assert!(est.value > 0.0 && est.value < 1.0);
//! # Ok::<(), rmismc::Error>(())
//! ```

pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod multiindex;
pub mod rates;
pub mod seed;
pub mod smc;

pub use error::{Error, Result};
pub use multiindex::MultiIndex;
