//! Dual-band MIMO-OFDM link simulator for mmWave channel estimation aided by
//! sub-6 GHz out-of-band information.
//!
//! Pipeline per realization: [`channel`] draws Rician channels for both
//! bands, [`training`] produces LS estimates, [`fusion`] rotates the sub-6
//! estimate into the mmWave band and combines it with the in-band estimate,
//! and [`link`] scores the result by SVD precoding against the true channel.
//! [`harness`] runs the Monte Carlo sweeps.

pub mod channel;
pub mod config;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod link;
pub mod seeding;
pub mod training;
pub mod validate;

pub use channel::{Band, ChannelRealization, ChannelTensor, Scenario, TdlProfile};
pub use config::{BandParams, DerivedParams, DistanceMatrix, SystemConfig};
pub use error::{Result, SimError};
pub use fusion::{EstimationMethod, WeightTable};
pub use harness::{RunOptions, SweepResult};
pub use link::{Precoding, SinrMode};
