//! Desk-scale digital twin of an O-RAN enabled aerial 5G network.
//!
//! The crate emulates the monitoring pipeline of a small cellular testbed:
//! a gNB with TDD framing and a proportional-fair downlink scheduler
//! ([`phy_frame`], [`mac_sched`], [`ran_node`]), an air-to-ground channel
//! driven by UAV mobility ([`channel`], [`mobility`]), a near-RT RIC speaking
//! a simplified E2-inspired wire protocol and hosting a KPM monitoring xApp
//! ([`e2`], [`ric`], [`xapp_kpm`], [`store`]), and a deterministic
//! transmit-power data generator validated against the simulator
//! ([`datagen`]). [`scenario`] and [`runner`] describe and drive complete
//! experiments; outputs are reproducible byte for byte from (scenario, seed).

pub mod channel;
pub mod datagen;
pub mod e2;
pub mod mac_sched;
pub mod mobility;
pub mod phy_frame;
pub mod ran_node;
pub mod ric;
pub mod runner;
pub mod scenario;
pub mod seed;
pub mod store;
pub mod transport;
pub mod xapp_kpm;

pub use channel::{ChannelCfg, ChannelState, LinkBudget};
pub use e2::{E2Message, KpmRecord, KPM_FUNCTION_ID};
pub use mac_sched::{Allocation, SchedConfig};
pub use mobility::Trajectory;
pub use phy_frame::{SlotPattern, TddConfig};
pub use ran_node::{RanNode, UeContext};
pub use ric::Ric;
pub use runner::{run, RunArtifacts, RunError};
pub use scenario::{load_scenario, Scenario};
pub use store::MetricStore;
pub use xapp_kpm::SeriesPoint;
