//! The emulated gNB (E2 node): slot clock, CBR traffic sources, the PF
//! scheduler hookup, RLC SDU latency accounting, per-subscription KPM
//! aggregation, and the agent side of the monitoring protocol.
//!
//! The node is I/O-free: control messages come in through `handle_control`,
//! indications leave through `SlotOutcome::outbound`, and the caller owns the
//! transport. The slot loop is single-threaded and deterministic; protocol
//! activity never perturbs it.

use crate::channel::{cqi_to_efficiency, ChannelCfg};
use crate::e2::{reason, E2Message, KpmRecord, RanFunction, KPM_FUNCTION_ID};
use crate::mac_sched::{
    pf_schedule, rb_demand, select_mcs, tb_bits, update_ewma, Allocation, SchedConfig, SchedInput,
    SchedUeState,
};
use crate::mobility::{position_at, Trajectory};
use crate::phy_frame::{derive_tdd_pattern, dl_data_symbols, SlotPattern, TddConfig};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

/// Default RLC SDU size: 1500 bytes.
pub const DEFAULT_SDU_BITS: u32 = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attach {
    Ground,
    Aerial,
}

/// One queued RLC SDU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sdu {
    pub enqueue_us: u64,
    pub remaining_bits: u64,
}

/// Per-UE radio state on the node.
#[derive(Debug, Clone)]
pub struct UeContext {
    pub ue_id: u32,
    pub attach: Attach,
    /// Constant-bit-rate DL target (bit/s).
    pub offered_load_bps: u64,
    pub sdu_size_bits: u32,
    pub trajectory: Trajectory,
    pub cqi: u8,
    pub ewma_rate_bps: f64,
    rlc_queue: VecDeque<Sdu>,
    backlog_bits: u64,
    /// CBR accumulator in bit-microseconds; carries sub-SDU fractions.
    credit_us_bits: u64,
    pub cum_enqueued_bits: u64,
    pub cum_served_bits: u64,
}

impl UeContext {
    pub fn new(
        ue_id: u32,
        attach: Attach,
        offered_load_bps: u64,
        sdu_size_bits: u32,
        trajectory: Trajectory,
    ) -> Self {
        UeContext {
            ue_id,
            attach,
            offered_load_bps,
            sdu_size_bits,
            trajectory,
            cqi: 1,
            ewma_rate_bps: 0.0,
            rlc_queue: VecDeque::new(),
            backlog_bits: 0,
            credit_us_bits: 0,
            cum_enqueued_bits: 0,
            cum_served_bits: 0,
        }
    }

    pub fn backlog_bits(&self) -> u64 {
        self.backlog_bits
    }

    pub fn queued_sdus(&self) -> usize {
        self.rlc_queue.len()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct WindowAcc {
    served_bits: u64,
    rb_count: u64,
    latency_sum_us: u64,
    latency_n: u64,
}

#[derive(Debug)]
struct SubEntry {
    period_us: u64,
    last_emit_us: u64,
    next_emit_us: u64,
    seq: u64,
    acc: BTreeMap<u32, WindowAcc>,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub node_id: u32,
    pub tdd: TddConfig,
    pub sched: SchedConfig,
    /// Channel constants; the node only reads the CQI efficiency table.
    pub channel: ChannelCfg,
    pub functions: Vec<RanFunction>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            node_id: 1,
            tdd: TddConfig::default(),
            sched: SchedConfig::default(),
            channel: ChannelCfg::default(),
            functions: vec![RanFunction {
                function_id: KPM_FUNCTION_ID,
                name: "kpm_mon".into(),
            }],
        }
    }
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Tdd(#[from] crate::phy_frame::TddConfigError),
    #[error("duplicate ue id {0}")]
    DuplicateUeId(u32),
    #[error("setup rejected: function {0} not accepted by the RIC")]
    FunctionNotAccepted(u16),
    #[error("expected SetupResponse, got tag 0x{0:02x}")]
    UnexpectedSetupReply(u8),
}

/// What one slot produced, for the transport and for tests.
#[derive(Debug, Default)]
pub struct SlotOutcome {
    /// Indications due at this slot boundary, in ascending sub_id order.
    pub outbound: Vec<E2Message>,
    pub served_bits: BTreeMap<u32, u64>,
    pub allocation: Option<Allocation>,
    pub completed_latencies_us: BTreeMap<u32, Vec<u64>>,
}

pub struct RanNode {
    pub cfg: NodeConfig,
    pattern: SlotPattern,
    slot_us: u64,
    ues: Vec<UeContext>,
    subs: BTreeMap<u32, SubEntry>,
    t_us: u64,
    slot_index: u64,
}

impl RanNode {
    pub fn new(cfg: NodeConfig, mut ues: Vec<UeContext>) -> Result<Self, NodeError> {
        let pattern = derive_tdd_pattern(&cfg.tdd)?;
        ues.sort_by_key(|u| u.ue_id);
        for w in ues.windows(2) {
            if w[0].ue_id == w[1].ue_id {
                return Err(NodeError::DuplicateUeId(w[0].ue_id));
            }
        }
        for ue in &mut ues {
            ue.ewma_rate_bps = ue.ewma_rate_bps.max(cfg.sched.ewma_floor_bps);
        }
        let slot_us = u64::from(cfg.tdd.slot_us());
        Ok(RanNode {
            cfg,
            pattern,
            slot_us,
            ues,
            subs: BTreeMap::new(),
            t_us: 0,
            slot_index: 0,
        })
    }

    pub fn now_us(&self) -> u64 {
        self.t_us
    }

    pub fn slot_us(&self) -> u64 {
        self.slot_us
    }

    pub fn ues(&self) -> &[UeContext] {
        &self.ues
    }

    pub fn ue(&self, ue_id: u32) -> Option<&UeContext> {
        self.ues.iter().find(|u| u.ue_id == ue_id)
    }

    /// Runtime knob for load experiments.
    pub fn set_offered_load(&mut self, ue_id: u32, bps: u64) -> bool {
        if let Some(ue) = self.ues.iter_mut().find(|u| u.ue_id == ue_id) {
            ue.offered_load_bps = bps;
            true
        } else {
            false
        }
    }

    pub fn active_subscriptions(&self) -> Vec<u32> {
        self.subs.keys().copied().collect()
    }

    /// First message of the handshake: advertise the RAN functions.
    pub fn setup_request(&self) -> E2Message {
        E2Message::SetupRequest {
            node_id: self.cfg.node_id,
            functions: self.cfg.functions.clone(),
        }
    }

    pub fn handle_setup_response(&mut self, msg: &E2Message) -> Result<(), NodeError> {
        match msg {
            E2Message::SetupResponse {
                accepted_function_ids,
            } => {
                for f in &self.cfg.functions {
                    if !accepted_function_ids.contains(&f.function_id) {
                        return Err(NodeError::FunctionNotAccepted(f.function_id));
                    }
                }
                Ok(())
            }
            other => Err(NodeError::UnexpectedSetupReply(other.tag())),
        }
    }

    /// Serves one inbound control message, returning the reply (if any).
    /// Accepted subscriptions start their first report window at the current
    /// slot boundary.
    pub fn handle_control(&mut self, msg: E2Message) -> Option<E2Message> {
        match msg {
            E2Message::SubscriptionRequest {
                sub_id,
                function_id,
                report_period_ms,
            } => {
                let reason_code = if !self
                    .cfg
                    .functions
                    .iter()
                    .any(|f| f.function_id == function_id)
                {
                    reason::UNKNOWN_FUNCTION
                } else if report_period_ms == 0 {
                    reason::BAD_PERIOD
                } else if self.subs.contains_key(&sub_id) {
                    reason::DUPLICATE_SUB_ID
                } else {
                    let period_us = u64::from(report_period_ms) * 1000;
                    self.subs.insert(
                        sub_id,
                        SubEntry {
                            period_us,
                            last_emit_us: self.t_us,
                            next_emit_us: self.t_us + period_us,
                            seq: 0,
                            acc: BTreeMap::new(),
                        },
                    );
                    reason::OK
                };
                Some(E2Message::SubscriptionResponse {
                    sub_id,
                    accepted: reason_code == reason::OK,
                    reason_code,
                })
            }
            E2Message::SubscriptionDelete { sub_id } => {
                self.subs.remove(&sub_id);
                None
            }
            _ => Some(E2Message::ErrorIndication {
                code: crate::e2::error_code::PROTOCOL_VIOLATION,
                detail: "unexpected message at E2 node".into(),
            }),
        }
    }

    /// Adds CBR arrivals for one slot: whole SDUs are enqueued, the
    /// fractional remainder carries in the accumulator.
    fn enqueue_traffic(ue: &mut UeContext, slot_us: u64, now_us: u64) {
        ue.credit_us_bits += ue.offered_load_bps * slot_us;
        let sdu_credit = u64::from(ue.sdu_size_bits) * 1_000_000;
        while ue.credit_us_bits >= sdu_credit {
            ue.credit_us_bits -= sdu_credit;
            ue.rlc_queue.push_back(Sdu {
                enqueue_us: now_us,
                remaining_bits: u64::from(ue.sdu_size_bits),
            });
            ue.backlog_bits += u64::from(ue.sdu_size_bits);
            ue.cum_enqueued_bits += u64::from(ue.sdu_size_bits);
        }
    }

    /// Advances one slot: enqueue traffic, schedule and drain on DL-capable
    /// slots, update EWMAs, and emit indications due at the new boundary.
    /// `cqi_by_ue` carries the current channel snapshot.
    pub fn advance_slot(&mut self, cqi_by_ue: &BTreeMap<u32, u8>) -> SlotOutcome {
        let mut outcome = SlotOutcome::default();
        for ue in &mut self.ues {
            if let Some(&cqi) = cqi_by_ue.get(&ue.ue_id) {
                ue.cqi = cqi.clamp(1, 15);
            }
        }
        let now = self.t_us;
        for ue in &mut self.ues {
            Self::enqueue_traffic(ue, self.slot_us, now);
        }

        let slot = self.pattern.slots[(self.slot_index % self.pattern.slots.len() as u64) as usize];
        let data_symbols = dl_data_symbols(&slot, self.cfg.sched.overhead_symbols);
        let slot_s = self.slot_us as f64 / 1e6;

        if data_symbols > 0 {
            let inputs: Vec<SchedInput> = self
                .ues
                .iter()
                .map(|ue| {
                    let efficiency = cqi_to_efficiency(&self.cfg.channel, ue.cqi);
                    let bits_per_rb = tb_bits(1, data_symbols, efficiency);
                    SchedInput {
                        state: SchedUeState {
                            ue_id: ue.ue_id,
                            cqi: ue.cqi,
                            ewma_rate_bps: ue.ewma_rate_bps,
                            backlog_bits: ue.backlog_bits,
                            rb_demand: rb_demand(ue.backlog_bits, bits_per_rb),
                        },
                        efficiency,
                    }
                })
                .collect();
            let allocation = pf_schedule(&inputs, data_symbols, slot_s, self.cfg.tdd.n_prb);
            let completion_us = now + self.slot_us;

            for ue in &mut self.ues {
                let mut served = 0u64;
                let mut latencies = Vec::new();
                if let Some(grant) = allocation.grants.get(&ue.ue_id) {
                    let mut budget = grant.tb_bits;
                    while budget > 0 {
                        let Some(front) = ue.rlc_queue.front_mut() else {
                            break;
                        };
                        let take = front.remaining_bits.min(budget);
                        front.remaining_bits -= take;
                        budget -= take;
                        served += take;
                        if front.remaining_bits == 0 {
                            latencies.push(completion_us - front.enqueue_us);
                            ue.rlc_queue.pop_front();
                        }
                    }
                    ue.backlog_bits -= served;
                    ue.cum_served_bits += served;
                }
                ue.ewma_rate_bps = update_ewma(
                    ue.ewma_rate_bps,
                    served,
                    self.cfg.sched.ewma_window_slots,
                    slot_s,
                    self.cfg.sched.ewma_floor_bps,
                );
                let rb = allocation.rb_count(ue.ue_id);
                for sub in self.subs.values_mut() {
                    let acc = sub.acc.entry(ue.ue_id).or_default();
                    acc.served_bits += served;
                    acc.rb_count += u64::from(rb);
                    acc.latency_sum_us += latencies.iter().sum::<u64>();
                    acc.latency_n += latencies.len() as u64;
                }
                outcome.served_bits.insert(ue.ue_id, served);
                if !latencies.is_empty() {
                    outcome.completed_latencies_us.insert(ue.ue_id, latencies);
                }
            }
            outcome.allocation = Some(allocation);
        } else {
            for ue in &self.ues {
                outcome.served_bits.insert(ue.ue_id, 0);
            }
        }

        self.t_us += self.slot_us;
        self.slot_index += 1;

        let t = self.t_us;
        let mut due: Vec<u32> = Vec::new();
        for (&sub_id, sub) in &self.subs {
            if t >= sub.next_emit_us {
                due.push(sub_id);
            }
        }
        for sub_id in due {
            loop {
                let sub = self.subs.get_mut(&sub_id).unwrap();
                if t < sub.next_emit_us {
                    break;
                }
                let window_end = sub.next_emit_us;
                let window_ms = (window_end - sub.last_emit_us) / 1000;
                let acc = std::mem::take(&mut sub.acc);
                sub.last_emit_us = window_end;
                sub.next_emit_us += sub.period_us;
                sub.seq += 1;
                let seq = sub.seq;
                let records = self.collect_kpm(&acc, window_end, window_ms.max(1));
                outcome.outbound.push(E2Message::Indication {
                    sub_id,
                    seq,
                    records,
                });
            }
        }
        outcome
    }

    /// One KPM record per attached UE over a closed window, positions
    /// snapshotted at the window end.
    fn collect_kpm(
        &self,
        acc: &BTreeMap<u32, WindowAcc>,
        window_end_us: u64,
        window_ms: u64,
    ) -> Vec<KpmRecord> {
        let t_s = window_end_us as f64 / 1e6;
        self.ues
            .iter()
            .map(|ue| {
                let a = acc.get(&ue.ue_id).copied().unwrap_or_default();
                let dl_thp_kbps = ((2 * a.served_bits + window_ms) / (2 * window_ms)) as u32;
                let sdu_latency_us = if a.latency_n > 0 {
                    Some(((a.latency_sum_us + a.latency_n / 2) / a.latency_n) as u32)
                } else {
                    None
                };
                let pos = position_at(&ue.trajectory, t_s);
                let pos_cm = [
                    (pos[0] * 100.0).round() as i32,
                    (pos[1] * 100.0).round() as i32,
                    (pos[2] * 100.0).round() as i32,
                ];
                KpmRecord {
                    t_ms: window_end_us / 1000,
                    ue_id: ue.ue_id,
                    dl_thp_kbps,
                    rb_count: a.rb_count.min(u64::from(u32::MAX)) as u32,
                    sdu_latency_us,
                    pos_cm,
                    cqi: ue.cqi,
                    mcs: select_mcs(ue.cqi),
                }
            })
            .collect()
    }
}
