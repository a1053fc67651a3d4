//! Proportional-fair downlink scheduler and transport-block sizing.
//!
//! Allocation is bulk per-UE: coefficients are computed once per slot, UEs are
//! visited in descending coefficient order (ties to the lower id), and each
//! one is granted its full demand until the carrier runs out. Channel usage
//! history is an EWMA of the served rate; a sliding-window mean would be a
//! plausible alternative reading of "used the channel less recently".

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Scheduler constants, overridable via the scenario `sched` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedConfig {
    /// EWMA window in slots (alpha = 1/window).
    pub ewma_window_slots: u32,
    /// Lower clamp for the EWMA rate, keeps coefficients finite.
    pub ewma_floor_bps: f64,
    /// Per-slot DL symbols reserved for control/reference signals.
    pub overhead_symbols: u32,
}

impl Default for SchedConfig {
    fn default() -> Self {
        SchedConfig {
            ewma_window_slots: 100,
            ewma_floor_bps: 1_000.0,
            overhead_symbols: 2,
        }
    }
}

/// Per-UE scheduler state for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedUeState {
    pub ue_id: u32,
    pub cqi: u8,
    /// EWMA of the served rate (bit/s), clamped to the floor.
    pub ewma_rate_bps: f64,
    /// RLC queue depth in bits.
    pub backlog_bits: u64,
    /// RBs needed to drain the backlog this slot.
    pub rb_demand: u32,
}

/// Scheduler input for one UE in one slot: its state plus the spectral
/// efficiency its CQI selects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedInput {
    pub state: SchedUeState,
    pub efficiency: f64,
}

/// One UE's grant within a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub rb_count: u32,
    pub mcs: u8,
    pub tb_bits: u64,
}

/// Slot allocation: UE id -> grant. Grants only go to backlogged UEs and
/// never exceed the carrier.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allocation {
    pub grants: BTreeMap<u32, Grant>,
}

impl Allocation {
    pub fn total_rbs(&self) -> u32 {
        self.grants.values().map(|g| g.rb_count).sum()
    }

    pub fn rb_count(&self, ue_id: u32) -> u32 {
        self.grants.get(&ue_id).map_or(0, |g| g.rb_count)
    }
}

/// Transport block size: floor(rb * 12 subcarriers * data symbols * efficiency).
pub fn tb_bits(rb_count: u32, data_symbols: u32, efficiency: f64) -> u64 {
    (f64::from(rb_count) * 12.0 * f64::from(data_symbols) * efficiency).floor() as u64
}

/// MCS index; identity onto the CQI table index (deliberate simplification).
pub fn select_mcs(cqi: u8) -> u8 {
    cqi
}

/// RBs needed to drain `backlog_bits` at `bits_per_rb` this slot.
pub fn rb_demand(backlog_bits: u64, bits_per_rb: u64) -> u32 {
    if backlog_bits == 0 || bits_per_rb == 0 {
        return 0;
    }
    backlog_bits
        .div_ceil(bits_per_rb)
        .min(u64::from(u32::MAX)) as u32
}

/// PF coefficient: achievable rate this slot over the EWMA of served rate.
/// Zero demand means zero coefficient; the EWMA floor keeps it finite.
pub fn pf_coefficient(ue: &SchedUeState, per_rb_rate_bps: f64, n_prb: u32) -> f64 {
    let achievable = per_rb_rate_bps * f64::from(ue.rb_demand.min(n_prb));
    achievable / ue.ewma_rate_bps
}

/// Greedy bulk allocation: sort by coefficient descending (ties to lower
/// ue_id), grant each UE min(demand, remaining) until RBs run out.
pub fn pf_schedule(
    inputs: &[SchedInput],
    data_symbols: u32,
    slot_s: f64,
    n_prb: u32,
) -> Allocation {
    let mut order: Vec<(f64, u32, usize)> = inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let bpr = tb_bits(1, data_symbols, input.efficiency);
            let per_rb_rate = bpr as f64 / slot_s;
            (
                pf_coefficient(&input.state, per_rb_rate, n_prb),
                input.state.ue_id,
                i,
            )
        })
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut alloc = Allocation::default();
    let mut remaining = n_prb;
    for (coeff, ue_id, i) in order {
        if remaining == 0 {
            break;
        }
        if coeff <= 0.0 {
            continue;
        }
        let input = &inputs[i];
        let rb = input.state.rb_demand.min(remaining);
        if rb == 0 {
            continue;
        }
        alloc.grants.insert(
            ue_id,
            Grant {
                rb_count: rb,
                mcs: select_mcs(input.state.cqi),
                tb_bits: tb_bits(rb, data_symbols, input.efficiency),
            },
        );
        remaining -= rb;
    }
    debug_assert!(alloc.total_rbs() <= n_prb);
    alloc
}

/// EWMA update after a slot: R <- (1-a) R + a * served_rate, clamped to the
/// floor. `a = 1/window_slots`.
pub fn update_ewma(
    ewma_rate_bps: f64,
    served_bits: u64,
    window_slots: u32,
    slot_s: f64,
    floor_bps: f64,
) -> f64 {
    let alpha = 1.0 / f64::from(window_slots.max(1));
    let instant = served_bits as f64 / slot_s;
    ((1.0 - alpha) * ewma_rate_bps + alpha * instant).max(floor_bps)
}
