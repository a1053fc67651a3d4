//! TDD frame structure and symbol accounting.
//!
//! A carrier alternates downlink and uplink inside a repeating DL/UL period.
//! The period is made of full DL slots, at most one special slot carrying the
//! leftover DL and UL symbols, and full UL slots. The special slot's guard
//! length is inferred as `symbols_per_slot - extra_dl - extra_ul`; the slot
//! grid itself only fixes the aggregate symbol counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// TDD numerology and per-period slot budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TddConfig {
    /// Subcarrier spacing in kHz (15, 30, 60, ...).
    pub scs_khz: u32,
    /// DL/UL period in whole milliseconds.
    pub period_ms: u32,
    /// Full downlink slots per period.
    pub full_dl_slots: u32,
    /// Extra downlink symbols carried by the special slot.
    pub extra_dl_symbols: u32,
    /// Full uplink slots per period.
    pub full_ul_slots: u32,
    /// Extra uplink symbols carried by the special slot.
    pub extra_ul_symbols: u32,
    /// Resource blocks in the carrier.
    pub n_prb: u32,
    /// OFDM symbols per slot.
    #[serde(default = "default_symbols_per_slot")]
    pub symbols_per_slot: u32,
}

fn default_symbols_per_slot() -> u32 {
    14
}

impl Default for TddConfig {
    /// 30 kHz SCS, 5 ms period, 7 full DL slots + 6 extra DL symbols,
    /// 2 full UL slots + 4 extra UL symbols, 106 PRB.
    fn default() -> Self {
        TddConfig {
            scs_khz: 30,
            period_ms: 5,
            full_dl_slots: 7,
            extra_dl_symbols: 6,
            full_ul_slots: 2,
            extra_ul_symbols: 4,
            n_prb: 106,
            symbols_per_slot: 14,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TddConfigError {
    #[error("scs_khz must be a positive multiple of 15, got {0}")]
    BadScs(u32),
    #[error("period_ms {period_ms} is not a whole number of {slot_us} us slots")]
    FractionalSlots { period_ms: u32, slot_us: u32 },
    #[error("period_ms must be positive")]
    ZeroPeriod,
    #[error(
        "slot budget exceeded: {full_dl_slots} DL + {full_ul_slots} UL + {special} special > {slots_per_period} slots per period"
    )]
    SlotBudgetExceeded {
        full_dl_slots: u32,
        full_ul_slots: u32,
        special: u32,
        slots_per_period: u32,
    },
    #[error(
        "extra symbols exceed the special slot: {extra_dl_symbols} DL + {extra_ul_symbols} UL > {symbols_per_slot}"
    )]
    SpecialSlotOverflow {
        extra_dl_symbols: u32,
        extra_ul_symbols: u32,
        symbols_per_slot: u32,
    },
    #[error("n_prb must be >= 1")]
    NoPrb,
    #[error("symbols_per_slot must be >= 1")]
    NoSymbols,
}

impl TddConfig {
    /// Slot duration in whole microseconds (1 ms at 15 kHz, halving per step).
    pub fn slot_us(&self) -> u32 {
        15_000 / self.scs_khz
    }

    /// Number of slots in one DL/UL period.
    pub fn slots_per_period(&self) -> Result<u32, TddConfigError> {
        if self.scs_khz == 0 || self.scs_khz % 15 != 0 {
            return Err(TddConfigError::BadScs(self.scs_khz));
        }
        if self.period_ms == 0 {
            return Err(TddConfigError::ZeroPeriod);
        }
        // period_ms / slot_ms = period_ms * scs / 15, exact in integers.
        let num = self.period_ms * self.scs_khz;
        if num % 15 != 0 {
            return Err(TddConfigError::FractionalSlots {
                period_ms: self.period_ms,
                slot_us: self.slot_us(),
            });
        }
        Ok(num / 15)
    }

    /// True when the extra DL/UL symbols require a special slot.
    pub fn has_special_slot(&self) -> bool {
        self.extra_dl_symbols + self.extra_ul_symbols > 0
    }

    pub fn validate(&self) -> Result<(), TddConfigError> {
        let slots = self.slots_per_period()?;
        if self.symbols_per_slot == 0 {
            return Err(TddConfigError::NoSymbols);
        }
        if self.n_prb == 0 {
            return Err(TddConfigError::NoPrb);
        }
        if self.extra_dl_symbols + self.extra_ul_symbols > self.symbols_per_slot {
            return Err(TddConfigError::SpecialSlotOverflow {
                extra_dl_symbols: self.extra_dl_symbols,
                extra_ul_symbols: self.extra_ul_symbols,
                symbols_per_slot: self.symbols_per_slot,
            });
        }
        let special = u32::from(self.has_special_slot());
        if self.full_dl_slots + self.full_ul_slots + special > slots {
            return Err(TddConfigError::SlotBudgetExceeded {
                full_dl_slots: self.full_dl_slots,
                full_ul_slots: self.full_ul_slots,
                special,
                slots_per_period: slots,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Dl,
    Ul,
    Special,
}

/// One slot's symbol layout inside the period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDescriptor {
    pub kind: SlotKind,
    pub dl_symbols: u32,
    pub ul_symbols: u32,
    pub guard_symbols: u32,
}

/// Ordered slot layout of one DL/UL period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPattern {
    pub slots: Vec<SlotDescriptor>,
    pub symbols_per_slot: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("UL/DL ratio undefined for a single-direction pattern ({dl_symbols} DL, {ul_symbols} UL)")]
pub struct UndefinedRatio {
    pub dl_symbols: u32,
    pub ul_symbols: u32,
}

/// Derives the per-slot layout: DL slots first, then the special slot (when
/// extra symbols exist), then UL slots. Any leftover slots become guard-only
/// slots at the end of the period.
pub fn derive_tdd_pattern(cfg: &TddConfig) -> Result<SlotPattern, TddConfigError> {
    cfg.validate()?;
    let slots_per_period = cfg.slots_per_period()?;
    let sps = cfg.symbols_per_slot;
    let mut slots = Vec::with_capacity(slots_per_period as usize);
    for _ in 0..cfg.full_dl_slots {
        slots.push(SlotDescriptor {
            kind: SlotKind::Dl,
            dl_symbols: sps,
            ul_symbols: 0,
            guard_symbols: 0,
        });
    }
    if cfg.has_special_slot() {
        slots.push(SlotDescriptor {
            kind: SlotKind::Special,
            dl_symbols: cfg.extra_dl_symbols,
            ul_symbols: cfg.extra_ul_symbols,
            guard_symbols: sps - cfg.extra_dl_symbols - cfg.extra_ul_symbols,
        });
    }
    for _ in 0..cfg.full_ul_slots {
        slots.push(SlotDescriptor {
            kind: SlotKind::Ul,
            dl_symbols: 0,
            ul_symbols: sps,
            guard_symbols: 0,
        });
    }
    while slots.len() < slots_per_period as usize {
        slots.push(SlotDescriptor {
            kind: SlotKind::Special,
            dl_symbols: 0,
            ul_symbols: 0,
            guard_symbols: sps,
        });
    }
    Ok(SlotPattern {
        slots,
        symbols_per_slot: sps,
    })
}

/// Aggregate (DL symbols, UL symbols, UL/DL ratio) over one period. The
/// ratio is undefined when either direction is absent; the error carries the
/// counts.
pub fn symbol_counts(pattern: &SlotPattern) -> Result<(u32, u32, f64), UndefinedRatio> {
    let dl: u32 = pattern.slots.iter().map(|s| s.dl_symbols).sum();
    let ul: u32 = pattern.slots.iter().map(|s| s.ul_symbols).sum();
    if dl == 0 || ul == 0 {
        return Err(UndefinedRatio {
            dl_symbols: dl,
            ul_symbols: ul,
        });
    }
    Ok((dl, ul, f64::from(ul) / f64::from(dl)))
}

/// DL symbols left for data after control/reference overhead.
///
/// Full DL slots subtract the whole overhead; special slots subtract at most
/// what they have; UL and guard-only slots carry no DL data.
pub fn dl_data_symbols(slot: &SlotDescriptor, overhead_symbols: u32) -> u32 {
    match slot.kind {
        SlotKind::Ul => 0,
        SlotKind::Dl | SlotKind::Special => slot.dl_symbols.saturating_sub(overhead_symbols),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_cfg() -> TddConfig {
        TddConfig::default()
    }

    #[test]
    fn paper_pattern_counts() {
        let p = derive_tdd_pattern(&paper_cfg()).unwrap();
        assert_eq!(p.slots.len(), 10);
        let kinds: Vec<_> = p.slots.iter().map(|s| s.kind).collect();
        assert_eq!(kinds[..7], vec![SlotKind::Dl; 7][..]);
        assert_eq!(kinds[7], SlotKind::Special);
        assert_eq!(kinds[8..], vec![SlotKind::Ul; 2][..]);
        let special = &p.slots[7];
        assert_eq!(
            (special.dl_symbols, special.ul_symbols, special.guard_symbols),
            (6, 4, 4)
        );
        let (dl, ul, ratio) = symbol_counts(&p).unwrap();
        assert_eq!((dl, ul), (104, 32));
        // 32/104 = 0.307692..., rounds to 0.3077
        assert!((ratio - 0.3077).abs() < 5e-5);
    }

    #[test]
    fn all_downlink_period() {
        let cfg = TddConfig {
            full_dl_slots: 10,
            extra_dl_symbols: 0,
            full_ul_slots: 0,
            extra_ul_symbols: 0,
            ..paper_cfg()
        };
        let p = derive_tdd_pattern(&cfg).unwrap();
        assert_eq!(p.slots.len(), 10);
        assert!(p.slots.iter().all(|s| s.kind == SlotKind::Dl));
        let dl: u32 = p.slots.iter().map(|s| s.dl_symbols).sum();
        assert_eq!(dl, 140);
        assert_eq!(
            symbol_counts(&p),
            Err(UndefinedRatio {
                dl_symbols: 140,
                ul_symbols: 0
            })
        );
    }

    #[test]
    fn rejects_slot_budget_overflow() {
        let cfg = TddConfig {
            period_ms: 3,
            ..paper_cfg()
        };
        // 3 ms at 30 kHz = 6 slots; 7 DL + special cannot fit.
        match derive_tdd_pattern(&cfg) {
            Err(TddConfigError::SlotBudgetExceeded {
                slots_per_period, ..
            }) => assert_eq!(slots_per_period, 6),
            other => panic!("expected SlotBudgetExceeded, got {other:?}"),
        }
    }

    #[test]
    fn rejects_special_slot_overflow() {
        let cfg = TddConfig {
            extra_dl_symbols: 8,
            extra_ul_symbols: 8,
            ..paper_cfg()
        };
        assert!(matches!(
            derive_tdd_pattern(&cfg),
            Err(TddConfigError::SpecialSlotOverflow { .. })
        ));
    }

    #[test]
    fn rejects_fractional_period() {
        let cfg = TddConfig {
            scs_khz: 30,
            period_ms: 0,
            ..paper_cfg()
        };
        assert_eq!(cfg.slots_per_period(), Err(TddConfigError::ZeroPeriod));
    }

    #[test]
    fn two_dl_one_ul_ratio() {
        let cfg = TddConfig {
            scs_khz: 30,
            period_ms: 5,
            full_dl_slots: 2,
            extra_dl_symbols: 0,
            full_ul_slots: 1,
            extra_ul_symbols: 0,
            ..paper_cfg()
        };
        let p = derive_tdd_pattern(&cfg).unwrap();
        let (dl, ul, ratio) = symbol_counts(&p).unwrap();
        assert_eq!((dl, ul), (28, 14));
        assert!((ratio - 0.5).abs() < 1e-12);
        // leftover slots pad out as guard-only
        assert_eq!(p.slots.len(), 10);
        assert_eq!(p.slots[9].guard_symbols, 14);
    }

    #[test]
    fn data_symbol_overhead() {
        let full = SlotDescriptor {
            kind: SlotKind::Dl,
            dl_symbols: 14,
            ul_symbols: 0,
            guard_symbols: 0,
        };
        let special = SlotDescriptor {
            kind: SlotKind::Special,
            dl_symbols: 6,
            ul_symbols: 4,
            guard_symbols: 4,
        };
        let ul = SlotDescriptor {
            kind: SlotKind::Ul,
            dl_symbols: 0,
            ul_symbols: 14,
            guard_symbols: 0,
        };
        assert_eq!(dl_data_symbols(&full, 2), 12);
        assert_eq!(dl_data_symbols(&special, 2), 4);
        assert_eq!(dl_data_symbols(&ul, 2), 0);
        assert_eq!(dl_data_symbols(&special, 8), 0);
    }

    #[test]
    fn small_grid_exhaustive_counts() {
        for full_dl in 0..=4u32 {
            for full_ul in 0..=4u32 {
                for extra_dl in [0u32, 3, 6] {
                    for extra_ul in [0u32, 2, 4] {
                        let cfg = TddConfig {
                            scs_khz: 30,
                            period_ms: 5,
                            full_dl_slots: full_dl,
                            extra_dl_symbols: extra_dl,
                            full_ul_slots: full_ul,
                            extra_ul_symbols: extra_ul,
                            n_prb: 106,
                            symbols_per_slot: 14,
                        };
                        let Ok(p) = derive_tdd_pattern(&cfg) else {
                            continue;
                        };
                        let dl: u32 = p.slots.iter().map(|s| s.dl_symbols).sum();
                        let ul: u32 = p.slots.iter().map(|s| s.ul_symbols).sum();
                        assert_eq!(dl, 14 * full_dl + extra_dl);
                        assert_eq!(ul, 14 * full_ul + extra_ul);
                        // derivation is pure
                        assert_eq!(p, derive_tdd_pattern(&cfg).unwrap());
                    }
                }
            }
        }
    }
}
