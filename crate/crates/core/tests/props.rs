//! Property tests over the codec, frame derivation, scheduler, mobility,
//! channel chain, and data generator.

use proptest::prelude::*;
use skytwin_core::channel::{los_probability, ChannelCfg};
use skytwin_core::datagen::{power_shift_curve, CurvePoint, MeasuredCurve, RateChain};
use skytwin_core::e2::{self, E2Message, KpmRecord, RanFunction};
use skytwin_core::mac_sched::{pf_schedule, SchedInput, SchedUeState};
use skytwin_core::mobility::{position_at, Trajectory, TrajectoryMode, Waypoint};
use skytwin_core::phy_frame::{derive_tdd_pattern, symbol_counts, TddConfig};

fn arb_record() -> impl Strategy<Value = KpmRecord> {
    (
        any::<u64>(),
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
        proptest::option::of(any::<u32>()),
        any::<[i32; 3]>(),
        1u8..=15,
    )
        .prop_map(
            |(t_ms, ue_id, thp, rb, lat, pos, cqi)| KpmRecord {
                t_ms,
                ue_id,
                dl_thp_kbps: thp,
                rb_count: rb,
                sdu_latency_us: lat,
                pos_cm: pos,
                cqi,
                mcs: cqi,
            },
        )
}

fn arb_message() -> impl Strategy<Value = E2Message> {
    let setup_req = (any::<u32>(), proptest::collection::vec((any::<u16>(), ".{0,24}"), 0..5))
        .prop_map(|(node_id, fns)| E2Message::SetupRequest {
            node_id,
            functions: fns
                .into_iter()
                .map(|(function_id, name)| RanFunction { function_id, name })
                .collect(),
        });
    let setup_resp = proptest::collection::vec(any::<u16>(), 0..8)
        .prop_map(|accepted_function_ids| E2Message::SetupResponse {
            accepted_function_ids,
        });
    let sub_req = (any::<u32>(), any::<u16>(), any::<u32>()).prop_map(
        |(sub_id, function_id, report_period_ms)| E2Message::SubscriptionRequest {
            sub_id,
            function_id,
            report_period_ms,
        },
    );
    let sub_resp = (any::<u32>(), any::<bool>(), any::<u8>()).prop_map(
        |(sub_id, accepted, reason_code)| E2Message::SubscriptionResponse {
            sub_id,
            accepted,
            reason_code,
        },
    );
    let indication = (
        any::<u32>(),
        any::<u64>(),
        proptest::collection::vec(arb_record(), 0..6),
    )
        .prop_map(|(sub_id, seq, records)| E2Message::Indication {
            sub_id,
            seq,
            records,
        });
    let delete = any::<u32>().prop_map(|sub_id| E2Message::SubscriptionDelete { sub_id });
    let error = (any::<u8>(), ".{0,40}")
        .prop_map(|(code, detail)| E2Message::ErrorIndication { code, detail });
    prop_oneof![setup_req, setup_resp, sub_req, sub_resp, indication, delete, error]
}

proptest! {
    #[test]
    fn codec_round_trip_identity(m in arb_message()) {
        let bytes = e2::encode(&m).unwrap();
        prop_assert_eq!(e2::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64usize)) {
        let _ = e2::decode(&bytes);
    }
}

proptest! {
    #[test]
    fn tdd_pattern_counts_and_purity(
        full_dl in 0u32..8,
        extra_dl in 0u32..14,
        full_ul in 0u32..8,
        extra_ul in 0u32..14,
        period_ms in 1u32..10,
    ) {
        let cfg = TddConfig {
            scs_khz: 30,
            period_ms,
            full_dl_slots: full_dl,
            extra_dl_symbols: extra_dl,
            full_ul_slots: full_ul,
            extra_ul_symbols: extra_ul,
            n_prb: 106,
            symbols_per_slot: 14,
        };
        if let Ok(p) = derive_tdd_pattern(&cfg) {
            let dl: u32 = p.slots.iter().map(|s| s.dl_symbols).sum();
            let ul: u32 = p.slots.iter().map(|s| s.ul_symbols).sum();
            prop_assert_eq!(dl, 14 * full_dl + extra_dl);
            prop_assert_eq!(ul, 14 * full_ul + extra_ul);
            prop_assert_eq!(p.slots.len() as u32, cfg.slots_per_period().unwrap());
            // every slot's symbols add up
            for s in &p.slots {
                prop_assert_eq!(s.dl_symbols + s.ul_symbols + s.guard_symbols, 14);
            }
            // pure function
            prop_assert_eq!(derive_tdd_pattern(&cfg).unwrap(), p.clone());
            if dl > 0 && ul > 0 {
                let (d2, u2, ratio) = symbol_counts(&p).unwrap();
                prop_assert_eq!((d2, u2), (dl, ul));
                prop_assert!((ratio - f64::from(ul) / f64::from(dl)).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn scheduler_conserves_and_satisfies(
        ues in proptest::collection::vec(
            (1u8..=15, 1.0e3f64..1e8, 0u64..2_000_000, 0u32..300),
            1..6
        ),
        n_prb in 1u32..200,
    ) {
        let cfg = ChannelCfg::default();
        let inputs: Vec<SchedInput> = ues
            .iter()
            .enumerate()
            .map(|(i, &(cqi, ewma, backlog, demand))| SchedInput {
                state: SchedUeState {
                    ue_id: i as u32,
                    cqi,
                    ewma_rate_bps: ewma,
                    backlog_bits: backlog,
                    rb_demand: if backlog == 0 { 0 } else { demand },
                },
                efficiency: skytwin_core::channel::cqi_to_efficiency(&cfg, cqi),
            })
            .collect();
        let alloc = pf_schedule(&inputs, 12, 5e-4, n_prb);
        // conservation
        prop_assert!(alloc.total_rbs() <= n_prb);
        // grants only to backlogged UEs
        for (ue_id, grant) in &alloc.grants {
            let input = &inputs[*ue_id as usize];
            prop_assert!(input.state.backlog_bits > 0);
            prop_assert!(grant.rb_count > 0);
            prop_assert!(grant.rb_count <= input.state.rb_demand);
        }
        // demand satisfaction when the carrier suffices
        let total_demand: u64 = inputs.iter().map(|u| u64::from(u.state.rb_demand)).sum();
        if total_demand <= u64::from(n_prb) {
            for input in &inputs {
                prop_assert_eq!(alloc.rb_count(input.state.ue_id), input.state.rb_demand);
            }
        }
    }
}

proptest! {
    #[test]
    fn path_mode_respects_speed_bound(
        waypoints in proptest::collection::vec(
            (-200.0f64..200.0, -200.0f64..200.0, 0.0f64..120.0),
            2..6
        ),
        speed in 0.5f64..40.0,
        t in 0.0f64..200.0,
        dt in 0.001f64..2.0,
    ) {
        let traj = Trajectory {
            name: "p".into(),
            mode: TrajectoryMode::ConstantSpeedPath,
            waypoints: waypoints
                .into_iter()
                .map(|(x, y, z)| Waypoint { pos: [x, y, z], hold_s: 0.0 })
                .collect(),
            speed_mps: Some(speed),
        };
        let a = position_at(&traj, t);
        let b = position_at(&traj, t + dt);
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        prop_assert!(d <= speed * dt + 1e-9);
    }

    #[test]
    fn los_probability_bounded_and_monotone(e1 in -90.0f64..90.0, e2 in -90.0f64..90.0) {
        let cfg = ChannelCfg::default();
        let (p1, p2) = (los_probability(&cfg, e1), los_probability(&cfg, e2));
        prop_assert!((cfg.p0..=1.0).contains(&p1));
        if e1 <= e2 {
            prop_assert!(p1 <= p2 + 1e-12);
        }
    }
}

fn arb_curve(chain: &RateChain) -> impl Strategy<Value = MeasuredCurve> {
    let rates = chain.rates_mbps;
    proptest::collection::vec((0u8..16, 0.0f64..1.0), 1..20).prop_map(move |steps| {
        let mut h = 0.0;
        let points = steps
            .iter()
            .map(|&(lvl, jitter)| {
                h += 1.0 + jitter * 20.0;
                let thp = if lvl == 0 {
                    18.0 // capped point
                } else {
                    rates[(lvl - 1) as usize].min(18.0)
                };
                CurvePoint {
                    horizontal_m: h,
                    throughput_mbps: thp,
                }
            })
            .collect();
        MeasuredCurve {
            power_dbm: -27.0,
            offered_load_mbps: 18.0,
            points,
        }
    })
}

proptest! {
    #[test]
    fn power_shift_monotone_in_delta(curve_seed in arb_curve(&RateChain::default_chain()), delta in 0.0f64..12.0) {
        let chain = RateChain::default_chain();
        let shifted = power_shift_curve(&curve_seed, curve_seed.power_dbm + delta, &chain);
        for (a, b) in curve_seed.points.iter().zip(&shifted.points) {
            prop_assert!(b.throughput_mbps >= a.throughput_mbps - 1e-9);
            prop_assert!(b.throughput_mbps <= curve_seed.offered_load_mbps + 1e-9);
        }
    }

    #[test]
    fn power_shift_composes_within_one_step(
        curve_seed in arb_curve(&RateChain::default_chain()),
        d1 in -8.0f64..8.0,
        d2 in -8.0f64..8.0,
    ) {
        let chain = RateChain::default_chain();
        let two = power_shift_curve(
            &power_shift_curve(&curve_seed, curve_seed.power_dbm + d1, &chain),
            curve_seed.power_dbm + d1 + d2,
            &chain,
        );
        let one = power_shift_curve(&curve_seed, curve_seed.power_dbm + d1 + d2, &chain);
        for (a, b) in two.points.iter().zip(&one.points) {
            let sa = chain.snr_at_rate(a.throughput_mbps.min(17.9));
            let sb = chain.snr_at_rate(b.throughput_mbps.min(17.9));
            prop_assert!(
                (sa - sb).abs() <= chain.snr_step_db + 1e-9,
                "two-step {} vs direct {}", a.throughput_mbps, b.throughput_mbps
            );
        }
    }
}
