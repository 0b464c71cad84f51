use proptest::prelude::*;

use dcsim::control::{decide, CoordinatorTable, Decision, DecisionParams, MeasurementEntry, MessagePath, MobilityState, Phase};
use dcsim::dataplane::{PdcpPacket, RlcAmQueue};
use dcsim::network::{RunOptions, Simulation};
use dcsim::{Mode, SimTime, SimulationParams};

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Dc), Just(Mode::Hh)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn run_invariants_hold(
        seed in any::<u64>(),
        mode in mode_strategy(),
        x2_us in prop_oneof![Just(100u64), Just(1_000), Just(10_000)],
        speed in prop_oneof![Just(2.0), Just(8.0), Just(16.0)],
    ) {
        let params = SimulationParams {
            mode,
            d_x2: SimTime::from_us(x2_us),
            ue_speed: speed,
            duration: Some(SimTime::from_secs_f64(10.0)),
            ..SimulationParams::default()
        };
        let out = Simulation::new(&params, seed, 0, RunOptions::default()).unwrap().run().unwrap();
        let m = &out.metrics;
        let inv = &out.invariants;

        prop_assert_eq!(
            m.packets_generated,
            m.packets_delivered + m.dropped_overflow + m.dropped_retx + m.in_flight_end
        );
        prop_assert!(inv.max_bytes_queued <= params.b_rlc);
        prop_assert_eq!(inv.fifo_violations, 0);
        prop_assert_eq!(inv.latency_floor_violations, 0);
        prop_assert_eq!(inv.blocked_outside_exec, 0);

        let segs = &m.association;
        prop_assert_eq!(segs[0].start, SimTime::ZERO);
        prop_assert_eq!(segs.last().unwrap().end, m.horizon);
        for w in segs.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].cell != w[1].cell);
        }

        if mode == Mode::Dc {
            prop_assert!(out.messages.iter().all(|msg| msg.path != MessagePath::S1Mme));
            prop_assert!(out.blocked.is_empty());
            prop_assert_eq!(m.rlf, 0);
        }
        for (a, b) in &out.blocked {
            prop_assert!(a < b);
        }
    }

    #[test]
    fn twin_traces_never_trigger_mmwave_handover(
        start in -12.0f64..25.0,
        steps in proptest::collection::vec((-1.5f64..1.5, -2.99f64..2.99), 1..300),
        serving in prop_oneof![Just(2u32), Just(3u32)],
        mode in mode_strategy(),
    ) {
        let params = DecisionParams::default();
        let mut level = start;
        for (k, (dv, gap)) in steps.into_iter().enumerate() {
            level += dv;
            let now = SimTime::from_ms(5 * k as u64);
            let mut table = CoordinatorTable::new();
            table.update(MeasurementEntry { enb_id: 2, snr_db: level, reported_at: now });
            table.update(MeasurementEntry { enb_id: 3, snr_db: level + gap, reported_at: now });
            let state = MobilityState {
                mode,
                phase: Phase::Steady,
                serving_cell: serving,
                secondary: Some(serving),
                data_blocked: false,
            };
            let d = decide(&table, now, &state, 1, &params);
            prop_assert!(!matches!(d, Decision::Handover(t) if t != 1), "{:?}", d);
        }
    }

    #[test]
    fn decide_is_idempotent(
        a in -20.0f64..30.0,
        b in -20.0f64..30.0,
        serving in prop_oneof![Just(1u32), Just(2u32), Just(3u32)],
        mode in mode_strategy(),
    ) {
        let params = DecisionParams::default();
        let now = SimTime::from_ms(50);
        let mut table = CoordinatorTable::new();
        table.update(MeasurementEntry { enb_id: 2, snr_db: a, reported_at: now });
        table.update(MeasurementEntry { enb_id: 3, snr_db: b, reported_at: now });
        let state = MobilityState { mode, phase: Phase::Steady, serving_cell: serving, secondary: Some(2), data_blocked: false };
        let first = decide(&table, now, &state, 1, &params);
        prop_assert_eq!(first, decide(&table, now, &state, 1, &params));
        // Only steady state decides.
        let busy = MobilityState { phase: Phase::HoPrep, ..state };
        prop_assert_eq!(decide(&table, now, &busy, 1, &params), Decision::None);
    }

    #[test]
    fn rlc_queue_never_exceeds_capacity(
        sizes in proptest::collection::vec(1u32..3000, 0..400),
        capacity in 1_000u64..200_000,
    ) {
        let mut q = RlcAmQueue::new(capacity, 3);
        let mut accepted = Vec::new();
        for (sn, size) in sizes.into_iter().enumerate() {
            if q.enqueue(PdcpPacket::new(sn as u64, size, SimTime::ZERO)).is_ok() {
                accepted.push(sn as u64);
            }
            prop_assert!(q.bytes_queued() <= capacity);
        }
        let order: Vec<u64> = q.iter().map(|p| p.sn).collect();
        prop_assert_eq!(order, accepted);
    }
}

#[test]
fn stale_reports_are_ignored() {
    let params = DecisionParams::default();
    let mut table = CoordinatorTable::new();
    table.update(MeasurementEntry {
        enb_id: 2,
        snr_db: -9.0,
        reported_at: SimTime::ZERO,
    });
    let state = MobilityState {
        mode: Mode::Dc,
        phase: Phase::Steady,
        serving_cell: 2,
        secondary: Some(2),
        data_blocked: false,
    };
    assert_eq!(decide(&table, SimTime::from_ms(10), &state, 1, &params), Decision::SwitchToLte);
    assert_eq!(decide(&table, SimTime::from_ms(11), &state, 1, &params), Decision::None);
}
