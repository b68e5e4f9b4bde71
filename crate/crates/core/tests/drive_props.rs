use moby_core::drive::*;
use moby_core::protocol::*;
use proptest::prelude::*;

const DT: f64 = 0.01;

fn vel(l: f64, r: f64, flags: u8) -> Frame {
    pack_message(&BusMessage::VelCmd {
        left_rpm_d: rpm_to_wire(l),
        right_rpm_d: rpm_to_wire(r),
        flags,
    })
    .unwrap()
}

fn heartbeat(counter: u8) -> Frame {
    pack_message(&BusMessage::Heartbeat {
        source: SOURCE_SUPERVISOR,
        counter,
    })
    .unwrap()
}

/// Commands held for a number of ticks, with a supervisor heartbeat every
/// tenth tick so the brake stays released.
fn command_trace() -> impl Strategy<Value = Vec<(f64, f64, u32)>> {
    proptest::collection::vec((-300.0f64..300.0, -300.0f64..300.0, 1u32..60), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Emitted encoder ticks never drift from the exact wheel rotation by a
    /// whole tick, and the feedback deltas sum to the emitted total.
    #[test]
    fn encoder_ticks_are_conserved(trace in command_trace()) {
        let mut d = DriveUnit::new(DriveParams::default());
        let tpr = d.params.ticks_per_rev as f64;
        let mut exact = [0.0f64; 2];
        let mut summed = [0i64; 2];
        let mut k = 0u32;
        for (l, r, hold) in trace {
            for _ in 0..hold {
                let mut inbox = vec![vel(l, r, 0)];
                if k.is_multiple_of(10) {
                    inbox.push(heartbeat(k as u8));
                }
                k += 1;
                for f in d.step(&inbox, DT) {
                    if let Ok(BusMessage::EncFeedback { left_delta, right_delta, .. }) = unpack_message(&f) {
                        summed[0] += left_delta as i64;
                        summed[1] += right_delta as i64;
                    }
                }
                exact[0] += d.left().rpm / 60.0 * DT * tpr;
                exact[1] += d.right().rpm / 60.0 * DT * tpr;
            }
        }
        let (el, er) = d.emitted_ticks();
        prop_assert_eq!(summed, [el, er]);
        for (e, x) in [(el, exact[0]), (er, exact[1])] {
            let gap = x - e as f64;
            prop_assert!((-1e-6..1.0 + 1e-6).contains(&gap), "exact {} emitted {}", x, e);
        }
    }

    /// Duty stays a percentage and telemetry always packs.
    #[test]
    fn duty_stays_in_range(trace in command_trace(), stall in any::<bool>()) {
        let mut d = DriveUnit::new(DriveParams::default());
        d.set_stalled(stall, false);
        let mut k = 0u32;
        for (l, r, hold) in trace {
            for _ in 0..hold {
                let mut inbox = vec![vel(l, r, 0)];
                if k.is_multiple_of(10) {
                    inbox.push(heartbeat(k as u8));
                }
                k += 1;
                d.step(&inbox, DT);
                for m in d.motors {
                    prop_assert!((0.0..=100.0).contains(&m.duty), "duty {}", m.duty);
                }
                prop_assert!(pack_message(&d.telemetry()).is_ok());
            }
        }
    }

    #[test]
    fn load_duty_formula(rpm in -250.0f64..250.0, target in -250.0f64..250.0) {
        let p = DriveParams::default();
        let mut m = MotorState::at_ambient(&p);
        m.rpm = rpm;
        m.target_rpm = target;
        let want = (100.0 * (target - rpm).abs() / p.max_rpm + 20.0 * rpm.abs() / p.max_rpm)
            .clamp(0.0, 100.0);
        prop_assert!((compute_load_duty(&m, &p) - want).abs() < 1e-12);
    }
}

#[test]
fn silence_engages_brake_after_timeout() {
    let mut d = DriveUnit::new(DriveParams::default());
    d.step(&[vel(60.0, 60.0, 0), heartbeat(0)], DT);
    for _ in 0..10 {
        d.step(&[], DT);
        assert!(!d.left().brake_engaged);
    }
    d.step(&[], DT);
    assert!(d.left().brake_engaged);
    assert!(d.heartbeat_lost(DT));
}

#[test]
fn brake_flag_and_estop_force_zero_target() {
    let mut d = DriveUnit::new(DriveParams::default());
    d.step(&[vel(100.0, 100.0, VEL_FLAG_BRAKE), heartbeat(0)], DT);
    assert_eq!(d.left().target_rpm, 0.0);
    let estop = pack_message(&BusMessage::Estop { asserted: 1 }).unwrap();
    d.step(&[vel(100.0, 100.0, 0), heartbeat(1), estop], DT);
    assert!(d.estop_asserted());
    assert_eq!(d.right().target_rpm, 0.0);
}
