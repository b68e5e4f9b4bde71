use moby_core::protocol::*;
use proptest::prelude::*;

fn any_message() -> impl Strategy<Value = BusMessage> {
    prop_oneof![
        (any::<i16>(), any::<i16>(), any::<u8>()).prop_map(|(l, r, f)| BusMessage::VelCmd {
            left_rpm_d: l,
            right_rpm_d: r,
            flags: f
        }),
        (any::<i16>(), any::<i16>(), any::<u8>()).prop_map(|(l, r, s)| BusMessage::EncFeedback {
            left_delta: l,
            right_delta: r,
            seq: s
        }),
        (any::<i8>(), any::<i8>(), 0u8..=100, 0u8..=100, any::<u8>()).prop_map(
            |(tl, tr, dl, dr, f)| BusMessage::MotorTelem {
                temp_left_c: tl,
                temp_right_c: tr,
                duty_left: dl,
                duty_right: dr,
                fault_flags: f
            }
        ),
        any::<u8>().prop_map(|a| BusMessage::Estop { asserted: a }),
        (any::<u8>(), any::<u8>()).prop_map(|(s, c)| BusMessage::Heartbeat {
            source: s,
            counter: c
        }),
    ]
}

proptest! {
    #[test]
    fn message_round_trip(msg in any_message()) {
        let frame = pack_message(&msg).unwrap();
        let wire = serialize_frame(&frame);
        let back = deserialize_frame(&wire).unwrap();
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(unpack_message(&back).unwrap(), msg);
    }

    #[test]
    fn packing_is_injective(a in any_message(), b in any_message()) {
        let fa = pack_message(&a).unwrap();
        let fb = pack_message(&b).unwrap();
        prop_assert_eq!(a == b, fa == fb);
        prop_assert_eq!(a == b, serialize_frame(&fa) == serialize_frame(&fb));
    }

    /// Decoding never panics, and whatever decodes re-encodes to the same bytes.
    #[test]
    fn decoding_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..16)) {
        match deserialize_frame(&bytes) {
            Ok(frame) => {
                prop_assert_eq!(bytes.len(), WIRE_LEN);
                prop_assert_eq!(&serialize_frame(&frame)[..], &bytes[..]);
                if let Ok(msg) = unpack_message(&frame) {
                    prop_assert_eq!(pack_message(&msg).unwrap(), frame);
                }
            }
            Err(ProtocolError::Framing(n)) => prop_assert_eq!(n, bytes.len()),
            Err(_) => prop_assert_eq!(bytes.len(), WIRE_LEN),
        }
    }

    #[test]
    fn frame_log_round_trip(msgs in proptest::collection::vec(any_message(), 0..20)) {
        let frames: Vec<Frame> = msgs.iter().map(|m| pack_message(m).unwrap()).collect();
        let log = encode_frame_log(&frames);
        prop_assert_eq!(log.len(), frames.len() * WIRE_LEN);
        prop_assert_eq!(decode_frame_log(&log).unwrap(), frames);
    }

    #[test]
    fn rpm_wire_is_within_half_a_unit(rpm in -3276.0f64..3276.0) {
        let w = rpm_to_wire(rpm);
        prop_assert!((wire_to_rpm(w) - rpm).abs() <= 0.05 + 1e-9);
    }
}

#[test]
fn over_range_duty_is_rejected_both_ways() {
    let msg = BusMessage::MotorTelem {
        temp_left_c: 30,
        temp_right_c: 30,
        duty_left: 101,
        duty_right: 0,
        fault_flags: 0,
    };
    assert!(matches!(
        pack_message(&msg),
        Err(ProtocolError::FieldRange {
            field: "duty_left",
            value: 101
        })
    ));
    let raw = Frame::new(ID_MOTOR_TELEM, &[30, 30, 0, 200, 0]).unwrap();
    assert!(matches!(
        unpack_message(&raw),
        Err(ProtocolError::FieldRange {
            field: "duty_right",
            ..
        })
    ));
}

#[test]
fn wire_examples() {
    let f = pack_message(&BusMessage::VelCmd {
        left_rpm_d: 637,
        right_rpm_d: -637,
        flags: 0,
    })
    .unwrap();
    assert_eq!(
        serialize_frame(&f),
        [0x01, 0x01, 0x05, 0x02, 0x7D, 0xFD, 0x83, 0x00, 0, 0, 0]
    );
    assert!(matches!(
        deserialize_frame(&[0u8; 10]),
        Err(ProtocolError::Framing(10))
    ));
    assert!(matches!(
        unpack_message(&Frame::new(0x123, &[]).unwrap()),
        Err(ProtocolError::UnknownMessage(0x123))
    ));
    assert!(matches!(
        unpack_message(&Frame::new(ID_ESTOP, &[1, 2]).unwrap()),
        Err(ProtocolError::MalformedFrame {
            expected: 1,
            actual: 2,
            ..
        })
    ));
}
