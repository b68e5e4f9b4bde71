//! Supervisor <-> drive-unit message framing.
//!
//! Frames follow the classic CAN data-frame model: an 11-bit identifier and
//! up to eight payload bytes. On the simulated transport each frame travels
//! as exactly [`WIRE_LEN`] bytes:
//!
//! ```text
//! [id_hi][id_lo][dlc][d0][d1][d2][d3][d4][d5][d6][d7]
//! ```
//!
//! Multi-byte payload fields are big-endian. Lower identifiers win bus
//! arbitration, so the E-stop uses the lowest id.

use std::fmt;

use thiserror::Error;

/// Largest standard (11-bit) identifier.
pub const MAX_ID: u16 = 0x7FF;
/// Maximum classic CAN payload length.
pub const MAX_DLC: u8 = 8;
/// Serialized frame size on the simulated wire.
pub const WIRE_LEN: usize = 11;

pub const ID_ESTOP: u16 = 0x001;
pub const ID_VEL_CMD: u16 = 0x101;
pub const ID_ENC_FEEDBACK: u16 = 0x201;
pub const ID_MOTOR_TELEM: u16 = 0x301;
pub const ID_HEARTBEAT: u16 = 0x701;

/// `VelCmd.flags` bit 0: engage the rheostatic brake.
pub const VEL_FLAG_BRAKE: u8 = 0x01;

pub const FAULT_OVERTEMP_LEFT: u8 = 0x01;
pub const FAULT_OVERTEMP_RIGHT: u8 = 0x02;
pub const FAULT_OVERCURRENT: u8 = 0x04;

pub const SOURCE_SUPERVISOR: u8 = 0x01;
pub const SOURCE_DRIVE: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("field `{field}` out of range: {value}")]
    FieldRange { field: &'static str, value: i64 },
    #[error("unknown message id {0:#05x}")]
    UnknownMessage(u16),
    #[error("malformed frame for id {id:#05x}: expected dlc {expected}, got {actual}")]
    MalformedFrame { id: u16, expected: u8, actual: u8 },
    #[error("framing error: expected {WIRE_LEN} bytes, got {0}")]
    Framing(usize),
    #[error("frame id {0:#x} exceeds 11 bits")]
    IdRange(u16),
    #[error("dlc {0} exceeds {MAX_DLC}")]
    DlcRange(u8),
    #[error("payload byte {index} beyond dlc is nonzero")]
    TrailingData { index: usize },
}

/// A classic CAN data frame. Construction enforces the id/dlc invariants and
/// that bytes past `dlc` are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    id: u16,
    dlc: u8,
    data: [u8; 8],
}

impl Frame {
    pub fn new(id: u16, payload: &[u8]) -> Result<Self, ProtocolError> {
        if id > MAX_ID {
            return Err(ProtocolError::IdRange(id));
        }
        if payload.len() > MAX_DLC as usize {
            return Err(ProtocolError::DlcRange(payload.len().min(255) as u8));
        }
        let mut data = [0u8; 8];
        data[..payload.len()].copy_from_slice(payload);
        Ok(Self {
            id,
            dlc: payload.len() as u8,
            data,
        })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn dlc(&self) -> u8 {
        self.dlc
    }

    /// The full 8-byte buffer; bytes past `dlc` are zero.
    pub fn data(&self) -> &[u8; 8] {
        &self.data
    }

    pub fn payload(&self) -> &[u8] {
        &self.data[..self.dlc as usize]
    }

    pub fn to_bytes(&self) -> [u8; WIRE_LEN] {
        let mut out = [0u8; WIRE_LEN];
        out[..2].copy_from_slice(&self.id.to_be_bytes());
        out[2] = self.dlc;
        out[3..].copy_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() != WIRE_LEN {
            return Err(ProtocolError::Framing(bytes.len()));
        }
        let id = u16::from_be_bytes([bytes[0], bytes[1]]);
        if id > MAX_ID {
            return Err(ProtocolError::IdRange(id));
        }
        let dlc = bytes[2];
        if dlc > MAX_DLC {
            return Err(ProtocolError::DlcRange(dlc));
        }
        let mut data = [0u8; 8];
        data.copy_from_slice(&bytes[3..]);
        if let Some(index) = data[dlc as usize..].iter().position(|&b| b != 0) {
            return Err(ProtocolError::TrailingData {
                index: dlc as usize + index,
            });
        }
        Ok(Self { id, dlc, data })
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame{{{:#05x}, {}, [", self.id, self.dlc)?;
        for (i, b) in self.payload().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{b:02X}")?;
        }
        f.write_str("]}")
    }
}

pub fn serialize_frame(frame: &Frame) -> [u8; WIRE_LEN] {
    frame.to_bytes()
}

pub fn deserialize_frame(bytes: &[u8]) -> Result<Frame, ProtocolError> {
    Frame::from_bytes(bytes)
}

/// Splits a frame log (concatenated 11-byte frames) into frames.
pub fn decode_frame_log(bytes: &[u8]) -> Result<Vec<Frame>, ProtocolError> {
    if !bytes.len().is_multiple_of(WIRE_LEN) {
        return Err(ProtocolError::Framing(bytes.len() % WIRE_LEN));
    }
    bytes
        .chunks_exact(WIRE_LEN)
        .map(Frame::from_bytes)
        .collect()
}

pub fn encode_frame_log(frames: &[Frame]) -> Vec<u8> {
    frames.iter().flat_map(|f| f.to_bytes()).collect()
}

/// Typed traffic carried on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusMessage {
    /// Wheel speed command in 0.1 RPM units.
    VelCmd {
        left_rpm_d: i16,
        right_rpm_d: i16,
        flags: u8,
    },
    /// Encoder ticks accumulated since the previous feedback message.
    EncFeedback {
        left_delta: i16,
        right_delta: i16,
        seq: u8,
    },
    MotorTelem {
        temp_left_c: i8,
        temp_right_c: i8,
        duty_left: u8,
        duty_right: u8,
        fault_flags: u8,
    },
    Estop {
        asserted: u8,
    },
    Heartbeat {
        source: u8,
        counter: u8,
    },
}

impl BusMessage {
    pub fn id(&self) -> u16 {
        match self {
            BusMessage::VelCmd { .. } => ID_VEL_CMD,
            BusMessage::EncFeedback { .. } => ID_ENC_FEEDBACK,
            BusMessage::MotorTelem { .. } => ID_MOTOR_TELEM,
            BusMessage::Estop { .. } => ID_ESTOP,
            BusMessage::Heartbeat { .. } => ID_HEARTBEAT,
        }
    }
}

fn expected_dlc(id: u16) -> Option<u8> {
    match id {
        ID_VEL_CMD | ID_ENC_FEEDBACK | ID_MOTOR_TELEM => Some(5),
        ID_ESTOP => Some(1),
        ID_HEARTBEAT => Some(2),
        _ => None,
    }
}

fn check_duty(field: &'static str, value: u8) -> Result<(), ProtocolError> {
    if value > 100 {
        Err(ProtocolError::FieldRange {
            field,
            value: value as i64,
        })
    } else {
        Ok(())
    }
}

pub fn pack_message(msg: &BusMessage) -> Result<Frame, ProtocolError> {
    let mut buf = [0u8; 8];
    let len = match *msg {
        BusMessage::VelCmd {
            left_rpm_d,
            right_rpm_d,
            flags,
        } => {
            buf[0..2].copy_from_slice(&left_rpm_d.to_be_bytes());
            buf[2..4].copy_from_slice(&right_rpm_d.to_be_bytes());
            buf[4] = flags;
            5
        }
        BusMessage::EncFeedback {
            left_delta,
            right_delta,
            seq,
        } => {
            buf[0..2].copy_from_slice(&left_delta.to_be_bytes());
            buf[2..4].copy_from_slice(&right_delta.to_be_bytes());
            buf[4] = seq;
            5
        }
        BusMessage::MotorTelem {
            temp_left_c,
            temp_right_c,
            duty_left,
            duty_right,
            fault_flags,
        } => {
            check_duty("duty_left", duty_left)?;
            check_duty("duty_right", duty_right)?;
            buf[0] = temp_left_c as u8;
            buf[1] = temp_right_c as u8;
            buf[2] = duty_left;
            buf[3] = duty_right;
            buf[4] = fault_flags;
            5
        }
        BusMessage::Estop { asserted } => {
            buf[0] = asserted;
            1
        }
        BusMessage::Heartbeat { source, counter } => {
            buf[0] = source;
            buf[1] = counter;
            2
        }
    };
    Frame::new(msg.id(), &buf[..len])
}

pub fn unpack_message(frame: &Frame) -> Result<BusMessage, ProtocolError> {
    let id = frame.id();
    let expected = expected_dlc(id).ok_or(ProtocolError::UnknownMessage(id))?;
    if frame.dlc() != expected {
        return Err(ProtocolError::MalformedFrame {
            id,
            expected,
            actual: frame.dlc(),
        });
    }
    let d = frame.data();
    let be16 = |i: usize| i16::from_be_bytes([d[i], d[i + 1]]);
    let msg = match id {
        ID_VEL_CMD => BusMessage::VelCmd {
            left_rpm_d: be16(0),
            right_rpm_d: be16(2),
            flags: d[4],
        },
        ID_ENC_FEEDBACK => BusMessage::EncFeedback {
            left_delta: be16(0),
            right_delta: be16(2),
            seq: d[4],
        },
        ID_MOTOR_TELEM => {
            check_duty("duty_left", d[2])?;
            check_duty("duty_right", d[3])?;
            BusMessage::MotorTelem {
                temp_left_c: d[0] as i8,
                temp_right_c: d[1] as i8,
                duty_left: d[2],
                duty_right: d[3],
                fault_flags: d[4],
            }
        }
        ID_ESTOP => BusMessage::Estop { asserted: d[0] },
        ID_HEARTBEAT => BusMessage::Heartbeat {
            source: d[0],
            counter: d[1],
        },
        _ => unreachable!("id registry checked above"),
    };
    Ok(msg)
}

/// Converts an RPM value to the 0.1 RPM wire unit, saturating at the i16 range.
pub fn rpm_to_wire(rpm: f64) -> i16 {
    let scaled = (rpm * 10.0).round();
    if scaled.is_nan() {
        0
    } else {
        scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }
}

pub fn wire_to_rpm(deci_rpm: i16) -> f64 {
    deci_rpm as f64 / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vel_cmd_layout() {
        let f = pack_message(&BusMessage::VelCmd {
            left_rpm_d: 637,
            right_rpm_d: 637,
            flags: 0,
        })
        .unwrap();
        assert_eq!(f.id(), 0x101);
        assert_eq!(f.dlc(), 5);
        assert_eq!(f.data(), &[0x02, 0x7D, 0x02, 0x7D, 0x00, 0, 0, 0]);
        assert_eq!(
            serialize_frame(&f),
            [0x01, 0x01, 0x05, 0x02, 0x7D, 0x02, 0x7D, 0x00, 0x00, 0x00, 0x00]
        );
    }

    #[test]
    fn estop_layout() {
        let f = pack_message(&BusMessage::Estop { asserted: 1 }).unwrap();
        assert_eq!((f.id(), f.dlc()), (0x001, 1));
        assert_eq!(f.data(), &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(
            serialize_frame(&f),
            [0x00, 0x01, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn motor_telem_layout() {
        let f = pack_message(&BusMessage::MotorTelem {
            temp_left_c: 25,
            temp_right_c: 25,
            duty_left: 100,
            duty_right: 100,
            fault_flags: 0,
        })
        .unwrap();
        assert_eq!((f.id(), f.dlc()), (0x301, 5));
        assert_eq!(f.payload(), &[0x19, 0x19, 0x64, 0x64, 0x00]);
    }

    #[test]
    fn duty_out_of_range_names_field() {
        let err = pack_message(&BusMessage::MotorTelem {
            temp_left_c: 25,
            temp_right_c: 25,
            duty_left: 40,
            duty_right: 101,
            fault_flags: 0,
        })
        .unwrap_err();
        assert_eq!(
            err,
            ProtocolError::FieldRange {
                field: "duty_right",
                value: 101
            }
        );
    }

    #[test]
    fn unpack_errors() {
        let unknown = Frame::new(0x999 & MAX_ID, &[0; 5]).unwrap();
        assert!(matches!(
            unpack_message(&unknown),
            Err(ProtocolError::UnknownMessage(0x199))
        ));
        assert_eq!(Frame::new(0x999, &[]), Err(ProtocolError::IdRange(0x999)));
        let short = Frame::new(0x201, &[1, 2, 3]).unwrap();
        assert!(matches!(
            unpack_message(&short),
            Err(ProtocolError::MalformedFrame {
                id: 0x201,
                expected: 5,
                actual: 3
            })
        ));
    }

    #[test]
    fn unpack_vel_cmd() {
        let f = Frame::new(0x101, &[0x02, 0x7D, 0x02, 0x7D, 0x00]).unwrap();
        assert_eq!(
            unpack_message(&f).unwrap(),
            BusMessage::VelCmd {
                left_rpm_d: 637,
                right_rpm_d: 637,
                flags: 0
            }
        );
    }

    #[test]
    fn deserialize_errors() {
        assert_eq!(deserialize_frame(&[0; 10]), Err(ProtocolError::Framing(10)));
        let mut b = [0u8; WIRE_LEN];
        b[2] = 9;
        assert_eq!(deserialize_frame(&b), Err(ProtocolError::DlcRange(9)));
        b[2] = 0;
        b[0] = 0x08;
        assert_eq!(deserialize_frame(&b), Err(ProtocolError::IdRange(0x800)));
        let mut t = [0u8; WIRE_LEN];
        t[2] = 1;
        t[5] = 0xAA;
        assert_eq!(
            deserialize_frame(&t),
            Err(ProtocolError::TrailingData { index: 2 })
        );
    }

    #[test]
    fn frame_log_round_trip() {
        let frames = vec![
            pack_message(&BusMessage::Estop { asserted: 1 }).unwrap(),
            pack_message(&BusMessage::Heartbeat {
                source: SOURCE_DRIVE,
                counter: 7,
            })
            .unwrap(),
        ];
        let log = encode_frame_log(&frames);
        assert_eq!(log.len(), 22);
        assert_eq!(decode_frame_log(&log).unwrap(), frames);
        assert!(decode_frame_log(&log[..21]).is_err());
    }

    #[test]
    fn rpm_wire_saturates() {
        assert_eq!(rpm_to_wire(63.66), 637);
        assert_eq!(rpm_to_wire(-28.65), -287);
        assert_eq!(rpm_to_wire(1e9), i16::MAX);
        assert_eq!(rpm_to_wire(f64::NAN), 0);
    }
}
