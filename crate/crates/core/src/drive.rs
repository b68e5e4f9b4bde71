//! Simulated low-level motor controller.
//!
//! Each motor is a first-order speed plant with a lumped thermal model. The
//! firmware loop consumes bus frames, advances both motors by one control
//! period and reports encoder deltas, telemetry and its own heartbeat.

use thiserror::Error;

use crate::protocol::{
    pack_message, unpack_message, BusMessage, Frame, FAULT_OVERCURRENT, FAULT_OVERTEMP_LEFT,
    FAULT_OVERTEMP_RIGHT, SOURCE_DRIVE, SOURCE_SUPERVISOR, VEL_FLAG_BRAKE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotorFault {
    #[default]
    None,
    Overtemp,
    Overcurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    pub rpm: f64,
    pub target_rpm: f64,
    pub temp_c: f64,
    pub duty: f64,
    pub fault: MotorFault,
    pub brake_engaged: bool,
}

impl MotorState {
    pub fn at_ambient(params: &DriveParams) -> Self {
        Self {
            rpm: 0.0,
            target_rpm: 0.0,
            temp_c: params.t_ambient,
            duty: 0.0,
            fault: MotorFault::None,
            brake_engaged: false,
        }
    }

    pub fn faulted(&self) -> bool {
        self.fault != MotorFault::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    pub motor_power_w: f64,
    pub max_rpm: f64,
    pub tau_motor: f64,
    pub ticks_per_rev: u32,
    pub t_ambient: f64,
    pub t_derate: f64,
    pub t_fault: f64,
    /// Heating coefficient, degC/s per duty^2.
    pub k_heat: f64,
    /// Newtonian cooling rate, 1/s.
    pub k_cool: f64,
    pub heartbeat_timeout: f64,
    /// Continuous time the unclamped load may sit at or above 100 % before
    /// the overcurrent fault latches.
    pub overcurrent_time: f64,
    pub telemetry_period: f64,
    pub heartbeat_period: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            motor_power_w: 86.0,
            max_rpm: 250.0,
            tau_motor: 0.15,
            ticks_per_rev: 4096,
            t_ambient: 25.0,
            t_derate: 70.0,
            t_fault: 80.0,
            k_heat: 0.004,
            k_cool: 0.05,
            heartbeat_timeout: 0.1,
            overcurrent_time: 1.0,
            telemetry_period: 0.1,
            heartbeat_period: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriveError {
    #[error("back-driving rejected: brake engaged")]
    BrakeEngaged,
    #[error("back-driving rejected: motor is actively driven")]
    Powered,
}

/// Advances the speed plant by `dt`. A faulted or braked motor decays to
/// zero with a quarter of the normal time constant.
pub fn motor_dynamics(state: MotorState, dt: f64, params: &DriveParams) -> MotorState {
    let stopping = state.faulted() || state.brake_engaged;
    let (target, tau) = if stopping {
        (0.0, params.tau_motor / 4.0)
    } else {
        (state.target_rpm, params.tau_motor)
    };
    let alpha = 1.0 - (-dt / tau).exp();
    MotorState {
        rpm: state.rpm + (target - state.rpm) * alpha,
        target_rpm: if stopping { 0.0 } else { state.target_rpm },
        ..state
    }
}

/// Unclamped load: tracking error plus a speed-proportional friction term.
fn raw_load(state: &MotorState, params: &DriveParams) -> f64 {
    100.0 * (state.target_rpm - state.rpm).abs() / params.max_rpm
        + 100.0 * state.rpm.abs() / params.max_rpm * 0.2
}

pub fn compute_load_duty(state: &MotorState, params: &DriveParams) -> f64 {
    raw_load(state, params).clamp(0.0, 100.0)
}

/// One explicit-Euler step of the winding temperature model. Returns the new
/// temperature and whether the fault threshold was reached.
pub fn thermal_update(temp_c: f64, duty: f64, params: &DriveParams, dt: f64) -> (f64, bool) {
    let next =
        temp_c + dt * (params.k_heat * duty * duty - params.k_cool * (temp_c - params.t_ambient));
    (next, next >= params.t_fault)
}

/// Command scale applied above the derating temperature; 1.0 below it,
/// falling linearly to 0.0 at the fault threshold.
pub fn derate_factor(temp_c: f64, params: &DriveParams) -> f64 {
    if temp_c <= params.t_derate {
        1.0
    } else {
        ((params.t_fault - temp_c) / (params.t_fault - params.t_derate)).clamp(0.0, 1.0)
    }
}

/// Integrates an externally imposed shaft acceleration (robot being pushed).
pub fn backdrive(
    state: MotorState,
    external_rpm_rate: f64,
    dt: f64,
) -> Result<MotorState, DriveError> {
    if state.brake_engaged {
        return Err(DriveError::BrakeEngaged);
    }
    if state.target_rpm != 0.0 {
        return Err(DriveError::Powered);
    }
    Ok(MotorState {
        rpm: state.rpm + external_rpm_rate * dt,
        ..state
    })
}

/// Accumulates fractional encoder ticks so emitted deltas never drift.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct TickAccumulator {
    exact: f64,
    emitted: i64,
}

impl TickAccumulator {
    fn advance(&mut self, ticks: f64) -> i64 {
        self.exact += ticks;
        let whole = self.exact.floor() as i64;
        let delta = whole - self.emitted;
        self.emitted = whole;
        delta
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DriveCounters {
    pub frames_in: u64,
    pub dropped_frames: u64,
    pub enc_frames: u64,
    pub telem_frames: u64,
    pub heartbeat_frames: u64,
}

/// The firmware image: two motors plus the loop bookkeeping.
#[derive(Debug, Clone)]
pub struct DriveUnit {
    pub params: DriveParams,
    pub motors: [MotorState; 2],
    /// Wheel speeds requested over the bus, before derating.
    commanded_rpm: [f64; 2],
    cmd_brake: bool,
    estop: bool,
    ticks: u64,
    ticks_since_heartbeat: u64,
    enc: [TickAccumulator; 2],
    seq: u8,
    hb_counter: u8,
    overload_time: [f64; 2],
    external_rate: [f64; 2],
    stalled: [bool; 2],
    pub counters: DriveCounters,
    /// Rejected back-drive attempts.
    pub backdrive_rejections: u64,
}

impl DriveUnit {
    pub fn new(params: DriveParams) -> Self {
        Self {
            motors: [MotorState::at_ambient(&params); 2],
            params,
            commanded_rpm: [0.0; 2],
            cmd_brake: false,
            estop: false,
            ticks: 0,
            ticks_since_heartbeat: 0,
            enc: [TickAccumulator::default(); 2],
            seq: 0,
            hb_counter: 0,
            overload_time: [0.0; 2],
            external_rate: [0.0; 2],
            stalled: [false; 2],
            counters: DriveCounters::default(),
            backdrive_rejections: 0,
        }
    }

    pub fn left(&self) -> &MotorState {
        &self.motors[0]
    }

    pub fn right(&self) -> &MotorState {
        &self.motors[1]
    }

    pub fn wheel_rpm(&self) -> (f64, f64) {
        (self.motors[0].rpm, self.motors[1].rpm)
    }

    pub fn heartbeat_lost(&self, dt: f64) -> bool {
        self.ticks_since_heartbeat as f64 * dt > self.params.heartbeat_timeout + 1e-9
    }

    pub fn estop_asserted(&self) -> bool {
        self.estop
    }

    /// Clears latched faults (service action).
    pub fn reset_faults(&mut self) {
        for (m, t) in self.motors.iter_mut().zip(self.overload_time.iter_mut()) {
            m.fault = MotorFault::None;
            *t = 0.0;
        }
    }

    /// Sets the external shaft acceleration applied while the motors coast.
    pub fn push(&mut self, left_rate: f64, right_rate: f64) {
        self.external_rate = [left_rate, right_rate];
    }

    /// Locks a wheel mechanically (blocked by an obstacle or jammed gear).
    pub fn set_stalled(&mut self, left: bool, right: bool) {
        self.stalled = [left, right];
    }

    /// Total wheel rotation represented by emitted encoder ticks.
    pub fn emitted_ticks(&self) -> (i64, i64) {
        (self.enc[0].emitted, self.enc[1].emitted)
    }

    fn consume(&mut self, inbox: &[Frame]) {
        for frame in inbox {
            self.counters.frames_in += 1;
            match unpack_message(frame) {
                Ok(BusMessage::VelCmd {
                    left_rpm_d,
                    right_rpm_d,
                    flags,
                }) => {
                    self.commanded_rpm = [left_rpm_d as f64 / 10.0, right_rpm_d as f64 / 10.0];
                    self.cmd_brake = flags & VEL_FLAG_BRAKE != 0;
                }
                Ok(BusMessage::Estop { asserted }) => self.estop = asserted == 0x01,
                Ok(BusMessage::Heartbeat {
                    source: SOURCE_SUPERVISOR,
                    ..
                }) => self.ticks_since_heartbeat = 0,
                // Traffic for other nodes.
                Ok(_) => {}
                Err(_) => self.counters.dropped_frames += 1,
            }
        }
    }

    /// One firmware control period.
    pub fn step(&mut self, inbox: &[Frame], dt: f64) -> Vec<Frame> {
        self.consume(inbox);
        let brake = self.estop || self.cmd_brake || self.heartbeat_lost(dt);

        let params = self.params;
        let mut wheel_ticks = [0.0; 2];
        for i in 0..2 {
            let mut m = self.motors[i];
            m.brake_engaged = brake;
            let inhibited = brake || m.faulted();
            m.target_rpm = if inhibited {
                0.0
            } else {
                (self.commanded_rpm[i] * derate_factor(m.temp_c, &params))
                    .clamp(-params.max_rpm, params.max_rpm)
            };

            m = if self.stalled[i] {
                MotorState { rpm: 0.0, ..m }
            } else if self.external_rate[i] != 0.0 && m.target_rpm == 0.0 {
                match backdrive(m, self.external_rate[i], dt) {
                    Ok(next) => next,
                    Err(_) => {
                        self.backdrive_rejections += 1;
                        motor_dynamics(m, dt, &params)
                    }
                }
            } else {
                motor_dynamics(m, dt, &params)
            };

            let load = raw_load(&m, &params);
            if load >= 100.0 {
                self.overload_time[i] += dt;
            } else {
                self.overload_time[i] = 0.0;
            }
            m.duty = load.clamp(0.0, 100.0);
            let (temp, over) = thermal_update(m.temp_c, m.duty, &params, dt);
            m.temp_c = temp;
            if m.fault == MotorFault::None {
                if over {
                    m.fault = MotorFault::Overtemp;
                } else if self.overload_time[i] >= params.overcurrent_time - 1e-9 {
                    m.fault = MotorFault::Overcurrent;
                }
            }
            if m.faulted() {
                m.target_rpm = 0.0;
            }
            wheel_ticks[i] = m.rpm / 60.0 * dt * params.ticks_per_rev as f64;
            self.motors[i] = m;
        }

        let mut out = Vec::with_capacity(3);
        let dl = self.enc[0].advance(wheel_ticks[0]);
        let dr = self.enc[1].advance(wheel_ticks[1]);
        out.push(self.pack(BusMessage::EncFeedback {
            left_delta: dl.clamp(i16::MIN as i64, i16::MAX as i64) as i16,
            right_delta: dr.clamp(i16::MIN as i64, i16::MAX as i64) as i16,
            seq: self.seq,
        }));
        self.seq = self.seq.wrapping_add(1);
        self.counters.enc_frames += 1;

        if self
            .ticks
            .is_multiple_of(period_ticks(params.telemetry_period, dt))
        {
            out.push(self.pack(self.telemetry()));
            self.counters.telem_frames += 1;
        }
        if self
            .ticks
            .is_multiple_of(period_ticks(params.heartbeat_period, dt))
        {
            out.push(self.pack(BusMessage::Heartbeat {
                source: SOURCE_DRIVE,
                counter: self.hb_counter,
            }));
            self.hb_counter = self.hb_counter.wrapping_add(1);
            self.counters.heartbeat_frames += 1;
        }

        self.ticks += 1;
        self.ticks_since_heartbeat += 1;
        out
    }

    pub fn telemetry(&self) -> BusMessage {
        let [l, r] = &self.motors;
        let mut flags = 0;
        if l.fault == MotorFault::Overtemp {
            flags |= FAULT_OVERTEMP_LEFT;
        }
        if r.fault == MotorFault::Overtemp {
            flags |= FAULT_OVERTEMP_RIGHT;
        }
        if l.fault == MotorFault::Overcurrent || r.fault == MotorFault::Overcurrent {
            flags |= FAULT_OVERCURRENT;
        }
        let temp = |t: f64| t.round().clamp(i8::MIN as f64, i8::MAX as f64) as i8;
        BusMessage::MotorTelem {
            temp_left_c: temp(l.temp_c),
            temp_right_c: temp(r.temp_c),
            duty_left: l.duty.round() as u8,
            duty_right: r.duty.round() as u8,
            fault_flags: flags,
        }
    }

    fn pack(&self, msg: BusMessage) -> Frame {
        pack_message(&msg).expect("drive-generated messages are always in range")
    }
}

pub(crate) fn period_ticks(period: f64, dt: f64) -> u64 {
    ((period / dt).round() as u64).max(1)
}
