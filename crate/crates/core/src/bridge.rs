//! Newline-delimited JSON bridge between the running system and external
//! clients such as an operator console.
//!
//! Client lines are parsed on connection threads and queued; the simulation
//! thread applies the queue only at tick boundaries and broadcasts an
//! immutable telemetry snapshot every tenth tick.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::supervisor::DriveMode;
use crate::system::{Command, System, NAV_DIVIDER, TICK_DT};

/// Number of scan ranges carried in each telemetry message.
pub const TELEMETRY_BEAMS: usize = 90;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Joystick { x: f64, y: f64 },
    FunctionKey { k: u8 },
    Estop,
    EstopReset,
    SetMode { mode: DriveMode },
    StartRoutine { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistMsg {
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMsg {
    pub name: String,
    pub t_start: f64,
    pub t_end: Option<f64>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub t: f64,
    pub tick: u64,
    pub pose: PoseMsg,
    pub twist: TwistMsg,
    pub mode: String,
    pub speed_level: u8,
    pub battery_v: f64,
    pub scan: Vec<f64>,
    pub phases: Vec<PhaseMsg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Telemetry(Telemetry),
    Error { reason: String },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages always serialize");
        s.push('\n');
        s
    }
}

/// Parses one client line into a system command. `routines` lists the
/// accepted routine names.
pub fn parse_client_line(line: &str, routines: &BTreeSet<String>) -> Result<Command, String> {
    let msg: ClientMessage =
        serde_json::from_str(line.trim()).map_err(|e| format!("malformed message: {e}"))?;
    Ok(match msg {
        ClientMessage::Joystick { x, y } => {
            if !(x.is_finite() && y.is_finite()) {
                return Err("joystick axes must be finite".into());
            }
            Command::Joystick { x, y }
        }
        ClientMessage::FunctionKey { k } => {
            if !(1..=3).contains(&k) {
                return Err(format!("no function key {k}"));
            }
            Command::FunctionKey(k)
        }
        ClientMessage::Estop => Command::Estop,
        ClientMessage::EstopReset => Command::EstopReset,
        ClientMessage::SetMode { mode } => Command::SetMode(mode),
        ClientMessage::StartRoutine { name } => {
            if !routines.contains(&name) {
                return Err(format!("unknown routine {name:?}"));
            }
            Command::StartRoutine(name)
        }
    })
}

/// Snapshot of the system for clients.
pub fn telemetry(sys: &System) -> Telemetry {
    let pose = sys.world.pose;
    let twist = sys.measured_twist();
    Telemetry {
        t: sys.time(),
        tick: sys.tick(),
        pose: PoseMsg {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
        },
        twist: TwistMsg {
            v: twist.v,
            w: twist.w,
        },
        mode: sys.mode().label().to_string(),
        speed_level: sys.supervisor.speed_level,
        battery_v: sys.supervisor.battery_v,
        scan: sys
            .last_scan()
            .map(|s| s.downsample(TELEMETRY_BEAMS))
            .unwrap_or_default(),
        phases: sys
            .navigator
            .records()
            .iter()
            .map(|r| PhaseMsg {
                name: format!("to_{}", r.label.to_ascii_lowercase()),
                t_start: r.tick_start as f64 * TICK_DT,
                t_end: r.tick_arrive.map(|k| k as f64 * TICK_DT),
                aborted: r.aborted.clone(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeOptions {
    /// Simulated seconds per wall-clock second; zero runs unpaced.
    pub time_scale: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self { time_scale: 1.0 }
    }
}

type Clients = Arc<Mutex<Vec<(u64, TcpStream)>>>;

/// A running bridge. Dropping it stops the service.
pub struct BridgeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    system: Arc<Mutex<Option<System>>>,
    ticks: Arc<AtomicU64>,
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ticks(&self) -> u64 {
        self.ticks.load(Ordering::Relaxed)
    }

    /// Stops all threads and hands back the system.
    pub fn shutdown(mut self) -> System {
        self.stop_threads();
        self.system
            .lock()
            .expect("system lock")
            .take()
            .expect("system present until shutdown")
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

/// Starts serving `system` on `addr` and returns immediately.
pub fn serve_bridge(
    system: System,
    addr: impl ToSocketAddrs,
    opts: BridgeOptions,
) -> io::Result<BridgeHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let inbox: Arc<Mutex<VecDeque<Command>>> = Arc::default();
    let clients: Clients = Arc::default();
    let routines: Arc<BTreeSet<String>> =
        Arc::new(system.routine_names().map(String::from).collect());
    let system = Arc::new(Mutex::new(Some(system)));
    let ticks = Arc::new(AtomicU64::new(0));

    let accept = {
        let (stop, inbox, clients) = (stop.clone(), inbox.clone(), clients.clone());
        thread::spawn(move || accept_loop(listener, stop, inbox, clients, routines))
    };
    let sim = {
        let (stop, system, ticks) = (stop.clone(), system.clone(), ticks.clone());
        thread::spawn(move || sim_loop(system, inbox, clients, stop, ticks, opts))
    };
    Ok(BridgeHandle {
        addr: local,
        stop,
        threads: vec![accept, sim],
        system,
        ticks,
    })
}

fn accept_loop(
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    inbox: Arc<Mutex<VecDeque<Command>>>,
    clients: Clients,
    routines: Arc<BTreeSet<String>>,
) {
    let mut next_id = 0u64;
    let mut readers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let id = next_id;
                next_id += 1;
                let Ok(writer) = stream.try_clone() else {
                    continue;
                };
                // A client that stops reading is dropped rather than stalling the loop.
                let _ = writer.set_write_timeout(Some(Duration::from_millis(200)));
                clients.lock().expect("clients lock").push((id, writer));
                let (stop, inbox, clients, routines) = (
                    stop.clone(),
                    inbox.clone(),
                    clients.clone(),
                    routines.clone(),
                );
                readers.push(thread::spawn(move || {
                    client_loop(id, stream, stop, inbox, clients.clone(), routines);
                    clients
                        .lock()
                        .expect("clients lock")
                        .retain(|(c, _)| *c != id);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5))
            }
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    for (_, s) in clients.lock().expect("clients lock").iter() {
        let _ = s.shutdown(std::net::Shutdown::Both);
    }
    for r in readers {
        let _ = r.join();
    }
}

fn client_loop(
    id: u64,
    stream: TcpStream,
    stop: Arc<AtomicBool>,
    inbox: Arc<Mutex<VecDeque<Command>>>,
    clients: Clients,
    routines: Arc<BTreeSet<String>>,
) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    while !stop.load(Ordering::SeqCst) {
        match reader.read_line(&mut line) {
            Ok(0) => return,
            Ok(_) => {
                if !line.ends_with('\n') {
                    // Partial line before a timeout; keep reading.
                    continue;
                }
                if !line.trim().is_empty() {
                    match parse_client_line(&line, &routines) {
                        Ok(cmd) => inbox.lock().expect("inbox lock").push_back(cmd),
                        Err(reason) => {
                            let reply = ServerMessage::Error { reason }.to_line();
                            let mut cs = clients.lock().expect("clients lock");
                            if let Some((_, w)) = cs.iter_mut().find(|(c, _)| *c == id) {
                                let _ = w.write_all(reply.as_bytes());
                            }
                        }
                    }
                }
                line.clear();
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(_) => return,
        }
    }
}

fn sim_loop(
    system: Arc<Mutex<Option<System>>>,
    inbox: Arc<Mutex<VecDeque<Command>>>,
    clients: Clients,
    stop: Arc<AtomicBool>,
    ticks: Arc<AtomicU64>,
    opts: BridgeOptions,
) {
    let started = Instant::now();
    let mut done: u64 = 0;
    while !stop.load(Ordering::SeqCst) {
        let snapshot = {
            let mut guard = system.lock().expect("system lock");
            let sys = guard.as_mut().expect("system present");
            // Tick boundary: everything received so far goes in now.
            for cmd in inbox.lock().expect("inbox lock").drain(..) {
                sys.enqueue(cmd);
            }
            sys.step();
            done += 1;
            ticks.store(done, Ordering::Relaxed);
            sys.tick()
                .is_multiple_of(NAV_DIVIDER)
                .then(|| telemetry(sys))
        };
        if let Some(t) = snapshot {
            let line = ServerMessage::Telemetry(t).to_line();
            let mut cs = clients.lock().expect("clients lock");
            cs.retain_mut(|(_, w)| w.write_all(line.as_bytes()).is_ok());
        }
        if opts.time_scale > 0.0 {
            let due = Duration::from_secs_f64(done as f64 * TICK_DT / opts.time_scale);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                thread::sleep(wait);
            }
        }
    }
}
