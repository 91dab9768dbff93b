// SPDX-License-Identifier: Apache-2.0

//! Live session server for the cockpit.
//!
//! WebSocket with JSON text frames, SI units throughout. Server messages carry
//! `"v": 1`; a client message may omit `v`, but any version other than 1 is
//! rejected. Unknown fields are ignored.
//!
//! Client to server:
//!
//! ```text
//! {"type":"clicks","pixels":[[u,v],...]}
//! {"type":"vf","enabled":true}
//! {"type":"cmd","force":[fx,fy,fz],"wrist":[wx,wy,wz]}
//! {"type":"reset"}
//! {"type":"start"}
//! ```
//!
//! Server to client:
//!
//! ```text
//! {"type":"snapshot","t":..,"q":[..],"x":[x,y,z],"R":[9, row-major],"f_n":..,"contact":..,"phase":"idle"}
//! {"type":"path","points":[[x,y,z],..],"normals":[[..],..]}
//! {"type":"cloud_preview","width":W,"height":H,"depth_png_b64":".."}
//! {"type":"error","msg":".."}
//! ```
//!
//! The preview is a 16-bit grayscale PNG of camera depth in millimeters, 0
//! where the sensor has no return. It is sent on connect, followed by the
//! current path if one is defined.
//!
//! The phase runs idle → path_defined → running → done. Clicks are accepted
//! before start, start needs a path, and reset puts the arm back at the start
//! pose in path_defined (idle if no path). Steering and the fixture act only
//! while running; otherwise the arm holds under gravity compensation and the
//! gamepad impedance with a zero command. A client's steering command is
//! zeroed as soon as its connection drops.

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::prelude::*;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::geometry::DesiredPath;
use crate::operators::trial::Progress;
use crate::operators::{ClickSetup, ClosedLoop, EndCondition, GamepadCommand, OperatorInput, Task};
use crate::perception::{pixel_path_to_3d, synth_cloud, OrganizedPointCloud};

pub const PROTOCOL_VERSION: u64 = 1;
pub const SNAPSHOT_HZ: f64 = 30.0;
/// Socket poll period; bounds dead-man and snapshot forwarding latency.
const POLL: Duration = Duration::from_millis(5);
/// Most plant steps taken in one pass before the loop gives up catching up.
const MAX_CATCH_UP: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    PathDefined,
    Running,
    Done,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Clicks {
        pixels: Vec<[f64; 2]>,
    },
    Vf {
        enabled: bool,
    },
    Cmd {
        force: [f64; 3],
        #[serde(default)]
        wrist: [f64; 3],
    },
    Reset,
    Start,
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Protocol(format!("malformed JSON: {e}")))?;
        match value.get("v") {
            None => {}
            Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
            Some(v) => return Err(Error::Protocol(format!("unsupported protocol version {v}"))),
        }
        serde_json::from_value(value).map_err(|e| Error::Protocol(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub q: Vec<f64>,
    pub x: [f64; 3],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub f_n: f64,
    pub contact: bool,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Path { points: Vec<[f64; 3]>, normals: Vec<[f64; 3]> },
    CloudPreview { width: usize, height: usize, depth_png_b64: String },
    Error { msg: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("server messages serialize");
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("v".into(), PROTOCOL_VERSION.into());
        }
        value.to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn path(path: &DesiredPath) -> Self {
        let arr = |v: &Vector3<f64>| [v.x, v.y, v.z];
        ServerMessage::Path { points: path.points().iter().map(arr).collect(), normals: path.normals().iter().map(arr).collect() }
    }

    fn error(msg: impl Into<String>) -> Self {
        ServerMessage::Error { msg: msg.into() }
    }
}

/// 16-bit grayscale PNG of camera depth in millimeters; 0 marks no return.
pub fn depth_png(cloud: &OrganizedPointCloud) -> Result<Vec<u8>> {
    let png_err = |e: png::EncodingError| Error::invalid("depth preview", e.to_string());
    let data: Vec<u8> = cloud
        .depth()
        .iter()
        .flat_map(|d| {
            let mm = if d.is_finite() { (d * 1000.0).round().clamp(1.0, 65535.0) as u16 } else { 0 };
            mm.to_be_bytes()
        })
        .collect();
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, cloud.width() as u32, cloud.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(buf)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { speed: 1.0 }
    }
}

struct Session {
    phase: Phase,
    vf: bool,
    path: Option<DesiredPath>,
    path_version: u64,
    cmd: GamepadCommand,
    cmd_owner: Option<u64>,
    reset: bool,
    clients: BTreeMap<u64, Sender<String>>,
}

impl Session {
    fn idle_phase(&self) -> Phase {
        if self.path.is_some() {
            Phase::PathDefined
        } else {
            Phase::Idle
        }
    }

    fn broadcast(&mut self, msg: &str) {
        self.clients.retain(|_, tx| tx.send(msg.to_string()).is_ok());
    }
}

struct Shared {
    session: Mutex<Session>,
    stop: AtomicBool,
    view: ClickSetup,
    cloud: OrganizedPointCloud,
    preview: String,
    max_force: f64,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A running session: accept loop, client workers and the 1 kHz plant loop.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn start(addr: impl ToSocketAddrs, scenario: &Scenario, opts: ServeOptions) -> Result<Self> {
        if !(opts.speed > 0.0 && opts.speed.is_finite()) {
            return Err(Error::invalid("serve speed", "must be positive"));
        }
        let view = scenario.view.clone();
        let cloud = synth_cloud(&view.scene, &view.camera, view.depth_noise, scenario.seed)?;
        let preview = ServerMessage::CloudPreview {
            width: cloud.width(),
            height: cloud.height(),
            depth_png_b64: BASE64_STANDARD.encode(depth_png(&cloud)?),
        }
        .to_json();
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let task = scenario.task.clone();
        let lp = ClosedLoop::new(&task, task.ground_truth.clone(), false)?;
        let shared = Arc::new(Shared {
            session: Mutex::new(Session {
                phase: Phase::Idle,
                vf: false,
                path: None,
                path_version: 0,
                cmd: zero_command(),
                cmd_owner: None,
                reset: false,
                clients: BTreeMap::new(),
            }),
            stop: AtomicBool::new(false),
            view,
            cloud,
            preview,
            max_force: task.operator.max_force,
        });
        let sim = {
            let shared = shared.clone();
            thread::spawn(move || sim_loop(&shared, task, lp, opts))
        };
        let accept = {
            let shared = shared.clone();
            thread::spawn(move || accept_loop(&shared, listener))
        };
        Ok(Self { addr, shared, threads: vec![sim, accept] })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Steering command currently applied while running.
    pub fn command(&self) -> GamepadCommand {
        self.shared.lock().cmd
    }

    pub fn phase(&self) -> Phase {
        self.shared.lock().phase
    }

    pub fn clients(&self) -> usize {
        self.shared.lock().clients.len()
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {
        drop(self);
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Serves `scenario` on localhost until the process is stopped.
pub fn serve_blocking(port: u16, scenario: &Scenario) -> Result<()> {
    let server = Server::start(("127.0.0.1", port), scenario, ServeOptions::default())?;
    eprintln!("serving {} on ws://{}", scenario.name, server.local_addr());
    server.wait();
    Ok(())
}

fn zero_command() -> GamepadCommand {
    GamepadCommand { force: Vector3::zeros(), wrist: Vector3::zeros() }
}

fn accept_loop(shared: &Arc<Shared>, listener: TcpListener) {
    let mut workers = Vec::new();
    let mut next_id = 0u64;
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let id = next_id;
                next_id += 1;
                workers.push(thread::spawn(move || client_loop(&shared, id, stream)));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        workers.retain(|w: &JoinHandle<()>| !w.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
}

fn client_loop(shared: &Arc<Shared>, id: u64, stream: TcpStream) {
    let setup = stream.set_nonblocking(false).and_then(|_| stream.set_nodelay(true));
    if let Err(e) = setup {
        log::warn!("client {id}: {e}");
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("client {id}: handshake failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL)) {
        log::warn!("client {id}: {e}");
        return;
    }
    let (tx, rx) = channel();
    let path = {
        let mut s = shared.lock();
        s.clients.insert(id, tx);
        s.path.as_ref().map(|p| ServerMessage::path(p).to_json())
    };
    let mut greeting = vec![shared.preview.clone()];
    greeting.extend(path);
    if greeting.into_iter().all(|m| ws.send(Message::text(m)).is_ok()) {
        serve_client(shared, id, &mut ws, &rx);
    }
    let mut s = shared.lock();
    s.clients.remove(&id);
    if s.cmd_owner == Some(id) {
        s.cmd = zero_command();
        s.cmd_owner = None;
    }
}

fn serve_client(shared: &Shared, id: u64, ws: &mut WebSocket<TcpStream>, rx: &Receiver<String>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if let Some(reply) = handle(shared, id, text.as_str()) {
                    if ws.send(Message::text(reply.to_json())).is_err() {
                        return;
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                if ws.send(Message::text(ServerMessage::error("binary frames are not supported").to_json())).is_err() {
                    return;
                }
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
        while let Ok(m) = rx.try_recv() {
            if ws.send(Message::text(m)).is_err() {
                return;
            }
        }
    }
    let _ = ws.close(None);
}

/// Applies one client message; returns the reply for the sender, if any.
fn handle(shared: &Shared, id: u64, text: &str) -> Option<ServerMessage> {
    let msg = match ClientMessage::parse(text) {
        Ok(m) => m,
        Err(e) => return Some(ServerMessage::error(e.to_string())),
    };
    match msg {
        ClientMessage::Clicks { pixels } => {
            let phase = shared.lock().phase;
            if !matches!(phase, Phase::Idle | Phase::PathDefined) {
                return Some(ServerMessage::error(format!("clicks are accepted only before start (phase {phase:?})")));
            }
            let clicks: Vec<(f64, f64)> = pixels.iter().map(|p| (p[0], p[1])).collect();
            match pixel_path_to_3d(&clicks, &shared.cloud, &shared.view.camera, &shared.view.options) {
                Ok(out) => {
                    let msg = ServerMessage::path(&out.path).to_json();
                    let mut s = shared.lock();
                    if !matches!(s.phase, Phase::Idle | Phase::PathDefined) {
                        return Some(ServerMessage::error("session started while the path was being computed"));
                    }
                    s.path = Some(out.path);
                    s.path_version += 1;
                    s.phase = Phase::PathDefined;
                    s.broadcast(&msg);
                    None
                }
                Err(e) => Some(ServerMessage::error(e.to_string())),
            }
        }
        ClientMessage::Vf { enabled } => {
            shared.lock().vf = enabled;
            None
        }
        ClientMessage::Cmd { force, wrist } => {
            if !force.iter().chain(&wrist).all(|v| v.is_finite()) {
                return Some(ServerMessage::error("cmd values must be finite"));
            }
            let mut f = Vector3::from(force);
            if f.norm() > shared.max_force {
                f *= shared.max_force / f.norm();
            }
            let mut s = shared.lock();
            s.cmd = GamepadCommand { force: f, wrist: Vector3::from(wrist) };
            s.cmd_owner = Some(id);
            None
        }
        ClientMessage::Reset => {
            let mut s = shared.lock();
            s.reset = true;
            s.cmd = zero_command();
            s.cmd_owner = None;
            s.phase = s.idle_phase();
            None
        }
        ClientMessage::Start => {
            let mut s = shared.lock();
            if s.phase == Phase::PathDefined {
                s.phase = Phase::Running;
                None
            } else {
                Some(ServerMessage::error(format!("start needs a defined path (phase {:?})", s.phase)))
            }
        }
    }
}

fn sim_loop(shared: &Shared, task: Task, mut lp: ClosedLoop, opts: ServeOptions) {
    let dt = lp.sim.dt;
    let t0 = Instant::now();
    let snapshot_period = Duration::from_secs_f64(1.0 / SNAPSHOT_HZ);
    let mut last_snapshot: Option<Instant> = None;
    let mut steps_done = 0u64;
    let mut seen_path = 0u64;
    let mut progress = Progress::default();
    let mut touched = false;
    let mut contact = (0.0, false);

    while !shared.stop.load(Ordering::SeqCst) {
        let due = (t0.elapsed().as_secs_f64() * opts.speed / dt) as u64;
        let mut taken = 0;
        while steps_done < due && taken < MAX_CATCH_UP {
            let (phase, vf, cmd, reset, path) = {
                let mut s = shared.lock();
                let path = (s.path_version != seen_path).then(|| s.path.clone()).flatten();
                seen_path = s.path_version;
                (s.phase, s.vf, s.cmd, std::mem::take(&mut s.reset), path)
            };
            if reset {
                reset_loop(&mut lp, &task, &mut progress, &mut touched);
            }
            if let Some(p) = path {
                lp.vf_path = p;
                lp.ctl.reset();
            }
            let running = phase == Phase::Running;
            lp.ctl.vf_enabled = running && vf;
            let input = OperatorInput::Gamepad(if running { cmd } else { zero_command() });
            match lp.step(&input) {
                Ok(out) => {
                    contact = (out.sample.normal_force(), out.sample.in_contact());
                    if running && finished(&task.end, &lp, &out.sample.tool.position, &mut progress, &mut touched, contact.1) {
                        let mut s = shared.lock();
                        if s.phase == Phase::Running {
                            s.phase = Phase::Done;
                        }
                    }
                }
                Err(e) => {
                    let msg = ServerMessage::error(format!("{e}; arm reset to the start pose")).to_json();
                    reset_loop(&mut lp, &task, &mut progress, &mut touched);
                    let mut s = shared.lock();
                    s.cmd = zero_command();
                    s.cmd_owner = None;
                    s.phase = s.idle_phase();
                    s.broadcast(&msg);
                }
            }
            steps_done += 1;
            taken += 1;
        }
        // Drop any backlog rather than run faster than real time to recover it.
        steps_done = steps_done.max(due);

        if last_snapshot.is_none_or(|t| t.elapsed() >= snapshot_period) {
            last_snapshot = Some(Instant::now());
            let mut s = shared.lock();
            if let Some(msg) = snapshot(&lp, s.phase, contact) {
                s.broadcast(&msg.to_json());
            }
        }
        thread::sleep(Duration::from_micros(500));
    }
}

fn reset_loop(lp: &mut ClosedLoop, task: &Task, progress: &mut Progress, touched: &mut bool) {
    if let Err(e) = lp.reset(task.start_q.clone()) {
        log::error!("reset failed: {e}");
    }
    *progress = Progress::default();
    *touched = false;
}

fn finished(end: &EndCondition, lp: &ClosedLoop, x: &Vector3<f64>, progress: &mut Progress, touched: &mut bool, contact: bool) -> bool {
    *touched |= contact;
    match *end {
        EndCondition::PathEnd { tolerance } => {
            let s = progress.update(&lp.vf_path, x);
            *touched && s >= lp.vf_path.length() - tolerance
        }
        EndCondition::TurntableAngle { angle } => lp.turntable_travel().abs() >= angle,
    }
}

fn snapshot(lp: &ClosedLoop, phase: Phase, (f_n, contact): (f64, bool)) -> Option<ServerMessage> {
    let pose = crate::sim::forward_kinematics(&lp.model, &lp.state.q).ok()?;
    let m = pose.rotation.matrix();
    let mut r = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            r[3 * i + j] = m[(i, j)];
        }
    }
    Some(ServerMessage::Snapshot(Snapshot {
        t: lp.time(),
        q: lp.state.q.clone(),
        x: [pose.position.x, pose.position.y, pose.position.z],
        r,
        f_n,
        contact,
        phase,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        assert_eq!(ClientMessage::parse(r#"{"type":"start"}"#).unwrap(), ClientMessage::Start);
        assert_eq!(
            ClientMessage::parse(r#"{"v":1,"type":"vf","enabled":true,"extra":[1,2]}"#).unwrap(),
            ClientMessage::Vf { enabled: true }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"cmd","force":[1,0,0]}"#).unwrap(),
            ClientMessage::Cmd { force: [1.0, 0.0, 0.0], wrist: [0.0; 3] }
        );
        assert_eq!(ClientMessage::parse(r#"{"type":"reset","note":"x"}"#).unwrap(), ClientMessage::Reset);
        for bad in [r#"{"type":"start","v":2}"#, r#"{"type":"warp"}"#, "not json", r#"{"type":"vf"}"#] {
            assert!(matches!(ClientMessage::parse(bad), Err(Error::Protocol(_))), "{bad}");
        }
    }

    #[test]
    fn server_messages_carry_version_and_round_trip() {
        let msg = ServerMessage::Snapshot(Snapshot {
            t: 0.5,
            q: vec![0.1, 0.2],
            x: [0.5, 0.0, 0.01],
            r: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            f_n: 4.0,
            contact: true,
            phase: Phase::PathDefined,
        });
        let json = msg.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["v"], 1);
        assert_eq!(value["type"], "snapshot");
        assert_eq!(value["phase"], "path_defined");
        assert_eq!(value["R"].as_array().unwrap().len(), 9);
        assert_eq!(ServerMessage::from_json(&json).unwrap(), msg);
    }

    #[test]
    fn depth_png_round_trips_millimeters() {
        let pts = vec![Vector3::new(0.0, 0.0, 1.234), Vector3::new(0.0, 0.0, 0.5), Vector3::zeros()];
        let cloud = OrganizedPointCloud::new(3, 1, pts, vec![true, true, false]).unwrap();
        let bytes = depth_png(&cloud).unwrap();
        let mut reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height, info.bit_depth), (3, 1, png::BitDepth::Sixteen));
        let mm: Vec<u16> = buf.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(mm, vec![1234, 500, 0]);
    }
}
