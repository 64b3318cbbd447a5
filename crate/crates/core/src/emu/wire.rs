//! Message vocabulary between the network operating system and the emulated
//! devices, and the framing used to carry it.
//!
//! A frame is a big-endian `u32` byte count followed by one JSON document.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::agents::{CrossConnect, TrxTuning};
use super::{EmuError, SharedEmulator};
use crate::characterization::OtdrTrace;
use crate::control::MonitorPoint;
use crate::lpce::{ModulationFormat, TrxType};
use crate::topology::LineState;
use crate::twin::EdfaOperatingPoint;

pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    SetAmplifier {
        amplifier: String,
        setting: EdfaOperatingPoint,
    },
    SetLineState {
        state: LineState,
    },
    Tune {
        format: ModulationFormat,
        channel: usize,
    },
    Release,
    Connect {
        cross_connect: CrossConnect,
    },
    Disconnect {
        cross_connect: CrossConnect,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SetAmplifier { .. } => "set_amplifier",
            Command::SetLineState { .. } => "set_line_state",
            Command::Tune { .. } => "tune",
            Command::Release => "release",
            Command::Connect { .. } => "connect",
            Command::Disconnect { .. } => "disconnect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    OcmSpectrum { point: MonitorPoint },
    TotalPower { point: MonitorPoint },
    Ber,
    Otdr { span: usize },
    AmplifierSetting { amplifier: String },
    LineStatus,
    CrossConnects,
    TrxStatus,
}

impl Query {
    pub fn name(&self) -> &'static str {
        match self {
            Query::OcmSpectrum { .. } => "ocm_spectrum",
            Query::TotalPower { .. } => "total_power",
            Query::Ber => "ber",
            Query::Otdr { .. } => "otdr",
            Query::AmplifierSetting { .. } => "amplifier_setting",
            Query::LineStatus => "line_status",
            Query::CrossConnects => "cross_connects",
            Query::TrxStatus => "trx_status",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Discover,
    Configure {
        device: String,
        command: Command,
    },
    Poll {
        device: String,
        query: Query,
    },
    /// Lets emulated time pass; zero seconds reads the clock.
    Advance {
        seconds: f64,
    },
    TakeInterrupts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    OcmSpectrum,
    TotalPower,
    Ber,
    Otdr,
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStatus {
    pub state: LineState,
    /// No power reaches the pre-amplifier.
    pub loss_of_signal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxStatus {
    pub trx_type: TrxType,
    pub tuning: Option<TrxTuning>,
    pub loss_of_signal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "value_type", content = "value", rename_all = "snake_case")]
pub enum SampleValue {
    Spectrum(Vec<f64>),
    Scalar(f64),
    Otdr(OtdrTrace),
    Amplifier(EdfaOperatingPoint),
    Line(LineStatus),
    CrossConnects(Vec<CrossConnect>),
    Trx(TrxStatus),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub source: String,
    pub kind: SampleKind,
    pub value: SampleValue,
    /// Emulated time, seconds.
    pub timestamp: f64,
    /// Standard deviation of the additive noise applied, dB.
    pub noise_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrxInventory {
    pub id: String,
    pub trx_type: TrxType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInventory {
    pub id: String,
    pub trxs: Vec<TrxInventory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInventory {
    pub id: String,
    pub from: String,
    pub to: String,
    pub span_ids: Vec<String>,
    pub amplifiers: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub nodes: Vec<NodeInventory>,
    pub links: Vec<LinkInventory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interrupt {
    pub timestamp: f64,
    pub source: String,
    pub link: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Ack { timestamp: f64 },
    Inventory { inventory: Inventory },
    Sample { sample: TelemetrySample },
    Interrupts { interrupts: Vec<Interrupt> },
    Error { error: EmuError },
}

pub fn encode_frame<T: Serialize>(msg: &T) -> Result<Vec<u8>, EmuError> {
    let body = serde_json::to_vec(msg).map_err(|e| EmuError::Transport(e.to_string()))?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(EmuError::Transport(format!("frame of {} bytes too large", body.len())));
    }
    let mut frame = Vec::with_capacity(body.len() + 4);
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

pub fn decode_frame<T: DeserializeOwned>(frame: &[u8]) -> Result<T, EmuError> {
    let mut r = frame;
    let msg = read_frame(&mut r)?;
    if !r.is_empty() {
        return Err(EmuError::Transport(format!("{} trailing bytes after frame", r.len())));
    }
    Ok(msg)
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<(), EmuError> {
    let frame = encode_frame(msg)?;
    w.write_all(&frame).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_frame<R: Read, T: DeserializeOwned>(r: &mut R) -> Result<T, EmuError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(io_err)?;
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(EmuError::Transport(format!("frame of {n} bytes too large")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(io_err)?;
    serde_json::from_slice(&body).map_err(|e| EmuError::Transport(format!("malformed frame: {e}")))
}

fn io_err(e: std::io::Error) -> EmuError {
    EmuError::Transport(e.to_string())
}

/// Request/response channel to the emulated data plane.
pub trait Transport: Send {
    fn call(&mut self, request: &Request) -> Result<Response, EmuError>;
}

/// Same process, same framing: every message is encoded and decoded.
pub struct InProcessTransport {
    emulator: SharedEmulator,
}

impl InProcessTransport {
    pub fn new(emulator: SharedEmulator) -> Self {
        InProcessTransport { emulator }
    }
}

impl Transport for InProcessTransport {
    fn call(&mut self, request: &Request) -> Result<Response, EmuError> {
        let req: Request = decode_frame(&encode_frame(request)?)?;
        let resp = self
            .emulator
            .lock()
            .map_err(|_| EmuError::Transport("emulator poisoned".into()))?
            .handle(req);
        decode_frame(&encode_frame(&resp)?)
    }
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, EmuError> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        Ok(TcpTransport { stream })
    }
}

impl Transport for TcpTransport {
    fn call(&mut self, request: &Request) -> Result<Response, EmuError> {
        write_frame(&mut self.stream, request)?;
        read_frame(&mut self.stream)
    }
}

/// Loopback server exposing an emulator; stops when dropped.
pub struct TcpServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TcpServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve_tcp(emulator: SharedEmulator, addr: impl ToSocketAddrs) -> Result<TcpServer, EmuError> {
    let listener = TcpListener::bind(addr).map_err(io_err)?;
    let local = listener.local_addr().map_err(io_err)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let emu = emulator.clone();
            std::thread::spawn(move || serve_connection(stream, emu));
        }
    });
    Ok(TcpServer {
        addr: local,
        stop,
        handle: Some(handle),
    })
}

fn serve_connection(mut stream: TcpStream, emulator: SharedEmulator) {
    let _ = stream.set_nodelay(true);
    while let Ok(req) = read_frame::<_, Request>(&mut stream) {
        let resp = match emulator.lock() {
            Ok(mut emu) => emu.handle(req),
            Err(_) => Response::Error {
                error: EmuError::Transport("emulator poisoned".into()),
            },
        };
        if write_frame(&mut stream, &resp).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let req = Request::Poll {
            device: "Line1".into(),
            query: Query::OcmSpectrum {
                point: MonitorPoint::SpanOutput(3),
            },
        };
        let frame = encode_frame(&req).unwrap();
        assert_eq!(
            u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize,
            frame.len() - 4
        );
        assert_eq!(decode_frame::<Request>(&frame).unwrap(), req);
    }

    #[test]
    fn truncated_and_oversized_frames_fail() {
        let frame = encode_frame(&Request::Discover).unwrap();
        assert!(decode_frame::<Request>(&frame[..frame.len() - 1]).is_err());
        let mut huge = ((MAX_FRAME_BYTES + 1) as u32).to_be_bytes().to_vec();
        huge.extend_from_slice(b"{}");
        assert!(decode_frame::<Request>(&huge).is_err());
        let mut trailing = frame.clone();
        trailing.push(0);
        assert!(decode_frame::<Request>(&trailing).is_err());
    }

    #[test]
    fn unset_amplifier_fields_survive_the_wire() {
        let req = Request::Configure {
            device: "Line1".into(),
            command: Command::SetAmplifier {
                amplifier: "bst".into(),
                setting: EdfaOperatingPoint::constant_output_power(21.8, 0.0),
            },
        };
        assert_eq!(decode_frame::<Request>(&encode_frame(&req).unwrap()).unwrap(), req);
    }

    #[test]
    fn every_error_crosses_the_wire() {
        let errors = [
            EmuError::UnknownDevice("Z".into()),
            EmuError::Unreachable("A".into()),
            EmuError::Conflict {
                device: "A".into(),
                reason: "busy".into(),
            },
            EmuError::UnknownLink("L".into()),
            EmuError::AlreadyCut("L".into()),
            EmuError::Transport("eof".into()),
        ];
        for error in errors {
            let resp = Response::Error { error };
            assert_eq!(decode_frame::<Response>(&encode_frame(&resp).unwrap()).unwrap(), resp);
        }
    }
}
