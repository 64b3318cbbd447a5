//! Controller-side client of the network operating system.

use crate::characterization::OtdrTrace;
use crate::control::{MonitorPoint, OlcError, OlcHandle};
use crate::emu::{
    Command, EmuError, EventLog, Interrupt, Inventory, Query, Request, Response, SampleValue, TelemetrySample,
    Transport,
};
use crate::topology::LineState;
use crate::twin::EdfaOperatingPoint;

pub struct NosClient {
    transport: Box<dyn Transport>,
    log: EventLog,
}

fn unexpected(what: &str, resp: &Response) -> EmuError {
    EmuError::Transport(format!("unexpected reply to {what}: {resp:?}"))
}

impl NosClient {
    pub fn new(transport: Box<dyn Transport>, log: EventLog) -> Self {
        NosClient { transport, log }
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    fn call(&mut self, req: &Request) -> Result<Response, EmuError> {
        match self.transport.call(req)? {
            Response::Error { error } => Err(error),
            other => Ok(other),
        }
    }

    pub fn discover(&mut self) -> Result<Inventory, EmuError> {
        match self.call(&Request::Discover)? {
            Response::Inventory { inventory } => Ok(inventory),
            other => Err(unexpected("discover", &other)),
        }
    }

    /// Returns the emulated time at which the device acknowledged.
    pub fn configure(&mut self, device: &str, command: Command) -> Result<f64, EmuError> {
        let req = Request::Configure {
            device: device.into(),
            command,
        };
        match self.call(&req)? {
            Response::Ack { timestamp } => Ok(timestamp),
            other => Err(unexpected("configure", &other)),
        }
    }

    pub fn poll(&mut self, device: &str, query: Query) -> Result<TelemetrySample, EmuError> {
        let req = Request::Poll {
            device: device.into(),
            query,
        };
        match self.call(&req)? {
            Response::Sample { sample } => Ok(sample),
            other => Err(unexpected("poll", &other)),
        }
    }

    /// Lets emulated time pass on the controller side (computation).
    pub fn spend(&mut self, seconds: f64) -> Result<f64, EmuError> {
        match self.call(&Request::Advance { seconds })? {
            Response::Ack { timestamp } => Ok(timestamp),
            other => Err(unexpected("advance", &other)),
        }
    }

    pub fn now(&mut self) -> Result<f64, EmuError> {
        self.spend(0.0)
    }

    pub fn take_interrupts(&mut self) -> Result<Vec<Interrupt>, EmuError> {
        match self.call(&Request::TakeInterrupts)? {
            Response::Interrupts { interrupts } => Ok(interrupts),
            other => Err(unexpected("interrupts", &other)),
        }
    }

    /// Line controller handle for one OLS.
    pub fn olc(&mut self, ols_id: &str) -> NosOlc<'_> {
        NosOlc {
            nos: self,
            ols_id: ols_id.to_string(),
            sigma_db: 0.0,
        }
    }
}

pub struct NosOlc<'a> {
    nos: &'a mut NosClient,
    ols_id: String,
    sigma_db: f64,
}

fn olc_error(amplifier: Option<&str>, e: EmuError) -> OlcError {
    match e {
        EmuError::Unreachable(d) => OlcError::Timeout(d),
        EmuError::UnknownDevice(d) => OlcError::UnknownDevice(d),
        EmuError::Rejected { device, reason } => OlcError::Rejected {
            amplifier: amplifier.map(str::to_string).unwrap_or(device),
            reason,
        },
        other => OlcError::Unsupported(other.to_string()),
    }
}

impl OlcHandle for NosOlc<'_> {
    fn ols_id(&self) -> &str {
        &self.ols_id
    }

    fn amplifier_setting(&mut self, amplifier: &str) -> Result<EdfaOperatingPoint, OlcError> {
        let s = self
            .nos
            .poll(
                &self.ols_id,
                Query::AmplifierSetting {
                    amplifier: amplifier.into(),
                },
            )
            .map_err(|e| olc_error(Some(amplifier), e))?;
        match s.value {
            SampleValue::Amplifier(p) => Ok(p),
            other => Err(OlcError::Unsupported(format!("unexpected sample {other:?}"))),
        }
    }

    fn set_amplifier(&mut self, amplifier: &str, setting: EdfaOperatingPoint) -> Result<(), OlcError> {
        self.nos
            .configure(
                &self.ols_id,
                Command::SetAmplifier {
                    amplifier: amplifier.into(),
                    setting,
                },
            )
            .map(|_| ())
            .map_err(|e| olc_error(Some(amplifier), e))
    }

    fn read_ocm(&mut self, point: MonitorPoint) -> Result<Vec<f64>, OlcError> {
        let s = self
            .nos
            .poll(&self.ols_id, Query::OcmSpectrum { point })
            .map_err(|e| olc_error(None, e))?;
        self.sigma_db = s.noise_sigma_db;
        match s.value {
            SampleValue::Spectrum(v) => Ok(v),
            other => Err(OlcError::Unsupported(format!("unexpected sample {other:?}"))),
        }
    }

    fn ocm_sigma_db(&self) -> f64 {
        self.sigma_db
    }

    fn run_otdr(&mut self, span: usize) -> Result<OtdrTrace, OlcError> {
        let s = self
            .nos
            .poll(&self.ols_id, Query::Otdr { span })
            .map_err(|e| olc_error(None, e))?;
        match s.value {
            SampleValue::Otdr(t) => Ok(t),
            other => Err(OlcError::Unsupported(format!("unexpected sample {other:?}"))),
        }
    }

    fn set_line_state(&mut self, state: LineState) -> Result<(), OlcError> {
        self.nos
            .configure(&self.ols_id, Command::SetLineState { state })
            .map(|_| ())
            .map_err(|e| olc_error(None, e))
    }
}
