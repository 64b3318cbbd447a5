//! Twin-ready description of a whole network: characterized lines joined by
//! ROADMs with flat losses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::twin::{gsnr, ChannelPlan, OlsDescriptor, OlsTwin, PowerSpectrum, PropagationOptions, TwinError};
use crate::units::db_to_lin;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown line {0}")]
    UnknownLine(String),
    #[error("line {0} is not ready")]
    LineNotReady(String),
    #[error("line {0} has failed")]
    LineFailed(String),
    #[error("path {0:?} is not contiguous")]
    BrokenPath(Vec<String>),
    #[error("line {line}: {source}")]
    Twin {
        line: String,
        #[source]
        source: TwinError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadmDescription {
    pub id: String,
    pub add_loss_db: f64,
    pub express_loss_db: f64,
    pub drop_loss_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LineState {
    NotReady,
    Ready,
    Failed,
}

/// Ordered sequence of lines between two ROADMs, with the ROADMs it visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyPath {
    pub id: String,
    pub lines: Vec<String>,
    pub roadms: Vec<String>,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyTopology {
    pub plan: ChannelPlan,
    pub roadms: Vec<RoadmDescription>,
    pub lines: Vec<OlsDescriptor>,
    pub line_state: BTreeMap<String, LineState>,
    /// Per-channel power at the transceiver output.
    pub trx_launch_dbm: f64,
}

impl PhyTopology {
    pub fn line(&self, id: &str) -> Result<&OlsDescriptor, TopologyError> {
        self.lines
            .iter()
            .find(|l| l.id == id)
            .ok_or_else(|| TopologyError::UnknownLine(id.into()))
    }

    pub fn line_mut(&mut self, id: &str) -> Result<&mut OlsDescriptor, TopologyError> {
        self.lines
            .iter_mut()
            .find(|l| l.id == id)
            .ok_or_else(|| TopologyError::UnknownLine(id.into()))
    }

    pub fn roadm(&self, id: &str) -> Result<&RoadmDescription, TopologyError> {
        self.roadms
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| TopologyError::UnknownNode(id.into()))
    }

    pub fn state(&self, line: &str) -> LineState {
        self.line_state.get(line).copied().unwrap_or(LineState::NotReady)
    }

    pub fn set_state(&mut self, line: &str, state: LineState) -> Result<(), TopologyError> {
        self.line(line)?;
        self.line_state.insert(line.to_string(), state);
        Ok(())
    }

    /// Loop-free paths between two ROADMs over lines that have not failed,
    /// shortest first with ties broken by id, at most `max_paths`. Lines are
    /// treated as bidirectional.
    pub fn paths(&self, src: &str, dst: &str, max_paths: usize) -> Result<Vec<PhyPath>, TopologyError> {
        self.roadm(src)?;
        self.roadm(dst)?;
        let mut found = Vec::new();
        let mut visited = vec![src.to_string()];
        let mut lines = Vec::new();
        self.dfs(src, dst, &mut visited, &mut lines, &mut found);
        found.sort_by(|a: &PhyPath, b| a.length_km.total_cmp(&b.length_km).then_with(|| a.id.cmp(&b.id)));
        found.truncate(max_paths);
        Ok(found)
    }

    fn dfs(&self, at: &str, dst: &str, visited: &mut Vec<String>, lines: &mut Vec<String>, found: &mut Vec<PhyPath>) {
        if at == dst {
            let length_km = lines
                .iter()
                .map(|l| self.line(l).map(|d| d.total_length_km()).unwrap_or(0.0))
                .sum();
            found.push(PhyPath {
                id: lines.join("+"),
                lines: lines.clone(),
                roadms: visited.clone(),
                length_km,
            });
            return;
        }
        for line in &self.lines {
            if self.state(&line.id) == LineState::Failed {
                continue;
            }
            let next = if line.from_roadm == at {
                &line.to_roadm
            } else if line.to_roadm == at {
                &line.from_roadm
            } else {
                continue;
            };
            if visited.iter().any(|v| v == next) {
                continue;
            }
            visited.push(next.clone());
            lines.push(line.id.clone());
            self.dfs(next, dst, visited, lines, found);
            lines.pop();
            visited.pop();
        }
    }

    /// Spectrum at the receiver of `path` under full spectral load.
    pub fn path_spectrum(&self, path: &PhyPath, options: PropagationOptions) -> Result<PowerSpectrum, TopologyError> {
        let first = path
            .roadms
            .first()
            .ok_or_else(|| TopologyError::BrokenPath(path.lines.clone()))?;
        let mut spectrum = PowerSpectrum::flat_dbm(&self.plan, self.trx_launch_dbm)
            .scaled_uniform(1.0 / db_to_lin(self.roadm(first)?.add_loss_db));
        for (k, id) in path.lines.iter().enumerate() {
            let line = self.line(id)?;
            match self.state(id) {
                LineState::Ready => {}
                LineState::NotReady => return Err(TopologyError::LineNotReady(id.clone())),
                LineState::Failed => return Err(TopologyError::LineFailed(id.clone())),
            }
            let (a, b) = (&path.roadms[k], &path.roadms[k + 1]);
            let joins =
                (&line.from_roadm == a && &line.to_roadm == b) || (&line.from_roadm == b && &line.to_roadm == a);
            if !joins {
                return Err(TopologyError::BrokenPath(path.lines.clone()));
            }
            if k > 0 {
                // The express WSS levels every channel to the mean power.
                let express = self.roadm(a)?.express_loss_db;
                let totals = spectrum.channel_totals();
                let target = totals.iter().sum::<f64>() / totals.len() as f64 / db_to_lin(express);
                let factors: Vec<f64> = totals.iter().map(|&p| target / p).collect();
                spectrum.scale_by(&factors);
            }
            let twin = OlsTwin::new(line, &self.plan, options).map_err(|source| TopologyError::Twin {
                line: id.clone(),
                source,
            })?;
            spectrum = twin.propagate(&spectrum).map_err(|source| TopologyError::Twin {
                line: id.clone(),
                source,
            })?;
        }
        let last = path.roadms.last().expect("non-empty");
        Ok(spectrum.scaled_uniform(1.0 / db_to_lin(self.roadm(last)?.drop_loss_db)))
    }

    pub fn path_gsnr(&self, path: &PhyPath) -> Result<Vec<f64>, TopologyError> {
        let spectrum = self.path_spectrum(path, PropagationOptions::default())?;
        gsnr(&spectrum).map_err(|source| TopologyError::Twin {
            line: path.id.clone(),
            source,
        })
    }
}
