//! Amplifier working-point design at full spectral load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{OlcError, OlcHandle};
use crate::topology::LineState;
use crate::twin::{
    gsnr, ChannelPlan, EdfaMode, EdfaOperatingPoint, OlsDescriptor, OlsTwin, PowerSpectrum, PropagationOptions,
    TwinError,
};
use crate::units::lin_to_db;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmpOptError {
    #[error("span {span} loss {loss_db:.1} dB exceeds {amplifier} maximum gain {max_db:.1} dB")]
    Infeasible {
        span: String,
        amplifier: String,
        loss_db: f64,
        max_db: f64,
    },
    #[error("seed working point is not realizable: {0}")]
    SeedRejected(#[source] TwinError),
    #[error("search did not converge within {0} evaluations")]
    NotConverged(usize),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Olc(#[from] OlcError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Weight of the GSNR spread in the objective.
    pub lambda_flat: f64,
    pub max_evaluations: usize,
    /// Pattern-search step sizes, coarse to fine; the last sets the grid.
    pub steps_db: Vec<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda_flat: 2.0,
            max_evaluations: 2000,
            steps_db: vec![1.0, 0.5, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifierSetting {
    pub amplifier: String,
    pub setting: EdfaOperatingPoint,
    /// Gain actually applied at full load (derived in output-power mode).
    pub resolved_gain_db: f64,
    pub resolved_output_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingPointSolution {
    pub ols_id: String,
    pub amplifiers: Vec<AmplifierSetting>,
    pub objective_db: f64,
    pub mean_gsnr_db: f64,
    pub flatness_db: f64,
    pub evaluations: usize,
    pub gsnr_db: Vec<f64>,
}

impl WorkingPointSolution {
    pub fn settings(&self) -> Vec<EdfaOperatingPoint> {
        self.amplifiers.iter().map(|a| a.setting).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub objective_db: f64,
    pub mean_gsnr_db: f64,
    pub flatness_db: f64,
}

pub fn score(gsnr_db: &[f64], lambda_flat: f64) -> Score {
    let mean = gsnr_db.iter().sum::<f64>() / gsnr_db.len() as f64;
    let max = gsnr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = gsnr_db.iter().copied().fold(f64::INFINITY, f64::min);
    Score {
        objective_db: mean - lambda_flat * (max - min),
        mean_gsnr_db: mean,
        flatness_db: max - min,
    }
}

#[derive(Debug, Clone, Copy)]
enum Knob {
    Output(usize),
    Gain(usize),
    Tilt(usize),
}

/// Values live on an integer grid of `grid` dB so repeated steps never drift.
fn to_grid(v: f64, grid: f64) -> i64 {
    (v / grid).round() as i64
}

struct Search<'a> {
    twin: OlsTwin<'a>,
    input: PowerSpectrum,
    lambda: f64,
    grid: f64,
    evaluations: usize,
}

impl Search<'_> {
    fn realize(&self, base: &[EdfaOperatingPoint], x: &[i64], knobs: &[Knob]) -> Vec<EdfaOperatingPoint> {
        let mut s = base.to_vec();
        for (k, knob) in knobs.iter().enumerate() {
            let v = x[k] as f64 * self.grid;
            match *knob {
                Knob::Output(a) => s[a].output_power_dbm = v,
                Knob::Gain(a) => s[a].gain_db = v,
                Knob::Tilt(a) => s[a].tilt_db = v,
            }
        }
        s
    }

    fn evaluate(&mut self, settings: &[EdfaOperatingPoint]) -> Result<(Score, Vec<f64>), TwinError> {
        self.evaluations += 1;
        let out = self.twin.propagate_with(&self.input, settings)?;
        let g = gsnr(&out)?;
        Ok((score(&g, self.lambda), g))
    }
}

/// Seed: booster and pre-amplifier at their configured output power,
/// in-line gains equal to the preceding span loss at mid band, tilts
/// cancelling the SRS tilt of that span.
pub fn seed_working_point(
    ols: &OlsDescriptor,
    plan: &ChannelPlan,
    input: &PowerSpectrum,
) -> Result<Vec<EdfaOperatingPoint>, AmpOptError> {
    let mid = plan.frequency(plan.channel_count / 2);
    for (k, span) in ols.spans.iter().enumerate() {
        let amp = ols.amplifier_after_span(k);
        if k + 1 < ols.spans.len() {
            let loss = span.passive_loss_db(mid);
            if loss > amp.model.limits.gain_max_db {
                return Err(AmpOptError::Infeasible {
                    span: ols.span_id(k),
                    amplifier: amp.id.clone(),
                    loss_db: loss,
                    max_db: amp.model.limits.gain_max_db,
                });
            }
        }
    }
    let mut settings = ols.settings();
    let n = settings.len();
    settings[0].mode = EdfaMode::ConstantOutputPower;
    settings[0].tilt_db = 0.0;
    settings[n - 1].mode = EdfaMode::ConstantOutputPower;
    settings[n - 1].tilt_db = 0.0;
    for (k, span) in ols.spans.iter().enumerate().take(ols.spans.len().saturating_sub(1)) {
        let limits = &ols.inline_amplifiers[k].model.limits;
        // Equal launch into every fiber: the input connector of the next
        // span comes after this amplifier, the one of this span before it.
        let loss = span.passive_loss_db(mid) - span.input_connector_loss_db + ols.spans[k + 1].input_connector_loss_db;
        settings[k + 1] = EdfaOperatingPoint::constant_gain(loss.clamp(limits.gain_min_db, limits.gain_max_db), 0.0);
    }
    // SRS tilt of each span at the seed launch; the amplifier after it
    // applies the opposite edge-to-edge tilt.
    let twin = OlsTwin::new(ols, plan, PropagationOptions { nli: false })?;
    let (_, trace) = twin.trace_with(input, &settings).map_err(AmpOptError::SeedRejected)?;
    for k in 0..ols.spans.len().saturating_sub(1) {
        let span = &ols.spans[k];
        let inp = &trace.span_input[k];
        let out = &trace.span_output[k];
        let ratio = |i: usize| lin_to_db(out.signal[i] / inp.signal[i]) + span.passive_loss_db(plan.frequency(i));
        let srs_tilt = ratio(plan.channel_count - 1) - ratio(0);
        let limits = &ols.inline_amplifiers[k].model.limits;
        settings[k + 1].tilt_db = (-srs_tilt).clamp(limits.tilt_min_db, limits.tilt_max_db);
    }
    Ok(settings)
}

/// Pattern search over booster output power and in-line gain and tilt,
/// maximizing mean GSNR minus `lambda_flat` times its spread. The
/// pre-amplifier keeps its configured output power: it only sets the level
/// handed to the ROADM and barely moves the line GSNR.
pub fn optimize_ols(
    ols: &OlsDescriptor,
    plan: &ChannelPlan,
    input: &PowerSpectrum,
    config: &OptimizerConfig,
) -> Result<WorkingPointSolution, AmpOptError> {
    let grid = *config.steps_db.last().unwrap_or(&0.1);
    let seed = seed_working_point(ols, plan, input)?;
    let n = seed.len();
    let mut knobs = vec![Knob::Output(0)];
    for a in 1..n - 1 {
        knobs.push(Knob::Gain(a));
        knobs.push(Knob::Tilt(a));
    }
    let mut x: Vec<i64> = knobs
        .iter()
        .map(|k| match *k {
            Knob::Output(a) => to_grid(seed[a].output_power_dbm, grid),
            Knob::Gain(a) => to_grid(seed[a].gain_db, grid),
            Knob::Tilt(a) => to_grid(seed[a].tilt_db, grid),
        })
        .collect();

    let mut search = Search {
        twin: OlsTwin::new(ols, plan, PropagationOptions::default())?,
        input: input.clone(),
        lambda: config.lambda_flat,
        grid,
        evaluations: 0,
    };
    let (mut best, mut best_g) = search
        .evaluate(&search.realize(&seed, &x, &knobs))
        .map_err(AmpOptError::SeedRejected)?;

    // Single-knob moves, plus paired moves that raise one amplifier and
    // lower the next in-line gain by the same amount: in a constant-gain
    // chain that shifts the launch of a single span only.
    let mut directions: Vec<Vec<(usize, i64)>> = (0..knobs.len()).map(|k| vec![(k, 1)]).collect();
    let gain_knobs: Vec<usize> = (0..knobs.len())
        .filter(|&k| matches!(knobs[k], Knob::Gain(_)))
        .collect();
    let mut prev = 0usize;
    for &g in &gain_knobs {
        directions.push(vec![(prev, 1), (g, -1)]);
        prev = g;
    }

    let mut converged = false;
    'steps: for (si, &step) in config.steps_db.iter().enumerate() {
        let delta = to_grid(step, grid).max(1);
        loop {
            let mut improved = false;
            for dir in &directions {
                for sign in [1i64, -1] {
                    if search.evaluations >= config.max_evaluations {
                        break 'steps;
                    }
                    let mut cand = x.clone();
                    for &(k, s) in dir {
                        cand[k] += sign * s * delta;
                    }
                    let settings = search.realize(&seed, &cand, &knobs);
                    if let Ok((sc, g)) = search.evaluate(&settings) {
                        if sc.objective_db > best.objective_db + 1e-9 {
                            best = sc;
                            best_g = g;
                            x = cand;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if si + 1 == config.steps_db.len() {
            converged = true;
        }
    }
    if !converged {
        return Err(AmpOptError::NotConverged(search.evaluations));
    }

    let settings = search.realize(&seed, &x, &knobs);
    let (_, trace) = search.twin.trace_with(input, &settings)?;
    let amplifiers = ols
        .amplifiers()
        .iter()
        .zip(&settings)
        .zip(&trace.resolved)
        .map(|((amp, s), r)| AmplifierSetting {
            amplifier: amp.id.clone(),
            setting: *s,
            resolved_gain_db: r.gain_db,
            resolved_output_dbm: r.output_power_dbm,
        })
        .collect();
    Ok(WorkingPointSolution {
        ols_id: ols.id.clone(),
        amplifiers,
        objective_db: best.objective_db,
        mean_gsnr_db: best.mean_gsnr_db,
        flatness_db: best.flatness_db,
        evaluations: search.evaluations,
        gsnr_db: best_g,
    })
}

/// Pushes every amplifier setting through the line controller; the line
/// becomes READY only if all of them are accepted.
pub fn apply_working_point(solution: &WorkingPointSolution, olc: &mut dyn OlcHandle) -> Result<(), AmpOptError> {
    for a in &solution.amplifiers {
        if let Err(e) = olc.set_amplifier(&a.amplifier, a.setting) {
            let _ = olc.set_line_state(LineState::NotReady);
            return Err(e.into());
        }
    }
    olc.set_line_state(LineState::Ready)?;
    Ok(())
}
