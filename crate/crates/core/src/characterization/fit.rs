use nalgebra::{DMatrix, DVector};

use super::{AseProbeRecord, CharacterizationConfig, CharacterizationError, CharacterizationRecord, OtdrTrace};
use crate::twin::{
    effective_length_km, span_transfer, ChannelPlan, FiberSpanParams, LumpedLoss, PiecewiseLinear, PowerSpectrum,
    RAMAN_PEAK_OFFSET_HZ,
};
use crate::units::{dbm_to_watt, watt_to_dbm};

const CR_BOUNDS: (f64, f64) = (0.0, 2.0);
const ALPHA_BOUNDS: (f64, f64) = (0.05, 1.0);
const LOSS_BOUNDS: (f64, f64) = (0.0, 20.0);
const MIN_SIGMA_DB: f64 = 0.01;
const MIN_LEVEL_GAP_DB: f64 = 0.1;

/// Parameter vector layout: `[C_R, alpha_1..alpha_K, l(0), l(L)]`.
struct Problem<'a> {
    plan: &'a ChannelPlan,
    probes: &'a [AseProbeRecord; 2],
    template: FiberSpanParams,
    knots_lo: f64,
    knots_hi: f64,
    k: usize,
    ocm_weight: f64,
    prior: [f64; 2],
    prior_weight: f64,
    inputs: [PowerSpectrum; 2],
}

impl Problem<'_> {
    fn span(&self, theta: &[f64]) -> FiberSpanParams {
        let mut s = self.template.clone();
        s.raman_efficiency = theta[0];
        s.loss_coefficient = PiecewiseLinear::uniform(self.knots_lo, self.knots_hi, &theta[1..=self.k])
            .expect("uniform knots are increasing");
        s.input_connector_loss_db = theta[self.k + 1];
        s.output_connector_loss_db = theta[self.k + 2];
        s
    }

    fn predicted(&self, theta: &[f64], level: usize) -> Vec<f64> {
        let out = span_transfer(&self.inputs[level], &self.span(theta)).expect("bounded parameters are valid");
        out.signal.iter().map(|&p| watt_to_dbm(p)).collect()
    }

    /// Spectral misfit in dB, both levels concatenated.
    fn misfit(&self, theta: &[f64]) -> Vec<f64> {
        let mut r = Vec::with_capacity(2 * self.plan.channel_count);
        for (level, probe) in self.probes.iter().enumerate() {
            let pred = self.predicted(theta, level);
            r.extend(pred.iter().zip(&probe.output_spectrum_dbm).map(|(p, m)| p - m));
        }
        r
    }

    fn residuals(&self, theta: &[f64]) -> DVector<f64> {
        let mut r: Vec<f64> = self.misfit(theta).into_iter().map(|x| x * self.ocm_weight).collect();
        r.push((theta[self.k + 1] - self.prior[0]) * self.prior_weight);
        r.push((theta[self.k + 2] - self.prior[1]) * self.prior_weight);
        DVector::from_vec(r)
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if i == 0 {
            CR_BOUNDS
        } else if i <= self.k {
            ALPHA_BOUNDS
        } else {
            LOSS_BOUNDS
        }
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            let (lo, hi) = self.bounds(i);
            *t = t.clamp(lo, hi);
        }
    }

    fn jacobian(&self, theta: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let n = theta.len();
        let mut j = DMatrix::zeros(r0.len(), n);
        for i in 0..n {
            let (lo, hi) = self.bounds(i);
            let mut h = 1e-6 * theta[i].abs().max(1.0);
            if theta[i] + h > hi {
                h = -h;
            }
            let mut t = theta.to_vec();
            t[i] = (theta[i] + h).max(lo);
            let r = self.residuals(&t);
            j.set_column(i, &((r - r0) / (t[i] - theta[i])));
        }
        j
    }
}

fn check_inputs(
    trace: &OtdrTrace,
    probes: &[AseProbeRecord; 2],
    plan: &ChannelPlan,
) -> Result<(), CharacterizationError> {
    for p in probes {
        if p.span_id != trace.span_id {
            return Err(CharacterizationError::SpanMismatch {
                expected: trace.span_id.clone(),
                found: p.span_id.clone(),
            });
        }
        if p.input_spectrum_dbm.len() != plan.channel_count || p.output_spectrum_dbm.len() != plan.channel_count {
            return Err(CharacterizationError::BadProbe {
                span: p.span_id.clone(),
                reason: format!("expected {} OCM bins", plan.channel_count),
            });
        }
        if p.input_spectrum_dbm
            .iter()
            .chain(&p.output_spectrum_dbm)
            .any(|x| !x.is_finite())
        {
            return Err(CharacterizationError::BadProbe {
                span: p.span_id.clone(),
                reason: "non-finite OCM reading".into(),
            });
        }
    }
    if !(trace.measured_length_km > 0.0) {
        return Err(CharacterizationError::BadProbe {
            span: trace.span_id.clone(),
            reason: "OTDR length must be positive".into(),
        });
    }
    let total = |p: &AseProbeRecord| watt_to_dbm(p.input_spectrum_dbm.iter().map(|&x| dbm_to_watt(x)).sum());
    if (total(&probes[0]) - total(&probes[1])).abs() < MIN_LEVEL_GAP_DB {
        return Err(CharacterizationError::IdenticalProbeLevels(trace.span_id.clone()));
    }
    Ok(())
}

/// Interior OTDR events become lumped losses; events near either end are
/// summed into the connector-loss priors.
fn split_events(trace: &OtdrTrace, window_km: f64) -> (Vec<LumpedLoss>, [f64; 2]) {
    let l = trace.measured_length_km;
    let mut lumped = Vec::new();
    let mut ends = [0.0, 0.0];
    for e in &trace.events {
        if e.position_km <= window_km {
            ends[0] += e.loss_db;
        } else if e.position_km >= l - window_km {
            ends[1] += e.loss_db;
        } else {
            lumped.push(LumpedLoss {
                position_km: e.position_km,
                loss_db: e.loss_db,
            });
        }
    }
    (lumped, ends)
}

/// Least-squares slope of `y` against frequency, dB/Hz.
fn slope(freqs: &[f64], y: &[f64]) -> f64 {
    let n = freqs.len() as f64;
    let fm = freqs.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = freqs.iter().map(|f| (f - fm).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    freqs.iter().zip(y).map(|(f, v)| (f - fm) * (v - ym)).sum::<f64>() / sxx
}

/// Physics-informed starting point: alpha from the mean loss of the weaker
/// probe, C_R from how much the tilt changes between the two levels.
pub fn initial_guess(
    trace: &OtdrTrace,
    probes: &[AseProbeRecord; 2],
    plan: &ChannelPlan,
    config: &CharacterizationConfig,
) -> Vec<f64> {
    let (lumped, ends) = split_events(trace, config.end_event_window_km);
    let lumped_db: f64 = lumped.iter().map(|l| l.loss_db).sum();
    let freqs = plan.frequencies();
    let loss = |p: &AseProbeRecord| -> Vec<f64> {
        p.input_spectrum_dbm
            .iter()
            .zip(&p.output_spectrum_dbm)
            .map(|(i, o)| i - o)
            .collect()
    };
    let total_w = |p: &AseProbeRecord| -> f64 { p.input_spectrum_dbm.iter().map(|&x| dbm_to_watt(x)).sum() };
    let (weak, strong) = if total_w(&probes[0]) < total_w(&probes[1]) {
        (&probes[0], &probes[1])
    } else {
        (&probes[1], &probes[0])
    };
    let weak_loss = loss(weak);
    let mean_loss = weak_loss.iter().sum::<f64>() / weak_loss.len() as f64;
    let alpha =
        ((mean_loss - ends[0] - ends[1] - lumped_db) / trace.measured_length_km).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);

    // Loss slope difference (dB/Hz) = 10 log10(e) * C_R / 13 THz * dP * L_eff.
    let dslope = slope(&freqs, &loss(strong)) - slope(&freqs, &loss(weak));
    let a_in = 10f64.powf(-ends[0] / 10.0);
    let dp = (total_w(strong) - total_w(weak)) * a_in;
    let leff = effective_length_km(alpha, trace.measured_length_km);
    let cr = if dp > 0.0 {
        dslope * RAMAN_PEAK_OFFSET_HZ / (10.0 * std::f64::consts::LOG10_E * dp * leff)
    } else {
        0.0
    };
    let mut theta = vec![cr.clamp(CR_BOUNDS.0, CR_BOUNDS.1)];
    theta.extend(std::iter::repeat_n(alpha, config.alpha_knots));
    theta.push(ends[0]);
    theta.push(ends[1]);
    theta
}

/// Retrieves C_R, alpha(f) and the connector losses of one span from its
/// OTDR trace and two ASE probes by bounded Levenberg-Marquardt.
///
/// Length and interior lumped losses come from the OTDR directly;
/// dispersion and gamma are left at their defaults and set from static
/// configuration when the topology is assembled.
pub fn fit_span(
    trace: &OtdrTrace,
    probes: &[AseProbeRecord; 2],
    plan: &ChannelPlan,
    config: &CharacterizationConfig,
    timestamp: f64,
) -> Result<CharacterizationRecord, CharacterizationError> {
    check_inputs(trace, probes, plan)?;
    let (lumped, ends) = split_events(trace, config.end_event_window_km);
    let k = config.alpha_knots.max(2);
    let mut template = FiberSpanParams::flat(trace.measured_length_km, 0.2, 0.0, 16.7);
    template.lumped_losses = lumped;
    // The probe comb is flat by construction, so the input is modeled at the
    // mean measured level rather than channel by channel.
    let inputs = [0, 1].map(|i| {
        let p = &probes[i].input_spectrum_dbm;
        PowerSpectrum::flat(plan, p.iter().map(|&x| dbm_to_watt(x)).sum::<f64>() / p.len() as f64)
    });
    let sigma_ocm = probes[0].ocm_sigma_db.max(probes[1].ocm_sigma_db).max(MIN_SIGMA_DB);
    let problem = Problem {
        plan,
        probes,
        template,
        knots_lo: plan.lowest_frequency(),
        knots_hi: plan.highest_frequency(),
        k,
        ocm_weight: 1.0 / sigma_ocm,
        prior: ends,
        prior_weight: 1.0 / trace.noise_sigma_db.max(MIN_SIGMA_DB),
        inputs,
    };

    let cfg = CharacterizationConfig {
        alpha_knots: k,
        ..config.clone()
    };
    let mut theta = initial_guess(trace, probes, plan, &cfg);
    problem.clamp(&mut theta);
    let mut r = problem.residuals(&theta);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let j = problem.jacobian(&theta, &r);
        let mut jtj = j.transpose() * &j;
        let mut g = j.transpose() * &r;
        // Parameters pinned at a bound with the gradient pushing outward are
        // frozen for this step.
        for i in 0..theta.len() {
            let (lo, hi) = problem.bounds(i);
            if (theta[i] <= lo && g[i] > 0.0) || (theta[i] >= hi && g[i] < 0.0) {
                jtj.row_mut(i).fill(0.0);
                jtj.column_mut(i).fill(0.0);
                jtj[(i, i)] = 1.0;
                g[i] = 0.0;
            }
        }
        if g.amax() < 1e-10 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let mut cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            problem.clamp(&mut cand);
            let rc = problem.residuals(&cand);
            let cc = rc.norm_squared();
            if cc < cost {
                let moved = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let rel = (cost - cc) / cost.max(1e-300);
                theta = cand;
                r = rc;
                cost = cc;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if moved < 1e-9 || rel < 1e-10 {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CharacterizationError::NotConverged {
            span: trace.span_id.clone(),
            iterations,
        });
    }

    let misfit = problem.misfit(&theta);
    let rms = (misfit.iter().map(|x| x * x).sum::<f64>() / misfit.len() as f64).sqrt();
    if rms > config.reject_rms_db {
        return Err(CharacterizationError::ResidualTooHigh {
            span: trace.span_id.clone(),
            rms_db: rms,
            limit_db: config.reject_rms_db,
        });
    }
    Ok(CharacterizationRecord {
        span_id: trace.span_id.clone(),
        fitted: problem.span(&theta),
        residual_rms_db: rms,
        iterations,
        timestamp,
    })
}
