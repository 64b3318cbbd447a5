//! Incoherent GN-model nonlinear interference, one span at a time.
//!
//! Cross-channel terms use the usual asinh closed form. The self-channel term
//! integrates the asymptotic span kernel `1 / (a^2 + (4 pi^2 |b2| f1 f2)^2)`
//! over the exact hexagonal GN domain with a one-dimensional quadrature (the
//! inner integral is an arctangent), which removes the few-percent
//! overestimate the rectangular-domain asinh approximation has on long spans.

use std::f64::consts::PI;

use super::{ChannelPlan, FiberSpanParams, PowerSpectrum, Result, TwinError};
use crate::units::{db_per_km_to_neper, db_to_lin};

const MIN_BETA2_ABS: f64 = 1e-30;
const SCI_QUADRATURE_INTERVALS: usize = 512;

/// Precomputed coupling matrix of one span on one channel plan.
///
/// `P_nli[i] = P[i] * sum_j c[i][j] * P[j]^2` with powers measured in the fiber.
#[derive(Debug, Clone)]
pub struct NliKernel {
    n: usize,
    coupling: Vec<f64>,
    input_factor: f64,
}

impl NliKernel {
    pub fn new(plan: &ChannelPlan, span: &FiberSpanParams) -> Result<Self> {
        span.validate(plan)?;
        let beta2 = span.beta2(plan.center_frequency).abs();
        if beta2 < MIN_BETA2_ABS {
            return Err(TwinError::ZeroDispersion { beta2_abs: beta2 });
        }
        let alpha = db_per_km_to_neper(span.mean_alpha_db(plan)) * 1e-3; // 1/m
        let length = span.length_km * 1e3;
        let l_eff = -(-alpha * length).exp_m1() / alpha;
        let l_asym = 1.0 / alpha;
        let gamma = span.gamma * 1e-3;
        let b = plan.symbol_rate;
        let scale = (16.0 / 27.0) * (gamma * l_eff).powi(2) / (2.0 * PI * beta2 * l_asym) / (b * b);

        let psi_self = 2.0 * PI * beta2 * alpha * sci_domain_integral(alpha, beta2, b);
        let freqs = plan.frequencies();
        let n = freqs.len();
        let mut coupling = vec![0.0; n * n];
        let arg = PI * PI * l_asym * beta2 * b;
        for i in 0..n {
            for j in 0..n {
                let psi = if i == j {
                    psi_self
                } else {
                    let df = freqs[i] - freqs[j];
                    (arg * (df + 0.5 * b)).asinh() - (arg * (df - 0.5 * b)).asinh()
                };
                coupling[i * n + j] = scale * psi;
            }
        }
        Ok(NliKernel {
            n,
            coupling,
            input_factor: db_to_lin(-span.input_connector_loss_db),
        })
    }

    /// NLI generated by in-fiber channel powers `powers`.
    pub fn in_fiber(&self, powers: &[f64]) -> Vec<f64> {
        assert_eq!(powers.len(), self.n, "power vector does not match kernel size");
        let sq: Vec<f64> = powers.iter().map(|p| p * p).collect();
        (0..self.n)
            .map(|i| {
                let row = &self.coupling[i * self.n..(i + 1) * self.n];
                powers[i] * row.iter().zip(&sq).map(|(c, p2)| c * p2).sum::<f64>()
            })
            .collect()
    }

    /// NLI for signal powers at the span input, referred back to the span
    /// input so that the full span transfer applies to it like to the signal.
    pub fn at_span_input(&self, signal: &[f64]) -> Vec<f64> {
        let a = self.input_factor;
        let launched: Vec<f64> = signal.iter().map(|p| p * a).collect();
        self.in_fiber(&launched).into_iter().map(|p| p / a).collect()
    }
}

/// `J = int int_hex df1 df2 / (a^2 + (4 pi^2 b2 f1 f2)^2)` over the domain
/// `|f1|, |f2|, |f1 + f2| <= B/2`.
fn sci_domain_integral(alpha: f64, beta2: f64, bandwidth: f64) -> f64 {
    let k = 4.0 * PI * PI * beta2;
    let half = 0.5 * bandwidth;
    // Symmetric in f1, so integrate [0, B/2] and double.
    let inner = |f1: f64| -> f64 {
        let hi = half - f1;
        let lo = -half;
        let a = k * f1;
        if a * half / alpha < 1e-8 {
            (hi - lo) / (alpha * alpha)
        } else {
            ((a * hi / alpha).atan() - (a * lo / alpha).atan()) / (alpha * a)
        }
    };
    let n = SCI_QUADRATURE_INTERVALS;
    let h = half / n as f64;
    let mut acc = inner(0.0) + inner(half);
    for m in 1..n {
        acc += inner(m as f64 * h) * if m % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * acc * h / 3.0
}

/// Per-channel NLI generated in `span` by the spectrum at its input.
///
/// Only signal power drives the nonlinearity. The result is referred to the
/// span input and is meant to be added to `nli` before [`super::span_transfer`].
pub fn nli_span(spectrum: &PowerSpectrum, span: &FiberSpanParams) -> Result<Vec<f64>> {
    spectrum.validate()?;
    let kernel = NliKernel::new(&spectrum.plan, span)?;
    Ok(kernel.at_span_input(&spectrum.signal))
}
