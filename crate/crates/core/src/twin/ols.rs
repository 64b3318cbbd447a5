use serde::{Deserialize, Serialize};

use super::{
    edfa_apply, span_transfer, ChannelPlan, EdfaOperatingPoint, FiberSpanParams, NliKernel, ParametricEdfa,
    PowerSpectrum, Result, TwinError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amplifier {
    pub id: String,
    pub model: ParametricEdfa,
    pub setting: EdfaOperatingPoint,
}

/// ROADM-to-ROADM optical line: booster, spans separated by in-line
/// amplifiers, pre-amplifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsDescriptor {
    pub id: String,
    pub from_roadm: String,
    pub to_roadm: String,
    pub booster: Amplifier,
    pub spans: Vec<FiberSpanParams>,
    pub inline_amplifiers: Vec<Amplifier>,
    pub preamp: Amplifier,
}

impl OlsDescriptor {
    pub fn validate(&self, plan: &ChannelPlan) -> Result<()> {
        let expected = self.spans.len().saturating_sub(1);
        if self.inline_amplifiers.len() != expected {
            return Err(TwinError::InvalidSpan(format!(
                "line {} has {} spans but {} in-line amplifiers (expected {expected})",
                self.id,
                self.spans.len(),
                self.inline_amplifiers.len()
            )));
        }
        for (k, span) in self.spans.iter().enumerate() {
            span.validate(plan).map_err(|e| e.at(2 * k + 1, self.span_id(k)))?;
        }
        Ok(())
    }

    /// Stable identifier of span `k` (zero-based): `<line>/<k+1>`.
    pub fn span_id(&self, k: usize) -> String {
        format!("{}/{}", self.id, k + 1)
    }

    pub fn span_ids(&self) -> Vec<String> {
        (0..self.spans.len()).map(|k| self.span_id(k)).collect()
    }

    /// Booster, in-line amplifiers, pre-amplifier, in line order.
    pub fn amplifiers(&self) -> Vec<&Amplifier> {
        std::iter::once(&self.booster)
            .chain(self.inline_amplifiers.iter())
            .chain(std::iter::once(&self.preamp))
            .collect()
    }

    pub fn amplifiers_mut(&mut self) -> Vec<&mut Amplifier> {
        std::iter::once(&mut self.booster)
            .chain(self.inline_amplifiers.iter_mut())
            .chain(std::iter::once(&mut self.preamp))
            .collect()
    }

    pub fn settings(&self) -> Vec<EdfaOperatingPoint> {
        self.amplifiers().iter().map(|a| a.setting).collect()
    }

    pub fn set_settings(&mut self, settings: &[EdfaOperatingPoint]) {
        for (amp, s) in self.amplifiers_mut().into_iter().zip(settings) {
            amp.setting = *s;
        }
    }

    /// Amplifier feeding span `k`.
    pub fn amplifier_before_span(&self, k: usize) -> &Amplifier {
        if k == 0 {
            &self.booster
        } else {
            &self.inline_amplifiers[k - 1]
        }
    }

    /// Amplifier right after span `k`.
    pub fn amplifier_after_span(&self, k: usize) -> &Amplifier {
        if k + 1 == self.spans.len() {
            &self.preamp
        } else {
            &self.inline_amplifiers[k]
        }
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans.iter().map(|s| s.length_km).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationOptions {
    pub nli: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { nli: true }
    }
}

/// Spectra observed at every monitoring point of a line.
#[derive(Debug, Clone, Default)]
pub struct LineTrace {
    /// At the output of the amplifier feeding each span.
    pub span_input: Vec<PowerSpectrum>,
    /// At the end of each span, before the next amplifier.
    pub span_output: Vec<PowerSpectrum>,
    /// Working points with both gain and output power resolved.
    pub resolved: Vec<EdfaOperatingPoint>,
}

/// Line ready for repeated evaluation; NLI kernels are computed once.
#[derive(Debug, Clone)]
pub struct OlsTwin<'a> {
    ols: &'a OlsDescriptor,
    plan: ChannelPlan,
    kernels: Vec<NliKernel>,
    options: PropagationOptions,
}

impl<'a> OlsTwin<'a> {
    pub fn new(ols: &'a OlsDescriptor, plan: &ChannelPlan, options: PropagationOptions) -> Result<Self> {
        ols.validate(plan)?;
        let kernels = if options.nli {
            ols.spans
                .iter()
                .enumerate()
                .map(|(k, s)| NliKernel::new(plan, s).map_err(|e| e.at(2 * k + 1, ols.span_id(k))))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(OlsTwin {
            ols,
            plan: plan.clone(),
            kernels,
            options,
        })
    }

    pub fn descriptor(&self) -> &OlsDescriptor {
        self.ols
    }

    pub fn propagate(&self, input: &PowerSpectrum) -> Result<PowerSpectrum> {
        self.run(input, &self.ols.settings(), None)
    }

    pub fn propagate_with(&self, input: &PowerSpectrum, settings: &[EdfaOperatingPoint]) -> Result<PowerSpectrum> {
        self.run(input, settings, None)
    }

    pub fn trace_with(
        &self,
        input: &PowerSpectrum,
        settings: &[EdfaOperatingPoint],
    ) -> Result<(PowerSpectrum, LineTrace)> {
        let mut trace = LineTrace::default();
        let out = self.run(input, settings, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run(
        &self,
        input: &PowerSpectrum,
        settings: &[EdfaOperatingPoint],
        mut trace: Option<&mut LineTrace>,
    ) -> Result<PowerSpectrum> {
        if input.plan != self.plan {
            return Err(TwinError::PlanMismatch);
        }
        let amps = self.ols.amplifiers();
        assert_eq!(settings.len(), amps.len(), "one setting per amplifier");
        let bw = self.plan.symbol_rate;
        let mut element = 0usize;
        let apply = |spectrum: &PowerSpectrum, k: usize, element: usize, trace: &mut Option<&mut LineTrace>| {
            let out = edfa_apply(spectrum, &amps[k].model, &settings[k], bw)
                .map_err(|e| e.at(element, amps[k].id.clone()))?;
            if let Some(t) = trace.as_deref_mut() {
                let mut resolved = settings[k];
                resolved.gain_db = out.gain_db;
                resolved.output_power_dbm = out.output_power_dbm;
                t.resolved.push(resolved);
            }
            Ok::<_, TwinError>(out.spectrum)
        };

        let mut spectrum = apply(input, 0, element, &mut trace)?;
        for (k, span) in self.ols.spans.iter().enumerate() {
            element += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.span_input.push(spectrum.clone());
            }
            if self.options.nli {
                let nli = self.kernels[k].at_span_input(&spectrum.signal);
                for (acc, x) in spectrum.nli.iter_mut().zip(nli) {
                    *acc += x;
                }
            }
            spectrum = span_transfer(&spectrum, span).map_err(|e| e.at(element, self.ols.span_id(k)))?;
            if let Some(t) = trace.as_deref_mut() {
                t.span_output.push(spectrum.clone());
            }
            element += 1;
            spectrum = apply(&spectrum, k + 1, element, &mut trace)?;
        }
        if self.ols.spans.is_empty() {
            element += 1;
            spectrum = apply(&spectrum, amps.len() - 1, element, &mut trace)?;
        }
        Ok(spectrum)
    }
}

/// Booster, then (NLI, span, amplifier) per span, the last amplifier being
/// the pre-amplifier.
pub fn propagate_ols(input: &PowerSpectrum, ols: &OlsDescriptor) -> Result<PowerSpectrum> {
    OlsTwin::new(ols, &input.plan, PropagationOptions::default())?.propagate(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::{build_channel_plan, gsnr, EdfaLimits};
    use crate::units::{GHZ, THZ};

    fn amp(id: &str, setting: EdfaOperatingPoint) -> Amplifier {
        Amplifier {
            id: id.into(),
            model: ParametricEdfa::new(
                EdfaLimits {
                    gain_min_db: 0.0,
                    gain_max_db: 30.0,
                    output_power_max_dbm: 25.0,
                    tilt_min_db: -5.0,
                    tilt_max_db: 5.0,
                    input_floor_dbm: -50.0,
                },
                5.0,
            ),
            setting,
        }
    }

    fn line(n_spans: usize) -> OlsDescriptor {
        OlsDescriptor {
            id: "L".into(),
            from_roadm: "A".into(),
            to_roadm: "B".into(),
            booster: amp("bst", EdfaOperatingPoint::constant_gain(0.0, 0.0)),
            spans: (0..n_spans)
                .map(|_| FiberSpanParams::flat(80.0, 0.2, 0.0, 16.7))
                .collect(),
            inline_amplifiers: (1..n_spans)
                .map(|k| amp(&format!("ila{k}"), EdfaOperatingPoint::constant_gain(16.0, 0.0)))
                .collect(),
            preamp: amp(
                "pre",
                EdfaOperatingPoint::constant_gain(if n_spans > 0 { 16.0 } else { 0.0 }, 0.0),
            ),
        }
    }

    #[test]
    fn empty_line_with_unity_amplifiers_is_identity() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let input = PowerSpectrum::flat_dbm(&plan, 0.0);
        let out = propagate_ols(&input, &line(0)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn errors_carry_element_index() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let mut ols = line(3);
        ols.inline_amplifiers[1].setting = EdfaOperatingPoint::constant_gain(35.0, 0.0);
        let err = propagate_ols(&PowerSpectrum::flat_dbm(&plan, 0.0), &ols).unwrap_err();
        match err {
            TwinError::Element { index, element, .. } => {
                assert_eq!(index, 4);
                assert_eq!(element, "ila2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_exposes_monitor_points() {
        let plan = build_channel_plan(193.5 * THZ, 50.0 * GHZ, 75, 32.0 * GHZ).unwrap();
        let ols = line(3);
        let twin = OlsTwin::new(&ols, &plan, PropagationOptions::default()).unwrap();
        let (out, trace) = twin
            .trace_with(&PowerSpectrum::flat_dbm(&plan, 0.0), &ols.settings())
            .unwrap();
        assert_eq!(trace.span_input.len(), 3);
        assert_eq!(trace.span_output.len(), 3);
        assert_eq!(trace.resolved.len(), 4);
        assert!(gsnr(&out).unwrap().iter().all(|g| g.is_finite()));
    }
}
