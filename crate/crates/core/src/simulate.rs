//! Time integration of the reduced model, steady-state metrics and stepped
//! frequency sweeps.

use crate::forces::{ForceError, ForcePlugin, PluginConfig, Target};
use crate::geometry::{HarvesterConfig, SectionModel};
use crate::modal::ScanSettings;
use crate::ode::{integrate as ode_integrate, OdeError, OdeSystem, Tolerances};
use crate::reduced::{ode_rhs, ReducedError, ReducedModel, SystemState};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Model(#[from] ReducedError),
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error("at {f_hz} Hz: {source}")]
    AtFrequency {
        f_hz: f64,
        #[source]
        source: Box<SimError>,
    },
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error("found {found} resolvable peaks, need 2")]
    TooFewPeaks { found: usize },
    #[error("curve needs at least {0} samples")]
    TooFewSamples(usize),
}

/// Integrator settings for harvester simulations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub tolerances: Tolerances,
    /// Dense-output samples per excitation period.
    pub samples_per_period: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            samples_per_period: 64,
        }
    }
}

/// Reduced model plus plugins as an [`OdeSystem`].
pub struct Harvester<'a> {
    pub model: &'a ReducedModel,
    pub plugins: &'a [ForcePlugin],
    switching: Vec<usize>,
}

impl<'a> Harvester<'a> {
    pub fn new(model: &'a ReducedModel, plugins: &'a [ForcePlugin]) -> Self {
        let dummy = vec![0.0; ReducedModel::state_len(plugins)];
        let switching = plugins
            .iter()
            .enumerate()
            .filter(|(_, p)| p.switching(Default::default(), &dummy[..p.state_len()]).is_some())
            .map(|(i, _)| i)
            .collect();
        Self {
            model,
            plugins,
            switching,
        }
    }
}

impl OdeSystem for Harvester<'_> {
    fn dim(&self) -> usize {
        ReducedModel::state_len(self.plugins)
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String> {
        ode_rhs(t, y, dy, self.model, self.plugins).map_err(|e| e.to_string())
    }

    fn event_count(&self) -> usize {
        self.switching.len()
    }

    fn events(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let mut slot = crate::reduced::CORE_STATES;
        let mut e = 0;
        for (i, p) in self.plugins.iter().enumerate() {
            let k = p.state_len();
            if self.switching.get(e) == Some(&i) {
                let tip = self.model.tip_motion(p.target(), y);
                out[e] = p.switching(tip, &y[slot..slot + k]).unwrap_or(0.0);
                e += 1;
            }
            slot += k;
        }
    }
}

/// Sampled trajectory stored as a flat row-major array.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub dim: usize,
    pub t: Vec<f64>,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.data[k * self.dim + c]).collect()
    }

    pub fn voltage(&self) -> Vec<f64> {
        self.component(4)
    }
}

/// Integrates from `state0` over `[state0.t, t_end]`, recording dense samples
/// with `t ≥ record_from`. Returns the final state, the trajectory and the
/// number of located switching events.
pub fn integrate(
    model: &ReducedModel,
    plugins: &[ForcePlugin],
    state0: &SystemState,
    t_end: f64,
    record_from: f64,
    settings: &SimSettings,
) -> Result<(SystemState, Trajectory, usize), SimError> {
    let sys = Harvester::new(model, plugins);
    let y0 = state0.to_vec();
    let period = 2.0 * PI / model.rotation;
    let dt = period / settings.samples_per_period.max(50) as f64;
    let mut traj = Trajectory {
        dim: y0.len(),
        ..Default::default()
    };
    let out = ode_integrate(&sys, state0.t, &y0, t_end, Some(dt), &settings.tolerances, |t, y| {
        if t >= record_from - 1e-9 * dt {
            traj.t.push(t);
            traj.data.extend_from_slice(y);
        }
    })?;
    Ok((SystemState::from_slice(out.t, &out.y), traj, out.events))
}

/// Steady-state voltage and power figures over a measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SteadyMetrics {
    pub v_rms: f64,
    pub v_peak: f64,
    /// W.
    pub p_mean: f64,
    /// Largest relative deviation of per-cycle RMS from the window RMS.
    pub drift: f64,
    pub steady: bool,
}

/// Metrics over the last `measure_cycles` periods of a uniformly sampled
/// voltage record (`samples_per_period` points per period).
pub fn steady_state_metrics(v: &[f64], samples_per_period: usize, measure_cycles: usize, rl: f64) -> SteadyMetrics {
    let n = samples_per_period * measure_cycles;
    if n == 0 || v.len() < n {
        return SteadyMetrics {
            steady: false,
            drift: f64::INFINITY,
            ..Default::default()
        };
    }
    // The record includes both ends of the window; drop the final duplicate.
    let end = if v.len() > n { v.len() - 1 } else { v.len() };
    let w = &v[end - n..end];
    let ms = w.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let v_rms = ms.sqrt();
    let v_peak = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut drift = 0.0f64;
    if v_rms > 0.0 {
        for c in w.chunks(samples_per_period) {
            let r = (c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).sqrt();
            drift = drift.max((r - v_rms).abs() / v_rms);
        }
    }
    SteadyMetrics {
        v_rms,
        v_peak,
        p_mean: ms / rl,
        drift,
        steady: drift <= 0.02,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub direction: Direction,
    /// Lower and upper band edges, Hz.
    pub f_low: f64,
    pub f_high: f64,
    pub step: f64,
    pub settle_cycles: usize,
    pub measure_cycles: usize,
    pub carry_state: bool,
}

impl SweepPlan {
    pub fn new(direction: Direction, f_low: f64, f_high: f64) -> Self {
        Self {
            direction,
            f_low,
            f_high,
            step: 0.05,
            settle_cycles: 200,
            measure_cycles: 20,
            carry_state: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Plan(m.to_string()));
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.f_low > 0.0 && self.f_high > self.f_low) {
            return bad("need 0 < f_low < f_high");
        }
        if self.settle_cycles < 10 {
            return bad("settle_cycles must be at least 10");
        }
        if self.measure_cycles < 5 {
            return bad("measure_cycles must be at least 5");
        }
        Ok(())
    }

    /// Drive frequencies in sweep order.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = ((self.f_high - self.f_low) / self.step + 1e-9).floor() as usize;
        let up: Vec<f64> = (0..=n).map(|k| self.f_low + k as f64 * self.step).collect();
        match self.direction {
            Direction::Up => up,
            Direction::Down => up.into_iter().rev().collect(),
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub f_hz: f64,
    pub v_rms: f64,
    pub v_peak: f64,
    /// W.
    pub p_mean: f64,
    pub steady: bool,
    /// Largest |tip displacement| of the main and auxiliary beams during the window.
    pub max_tip: [f64; 2],
    /// Largest signed tip displacement (max, min) of each beam during the window.
    pub tip_range: [[f64; 2]; 2],
    /// Switching events located during the whole step.
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub direction: Direction,
    pub samples: Vec<SweepSample>,
    pub scenario_hash: String,
    pub tolerances: Tolerances,
}

impl SweepCurve {
    pub fn csv_header() -> &'static str {
        "direction,f_hz,v_rms,v_peak,p_mean_mw,steady_flag"
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.direction.label(),
                s.f_hz,
                s.v_rms,
                s.v_peak,
                s.p_mean * 1e3,
                s.steady as u8
            ));
        }
        out
    }

    /// Samples ordered by increasing frequency.
    pub fn ascending(&self) -> Vec<SweepSample> {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| a.f_hz.total_cmp(&b.f_hz));
        s
    }
}

/// Reduced model and resolved plugins at one rotation speed.
pub type Resolved = (ReducedModel, Vec<ForcePlugin>);

/// Rotation-dependent model family with per-Ω memoisation.
pub struct ModelFamily {
    pub config: HarvesterConfig,
    pub sections: SectionModel,
    pub plugins: Vec<PluginConfig>,
    pub scan: ScanSettings,
    /// Zero Kg, Rs and Kn after assembly.
    pub linear: bool,
    cache: Mutex<HashMap<u64, Arc<Resolved>>>,
}

impl ModelFamily {
    pub fn new(config: HarvesterConfig, plugins: Vec<PluginConfig>, scan: ScanSettings) -> Result<Self, SimError> {
        let sections = crate::geometry::build_sections(&config).map_err(ReducedError::from)?;
        for p in &plugins {
            p.validate()?;
        }
        Ok(Self {
            config,
            sections,
            plugins,
            scan,
            linear: false,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn linearized(mut self) -> Self {
        self.linear = true;
        self
    }

    /// Model and resolved plugins at rotation `rotation` (rad/s).
    pub fn at(&self, rotation: f64) -> Result<Arc<Resolved>, SimError> {
        let key = rotation.to_bits();
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let mut model = ReducedModel::assemble(&self.config, &self.sections, rotation, &self.scan)?;
        if self.linear {
            model = model.linearized();
        }
        let plugins = self
            .plugins
            .iter()
            .map(|p| p.resolve(rotation, self.config.gravity))
            .collect::<Result<Vec<_>, _>>()?;
        let entry = Arc::new((model, plugins));
        self.cache.lock().expect("cache poisoned").insert(key, entry.clone());
        Ok(entry)
    }
}

/// Runs one drive frequency: settle, then measure. Returns the sample and the
/// final state.
pub fn run_frequency(
    family: &ModelFamily,
    f_hz: f64,
    state0: &SystemState,
    settle_cycles: usize,
    measure_cycles: usize,
    settings: &SimSettings,
) -> Result<(SweepSample, SystemState), SimError> {
    let rotation = 2.0 * PI * f_hz;
    let entry = family.at(rotation)?;
    let (model, plugins) = (&entry.0, &entry.1);
    let period = 1.0 / f_hz;
    let t0 = state0.t;
    let t_measure = t0 + settle_cycles as f64 * period;
    let t_end = t_measure + measure_cycles as f64 * period;
    let spp = settings.samples_per_period.max(50);
    let settings = SimSettings {
        samples_per_period: spp,
        ..*settings
    };
    let (end, traj, events) = integrate(model, plugins, state0, t_end, t_measure, &settings)?;
    let metrics = steady_state_metrics(&traj.voltage(), spp, measure_cycles, model.rl);
    let mut tip_range = [[f64::NEG_INFINITY, f64::INFINITY]; 2];
    for k in 0..traj.len() {
        let y = traj.state(k);
        for (b, target) in [Target::MainBeam, Target::AuxiliaryBeam].into_iter().enumerate() {
            let d = model.tip_motion(target, y).y;
            tip_range[b][0] = tip_range[b][0].max(d);
            tip_range[b][1] = tip_range[b][1].min(d);
        }
    }
    let max_tip = [
        tip_range[0][0].abs().max(tip_range[0][1].abs()),
        tip_range[1][0].abs().max(tip_range[1][1].abs()),
    ];
    Ok((
        SweepSample {
            f_hz,
            v_rms: metrics.v_rms,
            v_peak: metrics.v_peak,
            p_mean: metrics.p_mean,
            steady: metrics.steady,
            max_tip,
            tip_range,
            events,
        },
        end,
    ))
}

/// Stepped sweep. With `carry_state` the end state of each step seeds the
/// next one; the time origin is reset so the excitation phase is continuous.
pub fn sweep(family: &ModelFamily, plan: &SweepPlan, settings: &SimSettings) -> Result<SweepCurve, SimError> {
    plan.validate()?;
    let mut samples = Vec::new();
    let fresh = |f: f64| -> Result<SystemState, SimError> {
        let entry = family.at(2.0 * PI * f)?;
        Ok(SystemState::zero(&entry.1))
    };
    let mut state: Option<SystemState> = None;
    for f in plan.frequencies() {
        let mut start = match (&state, plan.carry_state) {
            (Some(s), true) => s.clone(),
            _ => fresh(f)?,
        };
        start.t = 0.0;
        let (sample, end) = run_frequency(family, f, &start, plan.settle_cycles, plan.measure_cycles, settings)
            .map_err(|e| SimError::AtFrequency {
                f_hz: f,
                source: Box::new(e),
            })?;
        samples.push(sample);
        state = Some(end);
    }
    Ok(SweepCurve {
        direction: plan.direction,
        samples,
        scenario_hash: String::new(),
        tolerances: settings.tolerances,
    })
}

/// Trapezoidal ∫ P df over the swept band, mW·Hz.
pub fn power_area(curve: &SweepCurve) -> Result<f64, SimError> {
    let s = curve.ascending();
    if s.len() < 2 {
        return Err(SimError::TooFewSamples(2));
    }
    Ok(trapezoid(
        &s.iter().map(|x| (x.f_hz, x.p_mean * 1e3)).collect::<Vec<_>>(),
    ))
}

/// Trapezoidal integral of `(x, y)` points sorted by x.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum()
}

/// One resonance peak and its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Interpolated peak frequency and value.
    pub f_hz: f64,
    pub value: f64,
    pub lower_hz: f64,
    pub upper_hz: f64,
    /// True if the span was cut at the curve edge.
    pub truncated: bool,
}

impl Peak {
    pub fn width(&self) -> f64 {
        self.upper_hz - self.lower_hz
    }
}

/// Vertex of the parabola through three equally spaced points.
fn parabola_peak(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let h = 0.5 * (x[2] - x[0]);
    let den = y[0] - 2.0 * y[1] + y[2];
    if den >= 0.0 || h == 0.0 {
        return (x[1], y[1]);
    }
    let off = 0.5 * (y[0] - y[2]) / den;
    let off = off.clamp(-1.0, 1.0);
    (x[1] + off * h, y[1] - 0.25 * (y[0] - y[2]) * off)
}

/// Peaks of a sampled curve `(f, value)` sorted by f, with their spans above
/// `threshold · peak`. Returns up to `count` dominant peaks in frequency
/// order; spans stop at the minimum between neighbouring peaks.
pub fn find_peaks(points: &[(f64, f64)], threshold: f64, count: usize) -> Vec<Peak> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let mut maxima: Vec<usize> = (1..n - 1)
        .filter(|&k| points[k].1 > points[k - 1].1 && points[k].1 >= points[k + 1].1)
        .collect();
    maxima.sort_by(|&a, &b| points[b].1.total_cmp(&points[a].1));
    maxima.truncate(count);
    maxima.sort_unstable();
    let mut peaks = Vec::with_capacity(maxima.len());
    for (m, &k) in maxima.iter().enumerate() {
        let left_limit = if m == 0 { 0 } else { argmin(points, maxima[m - 1], k) };
        let right_limit = if m + 1 == maxima.len() {
            n - 1
        } else {
            argmin(points, k, maxima[m + 1])
        };
        let (fp, vp) = parabola_peak(
            [points[k - 1].0, points[k].0, points[k + 1].0],
            [points[k - 1].1, points[k].1, points[k + 1].1],
        );
        let level = threshold * vp;
        let mut lo = k;
        while lo > left_limit && points[lo - 1].1 >= level {
            lo -= 1;
        }
        let lower = if lo > left_limit {
            crossing(points[lo - 1], points[lo], level)
        } else {
            points[lo].0
        };
        let mut hi = k;
        while hi < right_limit && points[hi + 1].1 >= level {
            hi += 1;
        }
        let upper = if hi < right_limit {
            crossing(points[hi], points[hi + 1], level)
        } else {
            points[hi].0
        };
        let truncated = (lo == 0 && points[0].1 >= level) || (hi == n - 1 && points[n - 1].1 >= level);
        peaks.push(Peak {
            f_hz: fp,
            value: vp,
            lower_hz: lower,
            upper_hz: upper,
            truncated,
        });
    }
    peaks
}

fn argmin(points: &[(f64, f64)], a: usize, b: usize) -> usize {
    (a..=b)
        .min_by(|&i, &j| points[i].1.total_cmp(&points[j].1))
        .unwrap_or(a)
}

fn crossing(a: (f64, f64), b: (f64, f64), level: f64) -> f64 {
    if a.1 == b.1 {
        return 0.5 * (a.0 + b.0);
    }
    a.0 + (level - a.1) * (b.0 - a.0) / (b.1 - a.1)
}

/// Bandwidth of the two dominant V_rms peaks.
pub fn bandwidth(curve: &SweepCurve, threshold_fraction: f64) -> Result<[Peak; 2], SimError> {
    let pts: Vec<(f64, f64)> = curve.ascending().iter().map(|s| (s.f_hz, s.v_rms)).collect();
    let peaks = find_peaks(&pts, threshold_fraction, 2);
    if peaks.len() < 2 {
        return Err(SimError::TooFewPeaks { found: peaks.len() });
    }
    Ok([peaks[0], peaks[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_metrics() {
        let spp = 64;
        let a = 2.5;
        let v: Vec<f64> = (0..=spp * 10)
            .map(|k| a * (2.0 * PI * k as f64 / spp as f64).sin())
            .collect();
        let m = steady_state_metrics(&v, spp, 10, 1e6);
        assert!((m.v_rms - a / 2f64.sqrt()).abs() < 1e-12);
        assert!((m.v_peak - a).abs() < 1e-12);
        assert!((m.p_mean - a * a / 2e6).abs() < 1e-18);
        assert!(m.steady);
    }

    #[test]
    fn zero_record_metrics() {
        let m = steady_state_metrics(&[0.0; 1000], 50, 10, 1e6);
        assert_eq!((m.v_rms, m.v_peak, m.p_mean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_tone_is_flagged_unsteady() {
        let spp = 50;
        let v: Vec<f64> = (0..=spp * 20)
            .map(|k| {
                let t = k as f64 / spp as f64;
                (2.0 * PI * t).sin() + 0.8 * (2.0 * PI * 1.13 * t).sin()
            })
            .collect();
        let m = steady_state_metrics(&v, spp, 20, 1.0);
        assert!(!m.steady && m.v_rms > 0.0);
    }

    fn curve(points: &[(f64, f64)]) -> SweepCurve {
        SweepCurve {
            direction: Direction::Up,
            samples: points
                .iter()
                .map(|&(f, p)| SweepSample {
                    f_hz: f,
                    v_rms: p,
                    v_peak: p,
                    p_mean: p,
                    steady: true,
                    max_tip: [0.0; 2],
                    tip_range: [[0.0; 2]; 2],
                    events: 0,
                })
                .collect(),
            scenario_hash: String::new(),
            tolerances: Tolerances::default(),
        }
    }

    #[test]
    fn constant_power_area() {
        let c = curve(&[(10.0, 1e-3), (11.0, 1e-3), (12.0, 1e-3)]);
        assert!((power_area(&c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn triangular_peak_half_width() {
        let pts: Vec<(f64, f64)> = (0..=40)
            .map(|k| {
                let f = k as f64 * 0.1;
                let a = (1.0 - (f - 1.0).abs()).max(0.0);
                let b = (1.0 - (f - 3.0).abs()).max(0.0);
                (f, a + b)
            })
            .collect();
        let peaks = find_peaks(&pts, 0.5, 2);
        assert_eq!(peaks.len(), 2);
        for p in peaks {
            assert!((p.width() - 1.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn monotone_curve_has_no_peaks() {
        let c = curve(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]);
        assert!(matches!(bandwidth(&c, 0.7), Err(SimError::TooFewPeaks { found: 0 })));
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let (x, y) = parabola_peak([1.0, 1.5, 2.0], [1.0 - 0.09, 1.0 - 0.04, 1.0 - 0.49]);
        // y = 1 − (x − 1.3)²
        assert!((x - 1.3).abs() < 1e-12 && (y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_ordering_and_validation() {
        let mut p = SweepPlan::new(Direction::Down, 10.0, 10.2);
        assert_eq!(p.frequencies().len(), 5);
        assert!(p.frequencies()[0] > p.frequencies()[4]);
        p.settle_cycles = 5;
        assert!(p.validate().is_err());
    }
}
