//! Two-mode electromechanical model.
//!
//! Each retained mode obeys
//!
//! ```text
//! η̈ + 2ζωη̇ + (ω² − Kg cos Ωt) η + (Rs − ½Ω²Kn) η³ + Kn (η η̇² + η² η̈) − θ v
//!     = F sin Ωt + Σ f_tip φ_tip
//! ```
//!
//! and the harvesting circuit obeys `Cp v̇ + v/Rl + Σ θ η̇ = 0`. The opposite
//! signs on θ make the coupling exchange energy rather than create it. Tip forces come
//! from [`ForcePlugin`]s, which may carry their own state.

use crate::forces::{ForceError, ForcePlugin, Target, TipMotion};
use crate::geometry::{CouplingForm, GeometryError, HarvesterConfig, SectionModel};
use crate::modal::{solve_modes, ModalError, ModeSet, ModeShape, ScanSettings};
use crate::quadrature::GaussLegendre;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReducedError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Modal(#[from] ModalError),
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error("the reduced model needs two modes, got {0}")]
    ModeCount(usize),
}

/// Projected coefficients of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeCoefficients {
    /// Generalised mass including rotary inertia.
    pub mb: f64,
    /// Generalised mass without rotary inertia (the part that feels Ω²).
    pub mb_translational: f64,
    pub kb: f64,
    /// Centrifugal stiffness per Ω².
    pub ks: f64,
    pub kg: f64,
    pub rs: f64,
    pub kn: f64,
    pub force: f64,
}

impl ModeCoefficients {
    /// ω² implied by the stiffness and mass terms at rotation `rotation`.
    pub fn frequency_squared(&self, rotation: f64) -> f64 {
        let w2 = rotation * rotation;
        (self.kb + w2 * (self.ks - self.mb_translational)) / self.mb
    }
}

/// Coefficients of the retained modes plus cross-mode diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub modes: Vec<ModeCoefficients>,
    /// `(name, |X₁₂| / √|X₁₁ X₂₂|)` for the bilinear forms.
    pub off_diagonal: Vec<(&'static str, f64)>,
}

impl CoefficientTable {
    /// Off-diagonal ratios above 5 %, as human-readable warnings.
    pub fn warnings(&self) -> Vec<String> {
        self.off_diagonal
            .iter()
            .filter(|(_, r)| *r > 0.05)
            .map(|(n, r)| format!("off-diagonal {n} coupling is {:.1}% of the diagonal", 100.0 * r))
            .collect()
    }
}

struct SectionTerms<'a> {
    sections: &'a SectionModel,
    rule: &'a GaussLegendre,
}

impl SectionTerms<'_> {
    fn mass(&self, a: &ModeShape, b: &ModeShape, rotary: bool) -> f64 {
        let mut total = 0.0;
        for (i, s) in self.sections.sections.iter().enumerate() {
            total += s.linear_density * self.rule.integrate(0.0, s.length, |x| a.value(i, x) * b.value(i, x));
            let (ea, eb) = (a.eval(i, s.length), b.eval(i, s.length));
            total += s.tip_mass * ea[0] * eb[0];
            if rotary {
                total += s.tip_inertia * ea[1] * eb[1];
            }
        }
        total
    }

    fn bending(&self, a: &ModeShape, b: &ModeShape) -> f64 {
        self.sections
            .sections
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.bending_stiffness
                    * self
                        .rule
                        .integrate(0.0, s.length, |x| a.eval(i, x)[2] * b.eval(i, x)[2])
            })
            .sum()
    }

    /// Σ ∫ load_i(x) a' b' over all sections.
    fn axial<F: Fn(usize, f64) -> f64>(&self, a: &ModeShape, b: &ModeShape, load: F) -> f64 {
        self.sections
            .sections
            .iter()
            .enumerate()
            .map(|(i, s)| {
                self.rule
                    .integrate(0.0, s.length, |x| load(i, x) * a.slope(i, x) * b.slope(i, x))
            })
            .sum()
    }

    fn cubic_stiffness(&self, a: &ModeShape) -> f64 {
        self.sections
            .sections
            .iter()
            .enumerate()
            .map(|(i, s)| {
                2.0 * s.bending_stiffness
                    * self.rule.integrate(0.0, s.length, |x| {
                        let e = a.eval(i, x);
                        e[1] * e[1] * e[2] * e[2]
                    })
            })
            .sum()
    }

    /// Σ [∫ m U² + Mt U(L)²] with U(x) = ∫₀ˣ φ'².
    fn inertia_nonlinearity(&self, a: &ModeShape) -> f64 {
        self.sections
            .sections
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let stretch = |x: f64| self.rule.integrate(0.0, x, |t| a.slope(i, t).powi(2));
                let distributed = self.rule.integrate(0.0, s.length, |x| stretch(x).powi(2));
                s.linear_density * distributed + s.tip_mass * stretch(s.length).powi(2)
            })
            .sum()
    }

    fn gravity_forcing(&self, a: &ModeShape) -> f64 {
        let signs = self.sections.transverse_signs();
        self.sections
            .sections
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let dist = s.linear_density * self.rule.integrate(0.0, s.length, |x| a.value(i, x));
                signs[i] * (dist + s.tip_mass * a.tip(i))
            })
            .sum::<f64>()
            * self.sections.gravity
    }
}

fn cross_ratio(m: [[f64; 2]; 2]) -> f64 {
    let d = (m[0][0] * m[1][1]).abs().sqrt();
    if d == 0.0 {
        0.0
    } else {
        m[0][1].abs() / d
    }
}

/// Projects the section model onto the mass-normalised modes.
pub fn modal_coefficients(modes: &ModeSet, sections: &SectionModel) -> CoefficientTable {
    let terms = SectionTerms {
        sections,
        rule: GaussLegendre::standard(),
    };
    let fc_bar = sections.rms_centrifugal();
    let centrifugal = |i: usize, _x: f64| fc_bar[i];
    let gravity = |i: usize, x: f64| sections.axial_gravity(i, x);
    let w2 = modes.rotation * modes.rotation;
    let shapes = &modes.shapes;

    let out: Vec<ModeCoefficients> = shapes
        .iter()
        .map(|s| ModeCoefficients {
            mb: terms.mass(s, s, true),
            mb_translational: terms.mass(s, s, false),
            kb: terms.bending(s, s),
            ks: terms.axial(s, s, centrifugal),
            kg: terms.axial(s, s, gravity),
            rs: terms.cubic_stiffness(s),
            kn: terms.inertia_nonlinearity(s),
            force: terms.gravity_forcing(s),
        })
        .collect();

    let mut off_diagonal = Vec::new();
    if shapes.len() >= 2 {
        let pair = |f: &dyn Fn(&ModeShape, &ModeShape) -> f64| {
            let m01 = f(&shapes[0], &shapes[1]);
            [[f(&shapes[0], &shapes[0]), m01], [m01, f(&shapes[1], &shapes[1])]]
        };
        let mass = pair(&|a, b| terms.mass(a, b, true));
        let stiffness =
            pair(&|a, b| terms.bending(a, b) + w2 * (terms.axial(a, b, centrifugal) - terms.mass(a, b, false)));
        let kg = pair(&|a, b| terms.axial(a, b, gravity));
        off_diagonal = vec![
            ("mass", cross_ratio(mass)),
            ("stiffness", cross_ratio(stiffness)),
            ("gravity", cross_ratio(kg)),
        ];
    }
    CoefficientTable {
        modes: out,
        off_diagonal,
    }
}

/// Electromechanical coupling of each mode.
pub fn coupling_coefficient(modes: &ModeSet, sections: &SectionModel, config: &HarvesterConfig) -> Vec<f64> {
    let e31 = config.d31 * config.pzt_modulus;
    let lever = -e31 * config.pzt_width * (sections.h_c.powi(2) - sections.h_b.powi(2)) / (2.0 * config.pzt_thickness);
    let p = sections.patch_section;
    let start = config.pzt_offset;
    let end = config.pzt_offset + config.pzt_length;
    modes
        .shapes
        .iter()
        .map(|s| {
            let slope = match config.layup.coupling_form {
                CouplingForm::SlopeDifference => s.slope(p, end) - s.slope(p, start),
                CouplingForm::Point => s.slope(p, end),
            };
            lever * slope
        })
        .collect()
}

/// Everything the equations of motion need for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeTerms {
    pub omega: f64,
    pub zeta: f64,
    pub kg: f64,
    pub rs: f64,
    pub kn: f64,
    pub force: f64,
    pub theta: f64,
    /// φ at the main-beam tip.
    pub tip_main: f64,
    /// φ at the auxiliary-beam tip.
    pub tip_aux: f64,
}

impl ModeTerms {
    pub fn tip(&self, target: Target) -> f64 {
        match target {
            Target::MainBeam => self.tip_main,
            Target::AuxiliaryBeam => self.tip_aux,
        }
    }
}

/// Coefficients of the two-mode equations at one rotation speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub rotation: f64,
    pub modes: [ModeTerms; 2],
    pub cp: f64,
    pub rl: f64,
    pub coefficients: CoefficientTable,
}

/// Index of the first state slot after the core states.
pub const CORE_STATES: usize = 5;

impl ReducedModel {
    /// Solves the eigenproblem at `rotation` and projects onto two modes.
    pub fn assemble(
        config: &HarvesterConfig,
        sections: &SectionModel,
        rotation: f64,
        scan: &ScanSettings,
    ) -> Result<Self, ReducedError> {
        let set = solve_modes(sections, rotation, 2, scan)?;
        Self::from_modes(config, sections, &set)
    }

    pub fn from_modes(config: &HarvesterConfig, sections: &SectionModel, set: &ModeSet) -> Result<Self, ReducedError> {
        if set.len() != 2 {
            return Err(ReducedError::ModeCount(set.len()));
        }
        let table = modal_coefficients(set, sections);
        let theta = coupling_coefficient(set, sections, config);
        let n = sections.len();
        let (main, aux) = (n.saturating_sub(2), n - 1);
        let modes = std::array::from_fn(|j| {
            let c = &table.modes[j];
            ModeTerms {
                omega: set.frequencies[j],
                zeta: config.damping[j],
                kg: c.kg,
                rs: c.rs,
                kn: c.kn,
                force: c.force,
                theta: theta[j],
                tip_main: set.shapes[j].tip(main),
                tip_aux: set.shapes[j].tip(aux),
            }
        });
        Ok(Self {
            rotation: set.rotation,
            modes,
            cp: config.capacitance,
            rl: config.load_resistance,
            coefficients: table,
        })
    }

    /// Copy with Kg, Rs and Kn zeroed.
    pub fn linearized(&self) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.kg = 0.0;
            m.rs = 0.0;
            m.kn = 0.0;
        }
        out
    }

    /// Transverse tip motion of `target` for modal displacements and velocities.
    pub fn tip_motion(&self, target: Target, y: &[f64]) -> TipMotion {
        let (a, b) = (self.modes[0].tip(target), self.modes[1].tip(target));
        TipMotion {
            y: a * y[0] + b * y[1],
            v: a * y[2] + b * y[3],
        }
    }

    /// Mechanical plus electrical energy of the core states (gravity and
    /// plugin potentials excluded).
    pub fn energy(&self, y: &[f64]) -> f64 {
        let w2 = self.rotation * self.rotation;
        let mut e = 0.5 * self.cp * y[4] * y[4];
        for (j, m) in self.modes.iter().enumerate() {
            let (eta, rate) = (y[j], y[2 + j]);
            e += 0.5 * (1.0 + m.kn * eta * eta) * rate * rate
                + 0.5 * m.omega * m.omega * eta * eta
                + 0.25 * (m.rs - 0.5 * w2 * m.kn) * eta.powi(4);
        }
        e
    }

    /// Instantaneous power removed by modal damping and the load.
    pub fn dissipation(&self, y: &[f64]) -> f64 {
        let mut p = y[4] * y[4] / self.rl;
        for (j, m) in self.modes.iter().enumerate() {
            p += 2.0 * m.zeta * m.omega * y[2 + j] * y[2 + j];
        }
        p
    }

    /// Total number of states with the given plugins attached.
    pub fn state_len(plugins: &[ForcePlugin]) -> usize {
        CORE_STATES + plugins.iter().map(ForcePlugin::state_len).sum::<usize>()
    }

    /// Coefficient table as CSV.
    pub fn csv_report(&self) -> String {
        let mut out = String::from("mode,omega_rad_s,f_hz,zeta,mb,kb,ks,kg,rs,kn,force,theta,tip_main,tip_aux\n");
        for (j, m) in self.modes.iter().enumerate() {
            let c = self.coefficients.modes[j];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                j + 1,
                m.omega,
                m.omega / (2.0 * std::f64::consts::PI),
                m.zeta,
                c.mb,
                c.kb,
                c.ks,
                c.kg,
                c.rs,
                c.kn,
                c.force,
                m.theta,
                m.tip_main,
                m.tip_aux
            ));
        }
        out
    }
}

/// Named view of a state vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemState {
    pub t: f64,
    pub eta: [f64; 2],
    pub eta_dot: [f64; 2],
    pub v: f64,
    /// Plugin states in plugin order (η_st, η̇_st for each stopper).
    pub extra: Vec<f64>,
}

impl SystemState {
    /// All-zero state sized for `plugins`.
    pub fn zero(plugins: &[ForcePlugin]) -> Self {
        Self {
            extra: vec![0.0; ReducedModel::state_len(plugins) - CORE_STATES],
            ..Default::default()
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![self.eta[0], self.eta[1], self.eta_dot[0], self.eta_dot[1], self.v];
        y.extend_from_slice(&self.extra);
        y
    }

    pub fn from_slice(t: f64, y: &[f64]) -> Self {
        Self {
            t,
            eta: [y[0], y[1]],
            eta_dot: [y[2], y[3]],
            v: y[4],
            extra: y[CORE_STATES..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Stopper coordinates, if a stopper is attached first among stateful plugins.
    pub fn stopper(&self) -> Option<[f64; 2]> {
        (self.extra.len() >= 2).then(|| [self.extra[0], self.extra[1]])
    }
}

/// Time derivative of the state vector `y` at time `t`.
pub fn ode_rhs(
    t: f64,
    y: &[f64],
    dy: &mut [f64],
    model: &ReducedModel,
    plugins: &[ForcePlugin],
) -> Result<(), ForceError> {
    let rot = model.rotation;
    let (s, c) = (rot * t).sin_cos();
    let v = y[4];
    let mut generalised = [0.0; 2];
    let mut slot = CORE_STATES;
    for p in plugins {
        let tip = model.tip_motion(p.target(), y);
        let k = p.state_len();
        let load = p.load(t, rot, tip, &y[slot..slot + k])?;
        if k == 2 {
            dy[slot] = y[slot + 1];
            dy[slot + 1] = load.own_accel;
        }
        for (j, m) in model.modes.iter().enumerate() {
            generalised[j] += load.tip_force * m.tip(p.target());
        }
        slot += k;
    }
    let mut current = v / model.rl;
    for (j, m) in model.modes.iter().enumerate() {
        let (eta, rate) = (y[j], y[2 + j]);
        let numerator = m.force * s
            - 2.0 * m.zeta * m.omega * rate
            - (m.omega * m.omega - m.kg * c) * eta
            - (m.rs - 0.5 * rot * rot * m.kn) * eta.powi(3)
            - m.kn * eta * rate * rate
            + m.theta * v
            + generalised[j];
        dy[j] = rate;
        dy[2 + j] = numerator / (1.0 + m.kn * eta * eta);
        current += m.theta * rate;
    }
    dy[4] = -current / model.cp;
    Ok(())
}

/// [`ode_rhs`] on a [`SystemState`].
pub fn state_derivative(
    state: &SystemState,
    model: &ReducedModel,
    plugins: &[ForcePlugin],
) -> Result<SystemState, ForceError> {
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    ode_rhs(state.t, &y, &mut dy, model, plugins)?;
    Ok(SystemState::from_slice(state.t, &dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sections;
    use std::f64::consts::PI;

    fn prototype(rotation: f64) -> (HarvesterConfig, SectionModel, ReducedModel) {
        let cfg = HarvesterConfig::prototype();
        let s = build_sections(&cfg).unwrap();
        let m = ReducedModel::assemble(&cfg, &s, rotation, &ScanSettings::default()).unwrap();
        (cfg, s, m)
    }

    #[test]
    fn generalised_mass_is_unity() {
        let (_, _, m) = prototype(2.0 * PI * 10.0);
        for c in &m.coefficients.modes {
            assert!((c.mb - 1.0).abs() < 1e-6, "{}", c.mb);
        }
    }

    #[test]
    fn frequency_identity_matches_eigen_solver() {
        for f in [0.0, 5.0, 12.0] {
            let (_, _, m) = prototype(2.0 * PI * f);
            for (j, c) in m.coefficients.modes.iter().enumerate() {
                let w2 = m.modes[j].omega.powi(2);
                let rel = (c.frequency_squared(m.rotation) - w2).abs() / w2;
                assert!(rel < 1e-4, "f={f} mode {j}: {rel}");
            }
        }
    }

    #[test]
    fn gravity_terms_vanish_without_gravity() {
        let mut cfg = HarvesterConfig::prototype();
        cfg.gravity = 0.0;
        let s = build_sections(&cfg).unwrap();
        let m = ReducedModel::assemble(&cfg, &s, 30.0, &ScanSettings::default()).unwrap();
        for t in &m.modes {
            assert_eq!(t.kg, 0.0);
            assert_eq!(t.force, 0.0);
        }
    }

    #[test]
    fn nonlinear_coefficients_are_non_negative() {
        let (_, _, m) = prototype(2.0 * PI * 8.0);
        for t in &m.modes {
            assert!(t.rs >= 0.0 && t.kn >= 0.0);
            assert!(t.rs > 0.0 && t.kn > 0.0);
        }
    }

    #[test]
    fn coupling_vanishes_with_d31_and_flips_with_poling() {
        let (cfg, s, m) = prototype(2.0 * PI * 10.0);
        let set = solve_modes(&s, m.rotation, 2, &ScanSettings::default()).unwrap();
        let theta = coupling_coefficient(&set, &s, &cfg);
        assert!(theta.iter().all(|t| t.is_finite() && *t != 0.0));
        let mut flipped = cfg.clone();
        flipped.d31 = -cfg.d31;
        let back = coupling_coefficient(&set, &s, &flipped);
        assert_eq!(back[0], -theta[0]);
        flipped.d31 = 0.0;
        assert!(coupling_coefficient(&set, &s, &flipped).iter().all(|t| *t == 0.0));
    }

    #[test]
    fn zero_state_has_zero_derivative() {
        let (_, _, m) = prototype(2.0 * PI * 10.0);
        let d = state_derivative(&SystemState::default(), &m, &[]).unwrap();
        assert_eq!(d.to_vec(), vec![0.0; 5]);
    }

    #[test]
    fn energy_rate_matches_dissipation_in_free_decay() {
        let (_, _, mut m) = prototype(2.0 * PI * 10.0);
        for t in &mut m.modes {
            t.kg = 0.0;
            t.force = 0.0;
        }
        let y = [0.02, -0.01, 0.3, 0.5, 1.5];
        let mut dy = [0.0; 5];
        ode_rhs(0.3, &y, &mut dy, &m, &[]).unwrap();
        let h = 1e-8;
        let mut yp = y;
        let mut ym = y;
        for k in 0..5 {
            yp[k] += h * dy[k];
            ym[k] -= h * dy[k];
        }
        let rate = (m.energy(&yp) - m.energy(&ym)) / (2.0 * h);
        let diss = m.dissipation(&y);
        assert!((rate + diss).abs() < 1e-6 * diss, "{rate} vs {diss}");
    }

    #[test]
    fn null_plugin_is_bitwise_neutral() {
        let (_, _, m) = prototype(2.0 * PI * 10.0);
        let y = [0.01, 0.002, -0.1, 0.2, 0.7];
        let mut a = [0.0; 5];
        let mut b = [0.0; 5];
        ode_rhs(0.1, &y, &mut a, &m, &[]).unwrap();
        ode_rhs(0.1, &y, &mut b, &m, &[ForcePlugin::Null(Target::MainBeam)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_report_has_two_rows() {
        let (_, _, m) = prototype(2.0 * PI * 10.0);
        assert_eq!(m.csv_report().lines().count(), 3);
    }
}
