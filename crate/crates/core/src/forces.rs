//! External force plugins acting at a beam tip: a cantilever stopper that
//! engages through a one-sided spring-damper, and the force between two
//! uniformly magnetised cuboids.
//!
//! Tip quantities are expressed in the transverse frame of the section that
//! carries the tip. The folded auxiliary beam therefore sees "above" and
//! "below" swapped relative to the main beam.

use crate::geometry::{Orientation, Section, SectionModel};
use crate::modal::{mode_shapes, ModalError, ModalProblem, ScanSettings};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Vacuum permeability, H/m.
pub const MU_0: f64 = 4.0e-7 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("magnets overlap at offset ({alpha}, {beta}, {gamma}) m")]
    Overlap { alpha: f64, beta: f64, gamma: f64 },
    #[error(transparent)]
    Modal(#[from] ModalError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ForceError {
    ForceError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Which beam tip a plugin acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    MainBeam,
    AuxiliaryBeam,
}

/// Side of the beam tip, in the tip's own frame, on which the stopper sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactSide {
    /// Contact when y_rel ≤ −d.
    Below,
    /// Contact when y_rel ≥ d.
    Above,
}

impl Target {
    pub fn default_contact_side(self) -> ContactSide {
        match self {
            Target::MainBeam => ContactSide::Below,
            Target::AuxiliaryBeam => ContactSide::Above,
        }
    }

    /// Transverse orientation of the tip relative to the clamp frame.
    pub fn frame_sign(self) -> f64 {
        match self {
            Target::MainBeam => 1.0,
            Target::AuxiliaryBeam => -1.0,
        }
    }
}

/// Transverse displacement and velocity of a beam tip.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TipMotion {
    pub y: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopperConfig {
    pub target: Target,
    pub side: ContactSide,
    pub gap: f64,
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub modulus: f64,
    pub density: f64,
    pub tip_mass: f64,
    pub damping: f64,
    pub radius: f64,
}

impl StopperConfig {
    /// Stopper A (main beam).
    pub fn main_beam(gap: f64) -> Self {
        Self {
            target: Target::MainBeam,
            side: ContactSide::Below,
            gap,
            length: 0.070,
            width: 0.020,
            thickness: 0.001,
            modulus: 193e9,
            density: 7930.0,
            tip_mass: 2.92e-3,
            damping: 0.05,
            radius: 0.090,
        }
    }

    /// Stopper B (auxiliary beam).
    pub fn auxiliary_beam(gap: f64) -> Self {
        Self {
            target: Target::AuxiliaryBeam,
            side: ContactSide::Above,
            length: 0.055,
            tip_mass: 1.05e-3,
            radius: 0.060,
            ..Self::main_beam(gap)
        }
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        let positive = [
            ("gap", self.gap),
            ("length", self.length),
            ("width", self.width),
            ("thickness", self.thickness),
            ("modulus", self.modulus),
            ("density", self.density),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.tip_mass >= 0.0) {
            return Err(invalid("tip_mass", "must be non-negative"));
        }
        if !(self.radius >= 0.0) {
            return Err(invalid("radius", "must be non-negative"));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(invalid("damping", format!("must lie in (0, 1), got {}", self.damping)));
        }
        Ok(())
    }

    fn section(&self) -> Section {
        Section {
            length: self.length,
            linear_density: self.density * self.width * self.thickness,
            bending_stiffness: self.modulus * self.width * self.thickness.powi(3) / 12.0,
            radius: self.radius,
            orientation: Orientation::Outward,
            tip_mass: self.tip_mass,
            tip_inertia: 0.0,
        }
    }
}

/// Single-mode reduction of a stopper at one rotation speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopperModal {
    pub omega: f64,
    /// Mass-normalised tip deflection.
    pub tip_shape: f64,
    /// Modal gravity forcing amplitude, expressed in the target's frame.
    pub forcing: f64,
}

/// First mode of the rotating stopper cantilever.
pub fn stopper_modal(cfg: &StopperConfig, rotation: f64, gravity: f64) -> Result<StopperModal, ForceError> {
    cfg.validate()?;
    let model = SectionModel::straight_chain(vec![cfg.section()], gravity);
    let problem = ModalProblem::new(&model, rotation);
    let scan = ScanSettings {
        step_hz: 0.1,
        ceiling_hz: 20_000.0,
        ..Default::default()
    };
    let w = problem.natural_frequencies(1, &scan)?;
    let set = mode_shapes(&problem, &w)?;
    let shape = &set.shapes[0];
    let s = &model.sections[0];
    let integral = crate::quadrature::GaussLegendre::standard().integrate(0.0, s.length, |x| shape.value(0, x));
    let tip = shape.tip(0);
    Ok(StopperModal {
        omega: w[0],
        tip_shape: tip,
        forcing: cfg.target.frame_sign() * gravity * (s.linear_density * integral + s.tip_mass * tip),
    })
}

/// A stopper resolved at one rotation speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Stopper {
    pub config: StopperConfig,
    pub modal: StopperModal,
}

impl Stopper {
    pub fn resolve(config: &StopperConfig, rotation: f64, gravity: f64) -> Result<Self, ForceError> {
        Ok(Self {
            config: config.clone(),
            modal: stopper_modal(config, rotation, gravity)?,
        })
    }

    /// Contact stiffness ω_st²/φ_st².
    pub fn stiffness(&self) -> f64 {
        let phi = self.modal.tip_shape;
        self.modal.omega * self.modal.omega / (phi * phi)
    }

    /// Contact damping 2ζ_st ω_st/φ_st².
    pub fn damping(&self) -> f64 {
        let phi = self.modal.tip_shape;
        2.0 * self.config.damping * self.modal.omega / (phi * phi)
    }

    /// Beam tip displacement relative to the stopper tip.
    pub fn relative(&self, beam: TipMotion, own: [f64; 2]) -> TipMotion {
        let phi = self.modal.tip_shape;
        TipMotion {
            y: beam.y - phi * own[0],
            v: beam.v - phi * own[1],
        }
    }

    /// Zero on the contact boundary, positive when engaged.
    pub fn engagement(&self, beam: TipMotion, own: [f64; 2]) -> f64 {
        let y = self.relative(beam, own).y;
        match self.config.side {
            ContactSide::Below => -self.config.gap - y,
            ContactSide::Above => y - self.config.gap,
        }
    }
}

/// Penalty force between a beam tip and a stopper tip.
///
/// Returns `F_imp`; the beam tip receives `−F_imp` and the stopper tip
/// `+F_imp`. Zero unless the relative displacement has closed the gap.
pub fn impact_force(stopper: &Stopper, beam: TipMotion, own: [f64; 2]) -> f64 {
    if stopper.engagement(beam, own) < 0.0 {
        return 0.0;
    }
    let rel = stopper.relative(beam, own);
    let offset = match stopper.config.side {
        ContactSide::Below => rel.y + stopper.config.gap,
        ContactSide::Above => rel.y - stopper.config.gap,
    };
    stopper.damping() * rel.v + stopper.stiffness() * offset
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Attracting,
    Repelling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnetConfig {
    pub target: Target,
    /// Edges (x, y, z) of the magnet carried by the beam.
    pub moving_edges: [f64; 3],
    /// Edges (x, y, z) of the fixed magnet.
    pub fixed_edges: [f64; 3],
    pub moving_remanence: f64,
    pub fixed_remanence: f64,
    /// Centre-to-centre distance along z at rest.
    pub gap: f64,
    pub polarity: Polarity,
    /// +1 if positive tip deflection (tip frame) opens the gap, −1 if it closes it.
    pub opening_sign: f64,
}

impl MagnetConfig {
    pub fn main_beam(gap: f64) -> Self {
        Self {
            target: Target::MainBeam,
            moving_edges: [0.004; 3],
            fixed_edges: [0.005; 3],
            moving_remanence: 1.2,
            fixed_remanence: 1.2,
            gap,
            polarity: Polarity::Repelling,
            opening_sign: 1.0,
        }
    }

    pub fn auxiliary_beam(gap: f64) -> Self {
        Self {
            target: Target::AuxiliaryBeam,
            opening_sign: -1.0,
            ..Self::main_beam(gap)
        }
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        for (field, edges) in [("moving_edges", self.moving_edges), ("fixed_edges", self.fixed_edges)] {
            if edges.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(invalid(field, "edges must be positive"));
            }
        }
        if !(self.moving_remanence >= 0.0 && self.fixed_remanence >= 0.0) {
            return Err(invalid("remanence", "must be non-negative"));
        }
        if !(self.gap > 0.0) {
            return Err(invalid("gap", "must be positive"));
        }
        if self.opening_sign.abs() != 1.0 {
            return Err(invalid("opening_sign", "must be +1 or -1"));
        }
        Ok(())
    }

    /// Offsets (α, β, γ) of the moving magnet for a tip deflection `y`.
    pub fn offsets(&self, y: f64) -> [f64; 3] {
        [0.0, 0.0, self.gap + self.opening_sign * y]
    }

    fn signed_product(&self) -> f64 {
        let b = self.moving_remanence * self.fixed_remanence;
        match self.polarity {
            Polarity::Repelling => b,
            Polarity::Attracting => -b,
        }
    }
}

/// Offsets (α, β, γ) for a given beam tip state.
pub fn magnet_gap_kinematics(cfg: &MagnetConfig, tip: TipMotion) -> [f64; 3] {
    cfg.offsets(tip.y)
}

/// `x·ln(r − u)` with `r − u` rewritten as `(r² − u²)/(r + u)` for `u > 0`.
fn x_ln_r_minus(coeff: f64, r: f64, u: f64, rest_sq: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    let d = if u > 0.0 { rest_sq / (r + u) } else { r - u };
    coeff * d.ln()
}

fn x_atan(coeff: f64, num: f64, den: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    coeff * (num / den).atan()
}

/// Force kernels (φx, φy, φz) at one corner combination.
fn kernels(u: f64, v: f64, w: f64) -> [f64; 3] {
    let (u2, v2, w2) = (u * u, v * v, w * w);
    let r = (u2 + v2 + w2).sqrt();
    let ln_u = |c: f64| x_ln_r_minus(c, r, u, v2 + w2);
    let ln_v = |c: f64| x_ln_r_minus(c, r, v, u2 + w2);
    let at = |c: f64| x_atan(c, u * v, w * r);
    [
        ln_u(0.5 * (v2 - w2)) + ln_v(u * v) + at(v * w) + 0.5 * r * u,
        ln_v(0.5 * (u2 - w2)) + ln_u(u * v) + at(u * w) + 0.5 * r * v,
        ln_u(-u * w) + ln_v(-v * w) + at(u * v) - r * w,
    ]
}

/// Force on the moving magnet at offset (α, β, γ) from the fixed one, by the
/// 64-term corner sum for uniformly magnetised cuboids with parallel z
/// magnetisation. Positive `Fz` pushes the moving magnet towards larger γ.
pub fn magnet_force(cfg: &MagnetConfig, offsets: [f64; 3]) -> Result<[f64; 3], ForceError> {
    let [alpha, beta, gamma] = offsets;
    let [a1, b1, c1] = cfg.moving_edges;
    let [a2, b2, c2] = cfg.fixed_edges;
    if alpha.abs() < 0.5 * (a1 + a2) && beta.abs() < 0.5 * (b1 + b2) && gamma.abs() < 0.5 * (c1 + c2) {
        return Err(ForceError::Overlap { alpha, beta, gamma });
    }
    let sgn = |k: u32| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut f = [0.0; 3];
    for i in 0..2 {
        for j in 0..2 {
            let u = alpha + sgn(j) * 0.5 * a1 - sgn(i) * 0.5 * a2;
            for k in 0..2 {
                for l in 0..2 {
                    let v = beta + sgn(l) * 0.5 * b1 - sgn(k) * 0.5 * b2;
                    for m in 0..2 {
                        for n in 0..2 {
                            let w = gamma + sgn(n) * 0.5 * c1 - sgn(m) * 0.5 * c2;
                            let s = sgn(i + j + k + l + m + n);
                            let phi = kernels(u, v, w);
                            for d in 0..3 {
                                f[d] += s * phi[d];
                            }
                        }
                    }
                }
            }
        }
    }
    // The corner sum is the reaction on the fixed magnet.
    let scale = -cfg.signed_product() / (4.0 * PI * MU_0);
    Ok([scale * f[0], scale * f[1], scale * f[2]])
}

/// Transverse force on the beam tip from the magnet pair, tip frame.
pub fn magnet_tip_force(cfg: &MagnetConfig, tip: TipMotion) -> Result<f64, ForceError> {
    let f = magnet_force(cfg, magnet_gap_kinematics(cfg, tip))?;
    Ok(cfg.opening_sign * f[2])
}

/// Plugin settings as configured, independent of rotation speed.
#[derive(Debug, Clone, PartialEq)]
pub enum PluginConfig {
    Stopper(StopperConfig),
    Magnet(MagnetConfig),
}

impl PluginConfig {
    pub fn target(&self) -> Target {
        match self {
            PluginConfig::Stopper(s) => s.target,
            PluginConfig::Magnet(m) => m.target,
        }
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        match self {
            PluginConfig::Stopper(s) => s.validate(),
            PluginConfig::Magnet(m) => m.validate(),
        }
    }

    pub fn resolve(&self, rotation: f64, gravity: f64) -> Result<ForcePlugin, ForceError> {
        Ok(match self {
            PluginConfig::Stopper(s) => ForcePlugin::Stopper(Stopper::resolve(s, rotation, gravity)?),
            PluginConfig::Magnet(m) => ForcePlugin::Magnet(m.clone()),
        })
    }
}

/// A plugin ready for time integration at one rotation speed.
#[derive(Debug, Clone, PartialEq)]
pub enum ForcePlugin {
    Stopper(Stopper),
    Magnet(MagnetConfig),
    /// Contributes nothing; placeholder with the plugin interface.
    Null(Target),
}

/// Result of evaluating a plugin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PluginLoad {
    /// Transverse force on the beam tip, tip frame.
    pub tip_force: f64,
    /// Accelerations of the plugin's own coordinates (stopper only).
    pub own_accel: f64,
}

impl ForcePlugin {
    pub fn target(&self) -> Target {
        match self {
            ForcePlugin::Stopper(s) => s.config.target,
            ForcePlugin::Magnet(m) => m.target,
            ForcePlugin::Null(t) => *t,
        }
    }

    /// Number of extra state variables the plugin carries.
    pub fn state_len(&self) -> usize {
        match self {
            ForcePlugin::Stopper(_) => 2,
            _ => 0,
        }
    }

    /// Evaluates the plugin; `own` holds its extra states.
    pub fn load(&self, t: f64, rotation: f64, tip: TipMotion, own: &[f64]) -> Result<PluginLoad, ForceError> {
        Ok(match self {
            ForcePlugin::Stopper(s) => {
                let state = [own[0], own[1]];
                let f = impact_force(s, tip, state);
                let m = &s.modal;
                let accel = m.forcing * (rotation * t).sin()
                    - 2.0 * s.config.damping * m.omega * state[1]
                    - m.omega * m.omega * state[0]
                    + f * m.tip_shape;
                PluginLoad {
                    tip_force: -f,
                    own_accel: accel,
                }
            }
            ForcePlugin::Magnet(m) => PluginLoad {
                tip_force: magnet_tip_force(m, tip)?,
                own_accel: 0.0,
            },
            ForcePlugin::Null(_) => PluginLoad::default(),
        })
    }

    /// Switching function whose sign change marks a discontinuity in the
    /// force law, if the plugin has one.
    pub fn switching(&self, tip: TipMotion, own: &[f64]) -> Option<f64> {
        match self {
            ForcePlugin::Stopper(s) => Some(s.engagement(tip, [own[0], own[1]])),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stopper(gap: f64) -> Stopper {
        Stopper::resolve(&StopperConfig::main_beam(gap), 0.0, 9.81).unwrap()
    }

    #[test]
    fn massless_tip_stopper_matches_cantilever_eigenvalue() {
        let mut cfg = StopperConfig::main_beam(0.01);
        cfg.tip_mass = 0.0;
        let m = stopper_modal(&cfg, 0.0, 9.81).unwrap();
        let s = cfg.section();
        let beta_l = (m.omega * s.length.powi(2) * (s.linear_density / s.bending_stiffness).sqrt()).sqrt();
        assert!((beta_l - 1.8751).abs() / 1.8751 < 1e-3, "{beta_l}");
    }

    #[test]
    fn doubling_thickness_doubles_frequency_without_tip_mass() {
        let mut cfg = StopperConfig::main_beam(0.01);
        cfg.tip_mass = 0.0;
        let w1 = stopper_modal(&cfg, 0.0, 9.81).unwrap().omega;
        cfg.thickness *= 2.0;
        let w2 = stopper_modal(&cfg, 0.0, 9.81).unwrap().omega;
        assert!((w2 / w1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn stopper_is_much_stiffer_than_harvester() {
        let s = stopper(0.01);
        assert!(s.modal.omega.is_finite());
        assert!(s.modal.omega > 2.0 * PI * 40.0, "{}", s.modal.omega / (2.0 * PI));
        assert!(s.modal.tip_shape > 0.0);
    }

    #[test]
    fn no_force_inside_gap() {
        let s = stopper(0.0144);
        let f = impact_force(&s, TipMotion { y: -0.01, v: 3.0 }, [0.0, 0.0]);
        assert_eq!(f, 0.0);
        let f = impact_force(&s, TipMotion { y: 0.05, v: -3.0 }, [0.0, 0.0]);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn touching_with_matched_velocity_gives_zero_force() {
        let s = stopper(0.0144);
        let own = [0.001, 0.2];
        let phi = s.modal.tip_shape;
        let beam = TipMotion {
            y: -0.0144 + phi * own[0],
            v: phi * own[1],
        };
        assert!(impact_force(&s, beam, own).abs() < 1e-9);
    }

    #[test]
    fn static_overlap_is_pure_spring() {
        let s = stopper(0.0144);
        let delta = 1e-3;
        let f = impact_force(
            &s,
            TipMotion {
                y: -0.0144 - delta,
                v: 0.0,
            },
            [0.0, 0.0],
        );
        let phi = s.modal.tip_shape;
        let expected = -s.modal.omega.powi(2) * delta / (phi * phi);
        assert!((f - expected).abs() < 1e-12 * expected.abs());
        // The beam is pushed back out of the stopper.
        let load = ForcePlugin::Stopper(s)
            .load(
                0.0,
                0.0,
                TipMotion {
                    y: -0.0144 - delta,
                    v: 0.0,
                },
                &[0.0, 0.0],
            )
            .unwrap();
        assert!(load.tip_force > 0.0 && load.own_accel < 0.0);
    }

    #[test]
    fn auxiliary_stopper_engages_above() {
        let s = Stopper::resolve(&StopperConfig::auxiliary_beam(0.0164), 0.0, 9.81).unwrap();
        assert_eq!(impact_force(&s, TipMotion { y: -0.02, v: 0.0 }, [0.0; 2]), 0.0);
        assert!(impact_force(&s, TipMotion { y: 0.02, v: 0.0 }, [0.0; 2]) > 0.0);
    }

    #[test]
    fn impact_force_is_continuous_through_engagement_at_rest() {
        let s = stopper(0.0144);
        let mut prev = impact_force(&s, TipMotion { y: -0.0140, v: 0.0 }, [0.0; 2]);
        for k in 1..=400 {
            let y = -0.0140 - 1e-3 * k as f64 / 400.0;
            let f = impact_force(&s, TipMotion { y, v: 0.0 }, [0.0; 2]);
            assert!((f - prev).abs() <= s.stiffness() * 2.6e-6, "jump at {y}");
            prev = f;
        }
    }

    fn cube_pair(edge: f64, gap: f64) -> MagnetConfig {
        MagnetConfig {
            moving_edges: [edge; 3],
            fixed_edges: [edge; 3],
            ..MagnetConfig::main_beam(gap)
        }
    }

    #[test]
    fn coaxial_force_is_axial_and_repelling() {
        let cfg = cube_pair(0.005, 0.010);
        let f = magnet_force(&cfg, cfg.offsets(0.0)).unwrap();
        assert!(f[0].abs() < 1e-9 * f[2].abs() && f[1].abs() < 1e-9 * f[2].abs());
        assert!(f[2] > 0.0);
        let attract = MagnetConfig {
            polarity: Polarity::Attracting,
            ..cfg.clone()
        };
        let g = magnet_force(&attract, attract.offsets(0.0)).unwrap();
        assert_eq!(g[2], -f[2]);
    }

    #[test]
    fn swapping_roles_negates_force() {
        let a = MagnetConfig {
            moving_edges: [0.004, 0.005, 0.003],
            fixed_edges: [0.006, 0.002, 0.005],
            moving_remanence: 1.1,
            fixed_remanence: 1.3,
            ..MagnetConfig::main_beam(0.01)
        };
        let b = MagnetConfig {
            moving_edges: a.fixed_edges,
            fixed_edges: a.moving_edges,
            moving_remanence: a.fixed_remanence,
            fixed_remanence: a.moving_remanence,
            ..a.clone()
        };
        let off = [0.0013, -0.0021, 0.0087];
        let fa = magnet_force(&a, off).unwrap();
        let fb = magnet_force(&b, [-off[0], -off[1], -off[2]]).unwrap();
        for d in 0..3 {
            assert!((fa[d] + fb[d]).abs() <= 1e-9 * fa[2].abs(), "{fa:?} {fb:?}");
        }
    }

    #[test]
    fn overlapping_magnets_rejected() {
        let cfg = cube_pair(0.005, 0.004);
        assert!(matches!(
            magnet_force(&cfg, cfg.offsets(0.0)),
            Err(ForceError::Overlap { .. })
        ));
    }

    #[test]
    fn gap_kinematics() {
        let cfg = cube_pair(0.005, 0.02);
        assert_eq!(magnet_gap_kinematics(&cfg, TipMotion::default()), [0.0, 0.0, 0.02]);
        let g = magnet_gap_kinematics(&cfg, TipMotion { y: 0.001, v: 0.0 });
        assert!((g[2] - 0.021).abs() < 1e-15);
    }

    #[test]
    fn repelling_magnet_below_pushes_tip_up() {
        let cfg = cube_pair(0.005, 0.02);
        assert!(magnet_tip_force(&cfg, TipMotion::default()).unwrap() > 0.0);
        let aux = MagnetConfig {
            opening_sign: -1.0,
            ..cfg
        };
        assert!(magnet_tip_force(&aux, TipMotion::default()).unwrap() < 0.0);
    }

    #[test]
    fn force_decreases_with_gap() {
        let cfg = cube_pair(0.005, 0.006);
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let g = 0.0051 + 0.0005 * k as f64;
            let f = magnet_force(&cfg, [0.0, 0.0, g]).unwrap()[2];
            assert!(f < prev && f > 0.0);
            prev = f;
        }
    }
}
