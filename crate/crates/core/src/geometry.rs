//! Device description and per-section derived quantities.
//!
//! The harvester is a chain of uniform Euler–Bernoulli sections clamped at the
//! hub. The prototype has four: the root section, the section carrying the
//! piezoelectric patch, the side rails of the cut-out and the auxiliary beam,
//! which folds back from the rail tip toward the hub.
//!
//! Axial loads are kept as *signed* profiles in each section's own frame
//! (tension positive). A section pointing toward the hub is compressed by
//! centrifugal loading, and a fold-back junction reverses the frame, so the
//! load a folded section passes to its parent changes sign.

use crate::quadrature::signed_rms;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("position {x} outside section {section} of length {length}")]
    OutOfDomain { section: usize, x: f64, length: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GeometryError {
    GeometryError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// How the electrode integral over the patch is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingForm {
    /// Slope at the patch end only.
    Point,
    /// Slope difference between patch end and patch start.
    #[default]
    SlopeDifference,
}

/// Modelling switches that the published description leaves open.
#[derive(Debug, Clone, PartialEq)]
pub struct Layup {
    /// Width of the side rails beside the auxiliary beam. `None` means
    /// `main_width - aux_width`.
    pub rail_width: Option<f64>,
    /// Thickness of an optional compliant layer (modulus `pzt_inner_modulus`)
    /// between the substrate and the patch. Zero disables it.
    pub inner_layer_thickness: f64,
    /// Rotary inertia of the two tip masses. `None` derives it from the block
    /// length.
    pub tip_inertia: [Option<f64>; 2],
    /// Include tip rotary inertia in the boundary conditions and the mass
    /// normalisation.
    pub rotary_inertia: bool,
    pub coupling_form: CouplingForm,
}

impl Default for Layup {
    fn default() -> Self {
        Self {
            rail_width: None,
            inner_layer_thickness: 0.0,
            tip_inertia: [None, None],
            rotary_inertia: true,
            coupling_form: CouplingForm::SlopeDifference,
        }
    }
}

/// Full physical description of the harvester, SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvesterConfig {
    pub rotation_radius: f64,
    /// L1..L4: root, patch, rail and auxiliary sections.
    pub section_lengths: [f64; 4],
    pub mass_length: f64,
    pub pzt_length: f64,
    /// Patch start measured from the origin of section 2.
    pub pzt_offset: f64,
    pub main_width: f64,
    pub aux_width: f64,
    pub pzt_width: f64,
    pub substrate_thickness: f64,
    pub pzt_thickness: f64,
    pub substrate_modulus: f64,
    pub pzt_modulus: f64,
    pub pzt_inner_modulus: f64,
    pub substrate_density: f64,
    pub pzt_density: f64,
    /// M1 (main beam tip) and M2 (auxiliary tip).
    pub tip_masses: [f64; 2],
    pub d31: f64,
    pub capacitance: f64,
    pub load_resistance: f64,
    pub damping: [f64; 2],
    pub gravity: f64,
    pub layup: Layup,
}

impl HarvesterConfig {
    /// The prototype device (L = 130 mm, M1 = 2.42 g, M2 = 1.25 g).
    pub fn prototype() -> Self {
        Self {
            rotation_radius: 0.030,
            section_lengths: [0.033, 0.034, 0.057, 0.041],
            mass_length: 0.006,
            pzt_length: 0.034,
            pzt_offset: 0.0,
            main_width: 0.020,
            aux_width: 0.012,
            pzt_width: 0.012,
            substrate_thickness: 0.3e-3,
            pzt_thickness: 0.4e-3,
            substrate_modulus: 193e9,
            pzt_modulus: 45e9,
            pzt_inner_modulus: 4e9,
            substrate_density: 7930.0,
            pzt_density: 1780.0,
            tip_masses: [2.42e-3, 1.25e-3],
            d31: -23e-12,
            capacitance: 1.38e-9,
            load_resistance: 1e6,
            damping: [0.028, 0.034],
            gravity: 9.81,
            layup: Layup::default(),
        }
    }

    pub fn rail_width(&self) -> f64 {
        self.layup.rail_width.unwrap_or(self.main_width - self.aux_width)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        fn positive(field: &'static str, v: f64) -> Result<(), GeometryError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<(), GeometryError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be non-negative, got {v}")))
            }
        }
        positive("rotation_radius", self.rotation_radius)?;
        const LEN: [&str; 4] = ["l1", "l2", "l3", "l4"];
        for (name, &l) in LEN.iter().zip(&self.section_lengths) {
            positive(name, l)?;
        }
        non_negative("mass_length", self.mass_length)?;
        positive("pzt_length", self.pzt_length)?;
        non_negative("pzt_offset", self.pzt_offset)?;
        positive("main_width", self.main_width)?;
        positive("aux_width", self.aux_width)?;
        positive("pzt_width", self.pzt_width)?;
        positive("substrate_thickness", self.substrate_thickness)?;
        positive("pzt_thickness", self.pzt_thickness)?;
        positive("substrate_modulus", self.substrate_modulus)?;
        positive("pzt_modulus", self.pzt_modulus)?;
        positive("pzt_inner_modulus", self.pzt_inner_modulus)?;
        positive("substrate_density", self.substrate_density)?;
        positive("pzt_density", self.pzt_density)?;
        non_negative("m1", self.tip_masses[0])?;
        non_negative("m2", self.tip_masses[1])?;
        if !self.d31.is_finite() {
            return Err(invalid("d31", "must be finite"));
        }
        positive("capacitance", self.capacitance)?;
        positive("load_resistance", self.load_resistance)?;
        for (name, &z) in ["zeta1", "zeta2"].iter().zip(&self.damping) {
            if !(z > 0.0 && z < 1.0) {
                return Err(invalid(name, format!("damping ratio must lie in (0, 1), got {z}")));
            }
        }
        non_negative("gravity", self.gravity)?;
        positive("rail_width", self.rail_width())?;
        non_negative("inner_layer_thickness", self.layup.inner_layer_thickness)?;
        for (name, j) in ["tip_inertia1", "tip_inertia2"].iter().zip(&self.layup.tip_inertia) {
            if let Some(j) = j {
                non_negative(name, *j)?;
            }
        }
        if self.pzt_offset + self.pzt_length > self.section_lengths[1] * (1.0 + 1e-12) {
            return Err(invalid(
                "pzt_length",
                format!(
                    "patch [{}, {}] m extends past section 2 (length {} m)",
                    self.pzt_offset,
                    self.pzt_offset + self.pzt_length,
                    self.section_lengths[1]
                ),
            ));
        }
        Ok(())
    }
}

/// Direction a section points relative to the hub.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Outward,
    Inward,
}

/// Connection between a section's end and the next section's origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Junction {
    /// Collinear continuation.
    Straight,
    /// 180° fold: w_i(L) = -w_{i+1}(0), slopes equal.
    FoldBack,
}

impl Junction {
    /// +1 for a straight junction, -1 across a fold.
    pub fn sign(self) -> f64 {
        match self {
            Junction::Straight => 1.0,
            Junction::FoldBack => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub length: f64,
    pub linear_density: f64,
    pub bending_stiffness: f64,
    /// Radius of the section origin from the rotation axis.
    pub radius: f64,
    pub orientation: Orientation,
    /// Point mass at the section end.
    pub tip_mass: f64,
    pub tip_inertia: f64,
}

impl Section {
    fn radius_at(&self, x: f64) -> f64 {
        match self.orientation {
            Orientation::Outward => self.radius + x,
            Orientation::Inward => self.radius - x,
        }
    }

    /// m ∫ₓᴸ r(s) ds + Mt r(L), in kg·m.
    fn own_centrifugal(&self, x: f64) -> f64 {
        let l = self.length;
        let dist = match self.orientation {
            Orientation::Outward => self.radius * (l - x) + 0.5 * (l * l - x * x),
            Orientation::Inward => self.radius * (l - x) - 0.5 * (l * l - x * x),
        };
        self.linear_density * dist + self.tip_mass * self.radius_at(l)
    }

    fn own_weight(&self, x: f64) -> f64 {
        (self.length - x) * self.linear_density + self.tip_mass
    }

    fn frame_sign(&self) -> f64 {
        match self.orientation {
            Orientation::Outward => 1.0,
            Orientation::Inward => -1.0,
        }
    }
}

/// Chain of sections with everything the modal and reduced models consume.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionModel {
    pub sections: Vec<Section>,
    /// `junctions[i]` joins section i to section i + 1.
    pub junctions: Vec<Junction>,
    pub gravity: f64,
    /// Distance from the patch-section neutral axis to the bottom and top of
    /// the piezoelectric layer.
    pub h_b: f64,
    pub h_c: f64,
    /// Index of the section that carries the patch.
    pub patch_section: usize,
}

/// Composite bending stiffness of stacked full-length layers about their
/// common neutral axis. Layers are `(width, thickness, modulus)` bottom up.
/// Returns `(EI, neutral axis height from the bottom face)`.
pub fn transformed_section(layers: &[(f64, f64, f64)]) -> (f64, f64) {
    let mut z = 0.0;
    let mut ea = 0.0;
    let mut eaz = 0.0;
    let mut centroids = Vec::with_capacity(layers.len());
    for &(b, t, e) in layers {
        let c = z + 0.5 * t;
        centroids.push(c);
        ea += e * b * t;
        eaz += e * b * t * c;
        z += t;
    }
    let zn = eaz / ea;
    let ei = layers
        .iter()
        .zip(&centroids)
        .map(|(&(b, t, e), &c)| e * (b * t * t * t / 12.0 + b * t * (c - zn) * (c - zn)))
        .sum();
    (ei, zn)
}

pub fn build_sections(config: &HarvesterConfig) -> Result<SectionModel, GeometryError> {
    config.validate()?;
    let [l1, l2, l3, l4] = config.section_lengths;
    let hs = config.substrate_thickness;
    let ys = config.substrate_modulus;
    let rho_s = config.substrate_density;
    let rail = config.rail_width();
    let rect = |b: f64| ys * b * hs.powi(3) / 12.0;

    let mut layers = vec![(config.main_width, hs, ys)];
    let inner = config.layup.inner_layer_thickness;
    if inner > 0.0 {
        layers.push((config.pzt_width, inner, config.pzt_inner_modulus));
    }
    layers.push((config.pzt_width, config.pzt_thickness, config.pzt_modulus));
    let (yi_patch, zn) = transformed_section(&layers);
    let h_b = hs + inner - zn;
    let h_c = h_b + config.pzt_thickness;
    let m_patch =
        rho_s * config.main_width * hs + config.pzt_density * config.pzt_width * (config.pzt_thickness + inner);

    let inertia = |k: usize| -> f64 {
        if !config.layup.rotary_inertia {
            return 0.0;
        }
        config.layup.tip_inertia[k].unwrap_or(config.tip_masses[k] * config.mass_length * config.mass_length / 12.0)
    };

    let r = config.rotation_radius;
    let sections = vec![
        Section {
            length: l1,
            linear_density: rho_s * config.main_width * hs,
            bending_stiffness: rect(config.main_width),
            radius: r,
            orientation: Orientation::Outward,
            tip_mass: 0.0,
            tip_inertia: 0.0,
        },
        Section {
            length: l2,
            linear_density: m_patch,
            bending_stiffness: yi_patch,
            radius: r + l1,
            orientation: Orientation::Outward,
            tip_mass: 0.0,
            tip_inertia: 0.0,
        },
        Section {
            length: l3,
            linear_density: rho_s * rail * hs,
            bending_stiffness: rect(rail),
            radius: r + l1 + l2,
            orientation: Orientation::Outward,
            tip_mass: config.tip_masses[0],
            tip_inertia: inertia(0),
        },
        Section {
            length: l4,
            linear_density: rho_s * config.aux_width * hs,
            bending_stiffness: rect(config.aux_width),
            radius: r + l1 + l2 + l3,
            orientation: Orientation::Inward,
            tip_mass: config.tip_masses[1],
            tip_inertia: inertia(1),
        },
    ];
    if l4 >= r + l1 + l2 + l3 {
        return Err(invalid("l4", "auxiliary beam would reach past the rotation axis"));
    }
    Ok(SectionModel {
        sections,
        junctions: vec![Junction::Straight, Junction::Straight, Junction::FoldBack],
        gravity: config.gravity,
        h_b,
        h_c,
        patch_section: 1,
    })
}

impl SectionModel {
    /// A plain chain of straight outward sections (cantilever of stacked
    /// uniform pieces). Used for stoppers and reference configurations.
    pub fn straight_chain(sections: Vec<Section>, gravity: f64) -> Self {
        let n = sections.len();
        Self {
            sections,
            junctions: vec![Junction::Straight; n.saturating_sub(1)],
            gravity,
            h_b: 0.0,
            h_c: 0.0,
            patch_section: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    fn check(&self, i: usize, x: f64) -> Result<(), GeometryError> {
        let l = self.sections[i].length;
        if (-1e-12 * l..=l * (1.0 + 1e-12)).contains(&x) {
            Ok(())
        } else {
            Err(GeometryError::OutOfDomain {
                section: i,
                x,
                length: l,
            })
        }
    }

    /// Centrifugal coefficient fc_i(x) of section `i` alone: distributed mass
    /// outboard of `x` times its radius plus the tip mass term. Multiply by
    /// Ω² for newtons.
    pub fn centrifugal_profile(&self, i: usize, x: f64) -> Result<f64, GeometryError> {
        self.check(i, x)?;
        Ok(self.sections[i].own_centrifugal(x))
    }

    /// Gravity coefficient fg_i(x) = [(L_i − x) m_i + Mt_i] g.
    pub fn gravity_profile(&self, i: usize, x: f64) -> Result<f64, GeometryError> {
        self.check(i, x)?;
        Ok(self.sections[i].own_weight(x) * self.gravity)
    }

    /// Signed centrifugal axial load of section `i` (own frame, tension
    /// positive) including everything carried from sections further out.
    pub fn axial_centrifugal(&self, i: usize, x: f64) -> f64 {
        let s = &self.sections[i];
        s.frame_sign() * s.own_centrifugal(x) + self.carried(i, |j| self.axial_centrifugal(j, 0.0))
    }

    /// Signed axial gravity load (own frame, multiply by cos Ωt).
    pub fn axial_gravity(&self, i: usize, x: f64) -> f64 {
        let s = &self.sections[i];
        s.frame_sign() * s.own_weight(x) * self.gravity + self.carried(i, |j| self.axial_gravity(j, 0.0))
    }

    fn carried(&self, i: usize, root_load: impl Fn(usize) -> f64) -> f64 {
        match self.junctions.get(i) {
            Some(j) => j.sign() * root_load(i + 1),
            None => 0.0,
        }
    }

    /// Sign of each section's transverse axis relative to the clamp frame.
    pub fn transverse_signs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut s = 1.0;
        for i in 0..self.len() {
            out.push(s);
            if let Some(j) = self.junctions.get(i) {
                s *= j.sign();
            }
        }
        out
    }

    /// Root-mean-square centrifugal axial load per section (kg·m); the axial
    /// force used by the linear eigenproblem is this times Ω².
    pub fn rms_centrifugal(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| signed_rms(self.sections[i].length, |x| self.axial_centrifugal(i, x)))
            .collect()
    }

    /// Multiplies every stiffness and every mass quantity by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.sections {
            s.bending_stiffness *= factor;
            s.linear_density *= factor;
            s.tip_mass *= factor;
            s.tip_inertia *= factor;
        }
        out
    }

    /// Splits section `i` into two identical halves joined straight.
    pub fn split_section(&self, i: usize) -> Self {
        let mut out = self.clone();
        let s = &self.sections[i];
        let half = 0.5 * s.length;
        let first = Section {
            length: half,
            tip_mass: 0.0,
            tip_inertia: 0.0,
            ..s.clone()
        };
        let second = Section {
            length: half,
            radius: s.radius_at(half),
            ..s.clone()
        };
        out.sections.splice(i..=i, [first, second]);
        out.junctions.insert(i, Junction::Straight);
        if out.patch_section > i {
            out.patch_section += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(m: f64, l: f64, r: f64, mt: f64) -> SectionModel {
        SectionModel::straight_chain(
            vec![Section {
                length: l,
                linear_density: m,
                bending_stiffness: 1.0,
                radius: r,
                orientation: Orientation::Outward,
                tip_mass: mt,
                tip_inertia: 0.0,
            }],
            9.81,
        )
    }

    #[test]
    fn steel_strip_bending_stiffness() {
        let (ei, zn) = transformed_section(&[(0.020, 0.0003, 193e9)]);
        // 193e9 * 0.020 * 0.0003^3 / 12
        assert!((ei - 8.685e-3).abs() < 1e-12, "{ei}");
        assert!((zn - 0.00015).abs() < 1e-15);
    }

    #[test]
    fn zero_thickness_layer_leaves_substrate_stiffness() {
        let bare = transformed_section(&[(0.02, 0.0003, 193e9)]).0;
        let layered = transformed_section(&[(0.02, 0.0003, 193e9), (0.012, 0.0, 45e9)]).0;
        assert_eq!(bare, layered);
    }

    #[test]
    fn prototype_linear_densities() {
        let s = build_sections(&HarvesterConfig::prototype()).unwrap();
        assert!((s.sections[0].linear_density - 0.04758).abs() < 1e-12);
        // patch section includes the PZT layer mass
        let m2 = 0.04758 + 1780.0 * 0.012 * 0.0004;
        assert!((s.sections[1].linear_density - m2).abs() < 1e-12);
        assert!(s.h_c > s.h_b);
        assert!(s
            .sections
            .iter()
            .all(|s| s.linear_density > 0.0 && s.bending_stiffness > 0.0));
    }

    #[test]
    fn radii_and_tip_masses_follow_the_chain() {
        let c = HarvesterConfig::prototype();
        let s = build_sections(&c).unwrap();
        let [l1, l2, l3, _] = c.section_lengths;
        let r = c.rotation_radius;
        let radii: Vec<f64> = s.sections.iter().map(|s| s.radius).collect();
        assert_eq!(radii, vec![r, r + l1, r + l1 + l2, r + l1 + l2 + l3]);
        let tips: Vec<f64> = s.sections.iter().map(|s| s.tip_mass).collect();
        assert_eq!(tips, vec![0.0, 0.0, 2.42e-3, 1.25e-3]);
    }

    #[test]
    fn patch_past_section_end_is_rejected() {
        let mut c = HarvesterConfig::prototype();
        c.pzt_offset = 0.005;
        match build_sections(&c) {
            Err(GeometryError::Invalid { field, .. }) => assert_eq!(field, "pzt_length"),
            other => panic!("expected pzt_length error, got {other:?}"),
        }
    }

    #[test]
    fn damping_ratio_bounds() {
        let mut c = HarvesterConfig::prototype();
        c.damping[1] = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn centrifugal_profile_values() {
        let s = uniform(1.0, 1.0, 0.0, 0.0);
        assert_eq!(s.centrifugal_profile(0, 1.0).unwrap(), 0.0);
        assert!((s.centrifugal_profile(0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(s.centrifugal_profile(0, 1.5).is_err());

        let p = build_sections(&HarvesterConfig::prototype()).unwrap();
        let sec = &p.sections[2];
        let beam_part = sec.linear_density * (sec.radius * sec.length + 0.5 * sec.length * sec.length);
        let tip = p.centrifugal_profile(2, 0.0).unwrap() - beam_part;
        assert!((tip - 0.00242 * 0.154).abs() < 1e-12, "{tip}");
    }

    #[test]
    fn gravity_profile_values() {
        let s = uniform(0.04758, 0.033, 0.03, 0.0);
        assert_eq!(s.gravity_profile(0, 0.033).unwrap(), 0.0);
        let v = s.gravity_profile(0, 0.0).unwrap();
        assert!((v - 0.04758 * 0.033 * 9.81).abs() < 1e-12);
        let mut c = HarvesterConfig::prototype();
        c.gravity = 0.0;
        let p = build_sections(&c).unwrap();
        for i in 0..4 {
            for x in [0.0, 0.5 * p.sections[i].length] {
                assert_eq!(p.gravity_profile(i, x).unwrap(), 0.0);
                assert_eq!(p.axial_gravity(i, x), 0.0);
            }
        }
    }

    #[test]
    fn folded_section_is_compressed_and_loads_its_parent() {
        let p = build_sections(&HarvesterConfig::prototype()).unwrap();
        let aux_root = p.axial_centrifugal(3, 0.0);
        assert!(aux_root < 0.0);
        let rail_end = p.axial_centrifugal(2, p.sections[2].length);
        assert!(
            (rail_end - (p.sections[2].tip_mass * (p.sections[2].radius + p.sections[2].length) - aux_root)).abs()
                < 1e-15
        );
        // root carries everything outboard
        assert!(p.axial_centrifugal(0, 0.0) > p.axial_centrifugal(1, 0.0));
        let rms = p.rms_centrifugal();
        assert!(rms[3] < 0.0 && rms[0] > rms[1]);
    }

    #[test]
    fn build_is_deterministic() {
        let c = HarvesterConfig::prototype();
        assert_eq!(build_sections(&c).unwrap(), build_sections(&c).unwrap());
    }

    #[test]
    fn split_preserves_combined_profiles() {
        let p = build_sections(&HarvesterConfig::prototype()).unwrap();
        let q = p.split_section(0);
        let l = p.sections[0].length;
        for k in 0..=10 {
            let x = l * k as f64 / 10.0;
            let (j, xl) = if x <= 0.5 * l { (0, x) } else { (1, x - 0.5 * l) };
            let a = p.axial_centrifugal(0, x);
            let b = q.axial_centrifugal(j, xl);
            assert!((a - b).abs() < 1e-15 * a.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn profiles_monotone_non_negative_and_linear_in_mass(
            m in 0.001f64..1.0, l in 0.01f64..0.2, r in 0.0f64..0.2, mt in 0.0f64..0.01,
            t in 0.0f64..1.0,
        ) {
            let s = uniform(m, l, r, mt);
            let x = t * l;
            let fc = s.centrifugal_profile(0, x).unwrap();
            let fg = s.gravity_profile(0, x).unwrap();
            prop_assert!(fc >= 0.0 && fg >= 0.0);
            let x2 = (x + 0.1 * l).min(l);
            if x2 > x {
                prop_assert!(s.centrifugal_profile(0, x2).unwrap() < fc);
            }
            let d = uniform(2.0 * m, l, r, 2.0 * mt);
            let fc2 = d.centrifugal_profile(0, x).unwrap();
            let fg2 = d.gravity_profile(0, x).unwrap();
            prop_assert!((fc2 - 2.0 * fc).abs() <= 1e-12 * fc2.abs().max(1e-300));
            prop_assert!((fg2 - 2.0 * fg).abs() <= 1e-12 * fg2.abs().max(1e-300));
        }
    }
}
