//! Rotation-dependent linear modal analysis of the section chain.
//!
//! Each section obeys
//!
//! ```text
//! YI φ'''' − T φ'' − m (ω² + Ω²) φ = 0,   T = f̄c Ω²
//! ```
//!
//! with f̄c the RMS of the section's signed axial load. Its solution is
//! `A cosh(ax) + B sinh(ax) + C cos(bx) + D sin(bx)`; the 4N coefficients
//! are tied together by the linearised boundary and junction conditions:
//!
//! * clamp: φ₁(0) = 0, φ₁'(0) = 0
//! * each junction i → i+1 with κ = +1 (straight) or −1 (fold-back):
//!   - φᵢ(L) = κ φᵢ₊₁(0)
//!   - φᵢ'(L) = φᵢ₊₁'(0)
//!   - YIᵢ φᵢ''(L) − ω² Jᵢ φᵢ'(L) = YIᵢ₊₁ φᵢ₊₁''(0)
//!   - Sᵢ(L) + (ω² + Ω²) Mtᵢ φᵢ(L) = κ Sᵢ₊₁(0),  S = YI φ''' − T φ'
//! * free end: YI φ'' − ω² J φ' = 0 and S + (ω² + Ω²) Mt φ = 0
//!
//! Cubic, gravity and longitudinal-inertia terms are dropped. These are the
//! natural conditions of the quadratic forms used for mass normalisation,
//! so eigenfunctions are orthogonal to quadrature accuracy.

use crate::geometry::{Junction, SectionModel};
use crate::quadrature::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModalError {
    #[error("found {found} of {wanted} natural frequencies below {ceiling_hz} Hz (Ω = {rotation} rad/s)")]
    MissingRoots {
        wanted: usize,
        found: usize,
        ceiling_hz: f64,
        rotation: f64,
    },
    #[error("hyperbolic argument {arg:.1} in section {section} exceeds the overflow guard")]
    Overflow { section: usize, arg: f64 },
    #[error("ω = {omega} rad/s is not a determinant root (σ_min/‖M‖ = {ratio:.3e})")]
    NotARoot { omega: f64, ratio: f64 },
    #[error("degenerate root at ω = {omega} rad/s: null space has dimension > 1")]
    DegenerateRoot { omega: f64 },
    #[error("a mode is unstable at Ω = {rotation} rad/s (ω² = {omega_sq:.4e} < 0)")]
    Unstable { rotation: f64, omega_sq: f64 },
    #[error("mode {mode} has non-positive generalised mass")]
    BadNormalisation { mode: usize },
}

/// Largest hyperbolic argument a·L accepted before assembly refuses.
pub const HYPERBOLIC_GUARD: f64 = 700.0;

/// Determinant root scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub start_hz: f64,
    pub step_hz: f64,
    pub ceiling_hz: f64,
    /// Relative bisection tolerance on ω.
    pub rel_tol: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            start_hz: 0.1,
            step_hz: 0.01,
            ceiling_hz: 500.0,
            rel_tol: 1e-10,
        }
    }
}

/// Characteristic wavenumbers (a, b) of `YI φ'''' − T φ'' − m(ω²+Ω²) φ = 0`
/// with `T = fc_bar · Ω²`; `a` pairs with cosh/sinh, `b` with cos/sin.
pub fn section_wavenumbers(yi: f64, m: f64, fc_bar: f64, rotation: f64, omega: f64) -> (f64, f64) {
    let r2 = rotation * rotation;
    characteristic_roots(yi, fc_bar * r2, m * (omega * omega + r2))
}

fn characteristic_roots(yi: f64, t: f64, mu: f64) -> (f64, f64) {
    let disc = (t * t + 4.0 * yi * mu).sqrt();
    // b² = (disc − t)/(2YI) loses digits when t ≫ 0; use the product a²b² = μ/YI.
    let (a2, b2) = if t >= 0.0 {
        let a2 = (t + disc) / (2.0 * yi);
        (a2, mu / (yi * a2))
    } else {
        let b2 = (disc - t) / (2.0 * yi);
        (mu / (yi * b2), b2)
    };
    (a2.sqrt(), b2.sqrt())
}

/// Value and first three derivatives of the four basis functions at `x`.
/// Row k holds the k-th derivative of `[cosh ax, sinh ax, cos bx, sin bx]`.
fn basis(a: f64, b: f64, x: f64) -> [[f64; 4]; 4] {
    let (ch, sh) = ((a * x).cosh(), (a * x).sinh());
    let (c, s) = ((b * x).cos(), (b * x).sin());
    [
        [ch, sh, c, s],
        [a * sh, a * ch, -b * s, b * c],
        [a * a * ch, a * a * sh, -b * b * c, -b * b * s],
        [a * a * a * sh, a * a * a * ch, b * b * b * s, -b * b * b * c],
    ]
}

/// The linear eigenproblem at a fixed rotation speed.
#[derive(Debug, Clone)]
pub struct ModalProblem<'a> {
    pub sections: &'a SectionModel,
    pub rotation: f64,
    /// Signed RMS centrifugal load per section (kg·m).
    pub fc_bar: Vec<f64>,
}

impl<'a> ModalProblem<'a> {
    pub fn new(sections: &'a SectionModel, rotation: f64) -> Self {
        Self {
            sections,
            rotation,
            fc_bar: sections.rms_centrifugal(),
        }
    }

    fn axial(&self, i: usize) -> f64 {
        self.fc_bar[i] * self.rotation * self.rotation
    }

    pub fn wavenumbers(&self, omega: f64) -> Vec<(f64, f64)> {
        self.wavenumbers_sq(omega * omega)
    }

    /// Wavenumbers for a signed ω²; valid while ω² > −Ω².
    fn wavenumbers_sq(&self, w2: f64) -> Vec<(f64, f64)> {
        let r2 = self.rotation * self.rotation;
        self.sections
            .sections
            .iter()
            .zip(&self.fc_bar)
            .map(|(s, &fc)| characteristic_roots(s.bending_stiffness, fc * r2, s.linear_density * (w2 + r2)))
            .collect()
    }

    /// Assembles the 4N × 4N boundary matrix at trial frequency `omega`.
    pub fn boundary_matrix(&self, omega: f64) -> Result<DMatrix<f64>, ModalError> {
        self.boundary_matrix_sq(omega * omega)
    }

    fn boundary_matrix_sq(&self, w2: f64) -> Result<DMatrix<f64>, ModalError> {
        let secs = &self.sections.sections;
        let n = secs.len();
        let k = self.wavenumbers_sq(w2);
        for (i, (s, &(a, _))) in secs.iter().zip(&k).enumerate() {
            if a * s.length > HYPERBOLIC_GUARD {
                return Err(ModalError::Overflow {
                    section: i,
                    arg: a * s.length,
                });
            }
        }
        let lambda = w2 + self.rotation * self.rotation;
        let mut m = DMatrix::zeros(4 * n, 4 * n);
        let mut row = 0;

        let root = basis(k[0].0, k[0].1, 0.0);
        for d in 0..2 {
            for c in 0..4 {
                m[(row, c)] = root[d][c];
            }
            row += 1;
        }

        for i in 0..n {
            let s = &secs[i];
            let end = basis(k[i].0, k[i].1, s.length);
            let shear_end: [f64; 4] =
                std::array::from_fn(|c| s.bending_stiffness * end[3][c] - self.axial(i) * end[1][c]);
            let moment_end: [f64; 4] =
                std::array::from_fn(|c| s.bending_stiffness * end[2][c] - w2 * s.tip_inertia * end[1][c]);
            let shear_rows: [f64; 4] = std::array::from_fn(|c| shear_end[c] + lambda * s.tip_mass * end[0][c]);
            let ci = 4 * i;
            if i + 1 < n {
                let kappa = self.sections.junctions[i].sign();
                let nx = &secs[i + 1];
                let start = basis(k[i + 1].0, k[i + 1].1, 0.0);
                let cn = 4 * (i + 1);
                for c in 0..4 {
                    m[(row, ci + c)] = end[0][c];
                    m[(row, cn + c)] = -kappa * start[0][c];
                    m[(row + 1, ci + c)] = end[1][c];
                    m[(row + 1, cn + c)] = -start[1][c];
                    m[(row + 2, ci + c)] = moment_end[c];
                    m[(row + 2, cn + c)] = -nx.bending_stiffness * start[2][c];
                    m[(row + 3, ci + c)] = shear_rows[c];
                    m[(row + 3, cn + c)] =
                        -kappa * (nx.bending_stiffness * start[3][c] - self.axial(i + 1) * start[1][c]);
                }
                row += 4;
            } else {
                for c in 0..4 {
                    m[(row, ci + c)] = moment_end[c];
                    m[(row + 1, ci + c)] = shear_rows[c];
                }
                row += 2;
            }
        }
        debug_assert_eq!(row, 4 * n);
        Ok(m)
    }

    /// Determinant after dividing every row by its largest entry.
    pub fn scaled_determinant(&self, omega: f64) -> Result<f64, ModalError> {
        let mut m = self.boundary_matrix(omega)?;
        row_scale(&mut m);
        Ok(m.determinant())
    }

    /// Fails with [`ModalError::Unstable`] if the determinant changes sign for
    /// some ω² in (−Ω², 0), i.e. rotation has softened a mode past zero.
    pub fn check_stability(&self) -> Result<(), ModalError> {
        let r2 = self.rotation * self.rotation;
        if r2 == 0.0 {
            return Ok(());
        }
        const STEPS: usize = 400;
        let at = |k: usize| -r2 * (1.0 - k as f64 / STEPS as f64);
        let det = |w2: f64| -> Result<f64, ModalError> {
            let mut m = self.boundary_matrix_sq(w2)?;
            row_scale(&mut m);
            Ok(m.determinant())
        };
        let mut prev = det(at(1))?;
        for k in 2..=STEPS {
            let d = det(at(k))?;
            if d == 0.0 || d.signum() != prev.signum() {
                return Err(ModalError::Unstable {
                    rotation: self.rotation,
                    omega_sq: at(k),
                });
            }
            prev = d;
        }
        Ok(())
    }

    /// The `count` lowest natural frequencies (rad/s) found by a sign-change
    /// scan of the scaled determinant followed by bisection.
    pub fn natural_frequencies(&self, count: usize, scan: &ScanSettings) -> Result<Vec<f64>, ModalError> {
        self.check_stability()?;
        let to_w = |f: f64| 2.0 * PI * f;
        let mut roots = Vec::with_capacity(count);
        let mut f_prev = scan.start_hz;
        let mut d_prev = self.scaled_determinant(to_w(f_prev))?;
        let steps = ((scan.ceiling_hz - scan.start_hz) / scan.step_hz).ceil() as usize;
        for k in 1..=steps {
            if roots.len() == count {
                break;
            }
            let f = scan.start_hz + k as f64 * scan.step_hz;
            let d = self.scaled_determinant(to_w(f))?;
            if d == 0.0 {
                roots.push(to_w(f));
            } else if d.signum() != d_prev.signum() && d_prev != 0.0 {
                roots.push(self.bisect(to_w(f_prev), to_w(f), d_prev, scan.rel_tol)?);
            }
            f_prev = f;
            d_prev = d;
        }
        if roots.len() < count {
            return Err(ModalError::MissingRoots {
                wanted: count,
                found: roots.len(),
                ceiling_hz: scan.ceiling_hz,
                rotation: self.rotation,
            });
        }
        Ok(roots)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, d_lo: f64, rel_tol: f64) -> Result<f64, ModalError> {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= rel_tol * mid {
                break;
            }
            let d = self.scaled_determinant(mid)?;
            if d == 0.0 {
                return Ok(mid);
            }
            if d.signum() == d_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Null vector of the boundary matrix at a verified root, as a mode shape
    /// (not yet normalised).
    pub fn null_shape(&self, omega: f64) -> Result<ModeShape, ModalError> {
        let mut m = self.boundary_matrix(omega)?;
        row_scale(&mut m);
        let norm = m.norm();
        let svd = m.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let smallest = svd.singular_values[order[0]];
        let ratio = smallest / norm;
        if ratio > 1e-6 {
            return Err(ModalError::NotARoot { omega, ratio });
        }
        if order.len() > 1 && svd.singular_values[order[1]] / norm <= 1e-6 {
            return Err(ModalError::DegenerateRoot { omega });
        }
        let v = vt.row(order[0]);
        let n = self.sections.len();
        let coeffs = (0..n).map(|i| std::array::from_fn(|c| v[4 * i + c])).collect();
        Ok(ModeShape {
            coeffs,
            wavenumbers: self.wavenumbers(omega),
            lengths: self.sections.sections.iter().map(|s| s.length).collect(),
            junctions: self.sections.junctions.clone(),
        })
    }
}

fn row_scale(m: &mut DMatrix<f64>) {
    for mut r in m.row_iter_mut() {
        let s = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if s > 0.0 {
            r /= s;
        }
    }
}

/// Piecewise mode shape of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeShape {
    /// `[A, B, C, D]` per section.
    pub coeffs: Vec<[f64; 4]>,
    /// `(a, b)` per section, 1/m.
    pub wavenumbers: Vec<(f64, f64)>,
    pub lengths: Vec<f64>,
    pub junctions: Vec<Junction>,
}

impl ModeShape {
    /// `[φ, φ', φ'', φ''']` of section `i` at local position `x`.
    pub fn eval(&self, i: usize, x: f64) -> [f64; 4] {
        let (a, b) = self.wavenumbers[i];
        let bs = basis(a, b, x);
        let c = &self.coeffs[i];
        std::array::from_fn(|d| (0..4).map(|k| bs[d][k] * c[k]).sum())
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        self.eval(i, x)[0]
    }

    pub fn slope(&self, i: usize, x: f64) -> f64 {
        self.eval(i, x)[1]
    }

    /// Displacement at the end of section `i`.
    pub fn tip(&self, i: usize) -> f64 {
        self.value(i, self.lengths[i])
    }

    fn scale(&mut self, k: f64) {
        for c in &mut self.coeffs {
            for v in c.iter_mut() {
                *v *= k;
            }
        }
    }

    /// Displacements sampled on a fixed grid, for shape correlation.
    pub fn sample(&self, per_section: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(per_section * self.lengths.len());
        for (i, &l) in self.lengths.iter().enumerate() {
            for k in 1..=per_section {
                out.push(self.value(i, l * k as f64 / per_section as f64));
            }
        }
        out
    }

    /// Largest |φ| over the sampled grid.
    pub fn max_abs(&self) -> f64 {
        self.sample(32).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Mass inner product Σ∫ m φψ + Σ Mt φψ|ᴸ + Σ J φ'ψ'|ᴸ.
pub fn mass_inner(sections: &SectionModel, a: &ModeShape, b: &ModeShape) -> f64 {
    let rule = GaussLegendre::standard();
    sections
        .sections
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dist = rule.integrate(0.0, s.length, |x| a.value(i, x) * b.value(i, x));
            let ea = a.eval(i, s.length);
            let eb = b.eval(i, s.length);
            s.linear_density * dist + s.tip_mass * ea[0] * eb[0] + s.tip_inertia * ea[1] * eb[1]
        })
        .sum()
}

/// Stiffness form whose ratio to [`mass_inner`] is ω².
pub fn stiffness_inner(problem: &ModalProblem, a: &ModeShape, b: &ModeShape) -> f64 {
    let rule = GaussLegendre::standard();
    let w2 = problem.rotation * problem.rotation;
    problem
        .sections
        .sections
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = problem.axial(i);
            let dist = rule.integrate(0.0, s.length, |x| {
                let ea = a.eval(i, x);
                let eb = b.eval(i, x);
                s.bending_stiffness * ea[2] * eb[2] + t * ea[1] * eb[1] - w2 * s.linear_density * ea[0] * eb[0]
            });
            dist - w2 * s.tip_mass * a.tip(i) * b.tip(i)
        })
        .sum()
}

/// Natural frequencies and mass-normalised shapes at one rotation speed.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub rotation: f64,
    /// Ascending, rad/s.
    pub frequencies: Vec<f64>,
    pub shapes: Vec<ModeShape>,
    /// δ̂_jk: mass form between normalised shapes.
    pub mass_matrix: Vec<Vec<f64>>,
    /// Stiffness form divided by ω_j ω_k (identity for exact modes).
    pub stiffness_matrix: Vec<Vec<f64>>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// max |δ̂_jk − δ_jk|.
    pub fn orthonormality_residual(&self) -> f64 {
        max_identity_defect(&self.mass_matrix)
    }

    /// max |K̂_jk/(ω_j ω_k) − δ_jk|.
    pub fn frequency_residual(&self) -> f64 {
        max_identity_defect(&self.stiffness_matrix)
    }

    /// Natural frequencies in Hz.
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.frequencies.iter().map(|w| w / (2.0 * PI)).collect()
    }
}

fn max_identity_defect(m: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (j, row) in m.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

/// Shapes for verified roots, mass-normalised, with a deterministic sign:
/// the section-end displacement of largest magnitude is positive.
pub fn mode_shapes(problem: &ModalProblem, frequencies: &[f64]) -> Result<ModeSet, ModalError> {
    let mut shapes = Vec::with_capacity(frequencies.len());
    for (j, &w) in frequencies.iter().enumerate() {
        let mut shape = problem.null_shape(w)?;
        let gm = mass_inner(problem.sections, &shape, &shape);
        if gm <= 0.0 || !gm.is_finite() {
            return Err(ModalError::BadNormalisation { mode: j });
        }
        let tips: Vec<f64> = (0..shape.lengths.len()).map(|i| shape.tip(i)).collect();
        let lead = tips
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        shape.scale(sign / gm.sqrt());
        shapes.push(shape);
    }
    let n = shapes.len();
    let mass_matrix = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| mass_inner(problem.sections, &shapes[j], &shapes[k]))
                .collect()
        })
        .collect();
    let stiffness_matrix = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| stiffness_inner(problem, &shapes[j], &shapes[k]) / (frequencies[j] * frequencies[k]))
                .collect()
        })
        .collect();
    Ok(ModeSet {
        rotation: problem.rotation,
        frequencies: frequencies.to_vec(),
        shapes,
        mass_matrix,
        stiffness_matrix,
    })
}

/// Frequencies plus normalised shapes of the lowest `count` modes.
pub fn solve_modes(
    sections: &SectionModel,
    rotation: f64,
    count: usize,
    scan: &ScanSettings,
) -> Result<ModeSet, ModalError> {
    let problem = ModalProblem::new(sections, rotation);
    let freqs = problem.natural_frequencies(count, scan)?;
    mode_shapes(&problem, &freqs)
}

/// Modal assurance criterion between two sampled shapes.
pub fn mac(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab * ab / (aa * bb)
}

/// One row of the frequency-vs-drive map.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMapRow {
    pub drive_hz: f64,
    /// Ascending natural frequencies (Hz).
    pub f_hz: [f64; 2],
    /// MAC of each ordered mode against the same-order mode of the previous row.
    pub mac: [f64; 2],
    /// `track[k]` is the ordered mode index continuing shape track k.
    pub track: [usize; 2],
    /// |φ at auxiliary tip| / |φ at main tip| for each ordered mode.
    pub tip_ratio: [f64; 2],
}

impl FrequencyMapRow {
    pub fn csv_header() -> &'static str {
        "omega_rpm,drive_hz,f1_hz,f2_hz,mac_1,mac_2"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.drive_hz * 60.0,
            self.drive_hz,
            self.f_hz[0],
            self.f_hz[1],
            self.mac[0],
            self.mac[1]
        )
    }
}

/// Natural frequencies over a list of driving frequencies (Ω = 2π f) with
/// shape tracking across steps.
pub fn frequency_map(
    sections: &SectionModel,
    drive_hz: &[f64],
    scan: &ScanSettings,
) -> Result<Vec<FrequencyMapRow>, ModalError> {
    let sets: Vec<ModeSet> = drive_hz
        .par_iter()
        .map(|&f| solve_modes(sections, 2.0 * PI * f, 2, scan))
        .collect::<Result<_, _>>()?;
    let n = sections.len();
    let main_tip = n.saturating_sub(2);
    let aux_tip = n - 1;
    let mut rows = Vec::with_capacity(sets.len());
    let mut prev: Option<(Vec<Vec<f64>>, [usize; 2])> = None;
    for (set, &f) in sets.iter().zip(drive_hz) {
        let samples: Vec<Vec<f64>> = set.shapes.iter().map(|s| s.sample(16)).collect();
        let (macs, track) = match &prev {
            None => ([1.0, 1.0], [0, 1]),
            Some((old, old_track)) => {
                let same = mac(&old[0], &samples[0]) + mac(&old[1], &samples[1]);
                let swapped = mac(&old[0], &samples[1]) + mac(&old[1], &samples[0]);
                let track = if swapped > same {
                    [old_track[1], old_track[0]]
                } else {
                    *old_track
                };
                ([mac(&old[0], &samples[0]), mac(&old[1], &samples[1])], track)
            }
        };
        let ratio = |s: &ModeShape| {
            let m = s.tip(main_tip).abs();
            if m == 0.0 {
                f64::INFINITY
            } else {
                s.tip(aux_tip).abs() / m
            }
        };
        rows.push(FrequencyMapRow {
            drive_hz: f,
            f_hz: [set.frequencies[0] / (2.0 * PI), set.frequencies[1] / (2.0 * PI)],
            mac: macs,
            track,
            tip_ratio: [ratio(&set.shapes[0]), ratio(&set.shapes[1])],
        });
        prev = Some((samples, track));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sections, HarvesterConfig, Orientation, Section};

    fn cantilever(l: f64, tip: f64) -> SectionModel {
        SectionModel::straight_chain(
            vec![Section {
                length: l,
                linear_density: 1.0,
                bending_stiffness: 1.0,
                radius: 0.0,
                orientation: Orientation::Outward,
                tip_mass: tip,
                tip_inertia: 0.0,
            }],
            0.0,
        )
    }

    #[test]
    fn wavenumbers_reduce_to_euler_bernoulli_without_rotation() {
        let (a, b) = section_wavenumbers(1.0, 1.0, 0.0, 0.0, 1.0);
        assert_eq!((a, b), (1.0, 1.0));
        let (a, b) = section_wavenumbers(2.0, 3.0, 5.0, 0.0, 7.0);
        let k = (3.0 * 49.0 / 2.0f64).powf(0.25);
        assert!((a - k).abs() < 1e-14 && (b - k).abs() < 1e-14);
    }

    #[test]
    fn wavenumbers_with_axial_load() {
        let (a, b) = section_wavenumbers(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((a - 2f64.sqrt()).abs() < 1e-14);
        assert!((b - 1.0).abs() < 1e-14);
        // compressive load swaps roles
        let (a, b) = section_wavenumbers(1.0, 1.0, -1.0, 1.0, 1.0);
        assert!((a - 1.0).abs() < 1e-14);
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn clamp_rows_have_expected_pattern() {
        let s = build_sections(&HarvesterConfig::prototype()).unwrap();
        let p = ModalProblem::new(&s, 0.0);
        let m = p.boundary_matrix(2.0 * PI * 10.0).unwrap();
        assert_eq!(m.nrows(), 16);
        let row0: Vec<f64> = m.row(0).iter().copied().collect();
        assert_eq!(&row0[..4], &[1.0, 0.0, 1.0, 0.0]);
        assert!(row0[4..].iter().all(|&v| v == 0.0));
        assert!(m.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cantilever_eigenvalues() {
        let s = cantilever(1.0, 0.0);
        let scan = ScanSettings {
            step_hz: 0.01,
            ..Default::default()
        };
        let w = ModalProblem::new(&s, 0.0).natural_frequencies(2, &scan).unwrap();
        let beta: Vec<f64> = w.iter().map(|w| w.sqrt()).collect();
        assert!((beta[0] - 1.875_104_068_7).abs() < 1e-7, "{beta:?}");
        assert!((beta[1] - 4.694_091_132_9).abs() < 1e-7, "{beta:?}");
    }

    #[test]
    fn overflow_guard_trips() {
        let s = SectionModel::straight_chain(
            vec![Section {
                length: 1.0,
                linear_density: 1e6,
                bending_stiffness: 1e-9,
                radius: 0.0,
                orientation: Orientation::Outward,
                tip_mass: 0.0,
                tip_inertia: 0.0,
            }],
            0.0,
        );
        let p = ModalProblem::new(&s, 0.0);
        assert!(matches!(p.boundary_matrix(1e3), Err(ModalError::Overflow { .. })));
    }

    #[test]
    fn missing_roots_reported() {
        let s = cantilever(1.0, 0.0);
        let scan = ScanSettings {
            ceiling_hz: 1.0,
            ..Default::default()
        };
        let e = ModalProblem::new(&s, 0.0).natural_frequencies(2, &scan).unwrap_err();
        assert!(matches!(e, ModalError::MissingRoots { found: 1, .. }), "{e}");
    }

    #[test]
    fn non_root_rejected() {
        let s = cantilever(1.0, 0.0);
        let p = ModalProblem::new(&s, 0.0);
        assert!(matches!(p.null_shape(2.0), Err(ModalError::NotARoot { .. })));
    }

    #[test]
    fn tip_mass_lowers_frequency_and_shapes_are_normalised() {
        let s = cantilever(1.0, 0.5);
        let set = solve_modes(&s, 0.0, 2, &ScanSettings::default()).unwrap();
        assert!(set.frequencies[0] < 1.8751f64.powi(2));
        assert!(set.orthonormality_residual() < 1e-8, "{:?}", set.mass_matrix);
        assert!(set.frequency_residual() < 1e-6, "{:?}", set.stiffness_matrix);
        let shape = &set.shapes[0];
        let e = shape.eval(0, 0.0);
        assert!(e[0].abs() < 1e-9 * shape.max_abs() && e[1].abs() < 1e-9 * shape.max_abs());
    }

    #[test]
    fn mac_is_scale_invariant() {
        let a = [1.0, 2.0, 3.0];
        let b = [-2.0, -4.0, -6.0];
        assert!((mac(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(mac(&a, &[0.0; 3]), 0.0);
    }
}
