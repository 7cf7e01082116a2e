//! Eigenvalue checks against an independent transfer-matrix solution and
//! frozen prototype frequencies.

use nalgebra::{Matrix2, Matrix4};
use proptest::prelude::*;
use rotpeh::geometry::{build_sections, HarvesterConfig, Orientation, Section, SectionModel};
use rotpeh::modal::{mac, solve_modes, ModalProblem, ScanSettings};
use std::f64::consts::PI;

fn section(length: f64, linear_density: f64, bending_stiffness: f64) -> Section {
    Section {
        length,
        linear_density,
        bending_stiffness,
        radius: 0.0,
        orientation: Orientation::Outward,
        tip_mass: 0.0,
        tip_inertia: 0.0,
    }
}

/// Maps (w, w', EI w'', EI w''') across a uniform non-rotating segment.
fn field_matrix(s: &Section, omega: f64) -> Matrix4<f64> {
    let ei = s.bending_stiffness;
    let k = (s.linear_density * omega * omega / ei).powf(0.25);
    let basis = |x: f64| -> Matrix4<f64> {
        let (ch, sh, c, sn) = ((k * x).cosh(), (k * x).sinh(), (k * x).cos(), (k * x).sin());
        let k2 = k * k;
        let k3 = k2 * k;
        Matrix4::new(
            ch,
            sh,
            c,
            sn,
            k * sh,
            k * ch,
            -k * sn,
            k * c,
            ei * k2 * ch,
            ei * k2 * sh,
            -ei * k2 * c,
            -ei * k2 * sn,
            ei * k3 * sh,
            ei * k3 * ch,
            ei * k3 * sn,
            -ei * k3 * c,
        )
    };
    basis(s.length) * basis(0.0).try_inverse().expect("basis invertible")
}

/// Free-end residual of a clamped stepped beam.
fn chain_residual(sections: &[Section], omega: f64) -> f64 {
    let t = sections
        .iter()
        .fold(Matrix4::identity(), |acc, s| field_matrix(s, omega) * acc);
    Matrix2::new(t[(2, 2)], t[(2, 3)], t[(3, 2)], t[(3, 3)]).determinant()
}

fn transfer_matrix_roots(sections: &[Section], count: usize, step: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut lo = step;
    let mut f_lo = chain_residual(sections, lo);
    while roots.len() < count {
        let hi = lo + step;
        let f_hi = chain_residual(sections, hi);
        if f_lo.signum() != f_hi.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = chain_residual(sections, m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

#[test]
fn stepped_beam_matches_transfer_matrices() {
    let pieces = vec![
        section(0.05, 0.4, 2.0),
        section(0.04, 0.7, 5.0),
        section(0.06, 0.2, 0.6),
    ];
    let expected = transfer_matrix_roots(&pieces, 2, 0.5);
    let chain = SectionModel::straight_chain(pieces, 0.0);
    let got = ModalProblem::new(&chain, 0.0)
        .natural_frequencies(2, &ScanSettings::default())
        .unwrap();
    for (a, b) in got.iter().zip(&expected) {
        assert!((a / b - 1.0).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn prototype_frequencies_are_frozen() {
    let s = build_sections(&HarvesterConfig::prototype()).unwrap();
    for (rot, frozen) in [
        (0.0, [9.750637959539889, 31.98351960301398]),
        (2.0 * PI * 10.0, [12.058986223340032, 26.90916799902916]),
    ] {
        let set = solve_modes(&s, rot, 2, &ScanSettings::default()).unwrap();
        for (f, expect) in set.frequencies_hz().iter().zip(frozen) {
            assert!((f / expect - 1.0).abs() < 1e-8, "{f} vs {expect}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn uniform_scaling_leaves_frequencies_unchanged(factor in 0.2f64..5.0, rot_hz in 0.0f64..12.0) {
        let s = build_sections(&HarvesterConfig::prototype()).unwrap();
        let scan = ScanSettings::default();
        let a = ModalProblem::new(&s, 2.0 * PI * rot_hz).natural_frequencies(2, &scan).unwrap();
        let b = ModalProblem::new(&s.scaled(factor), 2.0 * PI * rot_hz).natural_frequencies(2, &scan).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x / y - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn heavier_tips_lower_both_frequencies_at_rest(extra in 1e-4f64..3e-3) {
        let base = HarvesterConfig::prototype();
        let mut heavy = base.clone();
        heavy.tip_masses[0] += extra;
        heavy.tip_masses[1] += extra;
        let scan = ScanSettings::default();
        let f = |c: &HarvesterConfig| {
            let s = build_sections(c).unwrap();
            ModalProblem::new(&s, 0.0).natural_frequencies(2, &scan).unwrap()
        };
        let (a, b) = (f(&base), f(&heavy));
        prop_assert!(b[0] < a[0] && b[1] < a[1]);
    }

    #[test]
    fn mac_is_bounded_and_symmetric(a in prop::collection::vec(-1.0f64..1.0, 8), b in prop::collection::vec(-1.0f64..1.0, 8)) {
        let (x, y) = (mac(&a, &b), mac(&b, &a));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
        prop_assert!((x - y).abs() < 1e-12);
    }
}
