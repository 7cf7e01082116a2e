#![no_main]

use libfuzzer_sys::fuzz_target;
use rotpeh::units::{format_quantity, parse_quantity, Dimension};

const DIMENSIONS: [Dimension; 12] = [
    Dimension::Length,
    Dimension::Mass,
    Dimension::Stress,
    Dimension::Density,
    Dimension::Capacitance,
    Dimension::Resistance,
    Dimension::Frequency,
    Dimension::ChargePerForce,
    Dimension::Acceleration,
    Dimension::FluxDensity,
    Dimension::MomentOfInertia,
    Dimension::Dimensionless,
];

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let dim = DIMENSIONS[selector as usize % DIMENSIONS.len()];
    let Ok(value) = parse_quantity(text, dim) else {
        return;
    };
    assert!(value.is_finite());
    assert_eq!(parse_quantity(&format_quantity(value, dim), dim), Ok(value));
});
