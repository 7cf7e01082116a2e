//! Unit-suffixed quantities such as `"14.4 mm"` or `"193 GPa"`, converted to SI.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    /// Decimal prefix, applied to the literal's exponent so the result is
    /// correctly rounded.
    Pow10(i32),
    Factor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Length,
    Mass,
    Stress,
    Density,
    Capacitance,
    Resistance,
    Frequency,
    ChargePerForce,
    Acceleration,
    FluxDensity,
    MomentOfInertia,
    Dimensionless,
}

impl Dimension {
    /// SI unit written into canonical output.
    pub fn si_unit(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Mass => "kg",
            Dimension::Stress => "Pa",
            Dimension::Density => "kg/m^3",
            Dimension::Capacitance => "F",
            Dimension::Resistance => "Ohm",
            Dimension::Frequency => "Hz",
            Dimension::ChargePerForce => "C/N",
            Dimension::Acceleration => "m/s^2",
            Dimension::FluxDensity => "T",
            Dimension::MomentOfInertia => "kg*m^2",
            Dimension::Dimensionless => "",
        }
    }

    fn units(self) -> &'static [(&'static str, Scale)] {
        match self {
            Dimension::Length => &[
                ("m", Scale::Pow10(0)),
                ("cm", Scale::Pow10(-2)),
                ("mm", Scale::Pow10(-3)),
                ("um", Scale::Pow10(-6)),
                ("µm", Scale::Pow10(-6)),
            ],
            Dimension::Mass => &[
                ("kg", Scale::Pow10(0)),
                ("g", Scale::Pow10(-3)),
                ("mg", Scale::Pow10(-6)),
            ],
            Dimension::Stress => &[
                ("Pa", Scale::Pow10(0)),
                ("kPa", Scale::Pow10(3)),
                ("MPa", Scale::Pow10(6)),
                ("GPa", Scale::Pow10(9)),
            ],
            Dimension::Density => &[
                ("kg/m^3", Scale::Pow10(0)),
                ("kg/m3", Scale::Pow10(0)),
                ("g/cm^3", Scale::Pow10(3)),
                ("g/cm3", Scale::Pow10(3)),
            ],
            Dimension::Capacitance => &[
                ("F", Scale::Pow10(0)),
                ("uF", Scale::Pow10(-6)),
                ("µF", Scale::Pow10(-6)),
                ("nF", Scale::Pow10(-9)),
                ("pF", Scale::Pow10(-12)),
            ],
            Dimension::Resistance => &[
                ("Ohm", Scale::Pow10(0)),
                ("kOhm", Scale::Pow10(3)),
                ("MOhm", Scale::Pow10(6)),
                ("Ω", Scale::Pow10(0)),
                ("kΩ", Scale::Pow10(3)),
                ("MΩ", Scale::Pow10(6)),
            ],
            Dimension::Frequency => &[("Hz", Scale::Pow10(0)), ("rpm", Scale::Factor(1.0 / 60.0))],
            Dimension::ChargePerForce => &[("C/N", Scale::Pow10(0)), ("pC/N", Scale::Pow10(-12))],
            Dimension::Acceleration => &[("m/s^2", Scale::Pow10(0)), ("m/s2", Scale::Pow10(0))],
            Dimension::FluxDensity => &[("T", Scale::Pow10(0)), ("mT", Scale::Pow10(-3))],
            Dimension::MomentOfInertia => &[
                ("kg*m^2", Scale::Pow10(0)),
                ("kg*m2", Scale::Pow10(0)),
                ("g*mm^2", Scale::Pow10(-9)),
                ("g*mm2", Scale::Pow10(-9)),
            ],
            Dimension::Dimensionless => &[("", Scale::Pow10(0))],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Length => "length",
            Dimension::Mass => "mass",
            Dimension::Stress => "stress",
            Dimension::Density => "density",
            Dimension::Capacitance => "capacitance",
            Dimension::Resistance => "resistance",
            Dimension::Frequency => "frequency",
            Dimension::ChargePerForce => "charge per force",
            Dimension::Acceleration => "acceleration",
            Dimension::FluxDensity => "flux density",
            Dimension::MomentOfInertia => "moment of inertia",
            Dimension::Dimensionless => "dimensionless",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("`{0}` is not a number")]
    BadNumber(String),
    #[error("unknown unit `{unit}` for a {dimension}; expected one of {expected}")]
    UnknownUnit {
        unit: String,
        dimension: Dimension,
        expected: String,
    },
    #[error("missing unit for a {0} (e.g. \"{1}\")")]
    MissingUnit(Dimension, String),
    #[error("value is not finite")]
    NotFinite,
}

/// Parses `"<number> <unit>"` into SI. Whitespace between number and unit is
/// optional. Dimensionless quantities take a bare number.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, UnitError> {
    let text = text.trim();
    let split = number_prefix_len(text);
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    if num.is_empty() {
        return Err(UnitError::BadNumber(text.to_string()));
    }
    if unit.is_empty() && dimension != Dimension::Dimensionless {
        return Err(UnitError::MissingUnit(
            dimension,
            format!("{num} {}", dimension.si_unit()),
        ));
    }
    let scale = dimension
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, f)| *f)
        .ok_or_else(|| UnitError::UnknownUnit {
            unit: unit.to_string(),
            dimension,
            expected: dimension
                .units()
                .iter()
                .map(|(u, _)| format!("`{u}`"))
                .collect::<Vec<_>>()
                .join(", "),
        })?;
    let bad = || UnitError::BadNumber(num.to_string());
    let si = match scale {
        Scale::Pow10(k) => {
            let (mantissa, exp) = match num.find(['e', 'E']) {
                Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| bad())?),
                None => (num, 0),
            };
            format!("{mantissa}e{}", exp.saturating_add(k))
                .parse::<f64>()
                .map_err(|_| bad())?
        }
        Scale::Factor(f) => num.parse::<f64>().map_err(|_| bad())? * f,
    };
    if !si.is_finite() {
        return Err(UnitError::NotFinite);
    }
    Ok(si)
}

/// Length of the leading floating-point literal.
fn number_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > start
    };
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let mut any = digits(&mut i);
    if i < b.len() && b[i] == b'.' {
        i += 1;
        any |= digits(&mut i);
    }
    if !any {
        return 0;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if digits(&mut j) {
            i = j;
        }
    }
    i
}

/// Canonical SI text for a value, exact under re-parsing.
pub fn format_quantity(value: f64, dimension: Dimension) -> String {
    match dimension {
        Dimension::Dimensionless => format!("{value:?}"),
        d => format!("{value:?} {}", d.si_unit()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopper_gap_in_millimetres() {
        assert_eq!(parse_quantity("14.4 mm", Dimension::Length).unwrap(), 14.4e-3);
        assert_eq!(parse_quantity("14.4mm", Dimension::Length).unwrap(), 14.4e-3);
    }

    #[test]
    fn table_values() {
        assert_eq!(parse_quantity("193 GPa", Dimension::Stress).unwrap(), 193e9);
        assert_eq!(parse_quantity("2.42 g", Dimension::Mass).unwrap(), 2.42e-3);
        assert_eq!(
            parse_quantity("-23e-12 C/N", Dimension::ChargePerForce).unwrap(),
            -23e-12
        );
        assert!((parse_quantity("1.38 nF", Dimension::Capacitance).unwrap() - 1.38e-9).abs() < 1e-24);
        assert_eq!(parse_quantity("1 MOhm", Dimension::Resistance).unwrap(), 1e6);
        assert_eq!(parse_quantity("7930 kg/m^3", Dimension::Density).unwrap(), 7930.0);
        assert_eq!(parse_quantity("900 rpm", Dimension::Frequency).unwrap(), 15.0);
        assert_eq!(parse_quantity("0.028", Dimension::Dimensionless).unwrap(), 0.028);
    }

    #[test]
    fn rejects_mismatched_or_missing_units() {
        assert!(matches!(
            parse_quantity("14.4 g", Dimension::Length),
            Err(UnitError::UnknownUnit { .. })
        ));
        assert!(matches!(
            parse_quantity("14.4", Dimension::Length),
            Err(UnitError::MissingUnit(..))
        ));
        assert!(matches!(
            parse_quantity("mm", Dimension::Length),
            Err(UnitError::BadNumber(_))
        ));
        assert!(matches!(
            parse_quantity("1e999 m", Dimension::Length),
            Err(UnitError::NotFinite)
        ));
    }

    #[test]
    fn canonical_text_round_trips() {
        for v in [0.033, 1.38e-9, 193e9, -23e-12, 0.1 + 0.2] {
            let s = format_quantity(v, Dimension::Length);
            assert_eq!(parse_quantity(&s, Dimension::Length).unwrap(), v);
        }
    }
}
