//! Scenario files: device, sweep, solver and plugin settings in TOML with
//! unit-suffixed values.
//!
//! ```toml
//! name = "stopper_main_14_4"
//!
//! [device]
//! l3 = "57 mm"
//! m1 = "2.42 g"
//!
//! [sweep]
//! f_low = "10 Hz"
//! f_high = "16 Hz"
//!
//! [[stopper]]
//! target = "main_beam"
//! gap = "14.4 mm"
//! ```
//!
//! Omitted keys take the prototype values. A batch file holds a `[defaults]`
//! table merged under every `[[scenario]]` entry and names its `baseline`.

use crate::forces::{ContactSide, MagnetConfig, PluginConfig, Polarity, StopperConfig, Target};
use crate::geometry::{CouplingForm, GeometryError, HarvesterConfig};
use crate::ode::Tolerances;
use crate::simulate::{Direction, SimSettings, SweepPlan};
use crate::units::{format_quantity, parse_quantity, Dimension};
use sha2::{Digest, Sha256};
use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Syntax,
    Unit,
    Type,
    Invariant,
    UnknownKey,
    Duplicate,
}

impl ErrorKind {
    pub fn label(self) -> &'static str {
        match self {
            ErrorKind::Io => "io",
            ErrorKind::Syntax => "syntax",
            ErrorKind::Unit => "unit",
            ErrorKind::Type => "type",
            ErrorKind::Invariant => "invariant",
            ErrorKind::UnknownKey => "unknown_key",
            ErrorKind::Duplicate => "duplicate",
        }
    }
}

/// A located problem in a scenario file. Also used for warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: ErrorKind,
    /// 1-based; `None` when the value was defaulted rather than written.
    pub line: Option<usize>,
    pub column: Option<usize>,
    /// Dotted key path, e.g. `device.pzt_length`.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if !self.key.is_empty() {
            write!(f, "`{}`: ", self.key)?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for Diagnostic {}

pub type ScenarioError = Diagnostic;

/// Settings of the frequency map written next to the sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub f_low: f64,
    pub f_high: f64,
    pub step: f64,
}

impl MapSpec {
    pub fn drive_hz(&self) -> Vec<f64> {
        let n = ((self.f_high - self.f_low) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.f_low + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub f_low: f64,
    pub f_high: f64,
    pub step: f64,
    pub settle_cycles: usize,
    pub measure_cycles: usize,
    pub carry_state: bool,
    pub directions: Vec<Direction>,
}

impl SweepSpec {
    pub fn plan(&self, direction: Direction) -> SweepPlan {
        SweepPlan {
            direction,
            f_low: self.f_low,
            f_high: self.f_high,
            step: self.step,
            settle_cycles: self.settle_cycles,
            measure_cycles: self.measure_cycles,
            carry_state: self.carry_state,
        }
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            f_low: 10.0,
            f_high: 16.0,
            step: 0.05,
            settle_cycles: 200,
            measure_cycles: 20,
            carry_state: true,
            directions: vec![Direction::Up, Direction::Down],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub device: HarvesterConfig,
    pub sweep: SweepSpec,
    pub map: MapSpec,
    pub solver: SimSettings,
    pub plugins: Vec<PluginConfig>,
    pub output: Option<PathBuf>,
}

impl Scenario {
    pub fn baseline(name: &str) -> Self {
        Self {
            name: name.to_string(),
            device: HarvesterConfig::prototype(),
            sweep: SweepSpec::default(),
            map: MapSpec {
                f_low: 0.0,
                f_high: 16.0,
                step: 0.25,
            },
            solver: SimSettings::default(),
            plugins: Vec::new(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub baseline: Option<String>,
    pub scenarios: Vec<Scenario>,
}

/// A parsed value together with the warnings raised while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<Diagnostic>,
}

// ---------------------------------------------------------------------------
// Owned, span-annotated document tree.

#[derive(Debug, Clone)]
struct Item {
    key_span: Range<usize>,
    span: Range<usize>,
    value: Value,
}

#[derive(Debug, Clone)]
enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Array(Vec<Item>),
    Table(Vec<(String, Item)>),
    Other,
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Bool(_) => "boolean",
            Value::Array(_) => "array",
            Value::Table(_) => "table",
            Value::Other => "datetime",
        }
    }
}

fn convert(v: &toml::Spanned<toml::de::DeValue<'_>>, key_span: Range<usize>) -> Item {
    use toml::de::DeValue;
    let value = match v.get_ref() {
        DeValue::String(s) => Value::Str(s.to_string()),
        DeValue::Integer(i) => match i64::from_str_radix(i.as_str(), i.radix()) {
            Ok(n) => Value::Int(n),
            Err(_) => Value::Other,
        },
        DeValue::Float(f) => match f.as_str().parse::<f64>() {
            Ok(x) => Value::Float(x),
            Err(_) => Value::Other,
        },
        DeValue::Boolean(b) => Value::Bool(*b),
        DeValue::Datetime(_) => Value::Other,
        DeValue::Array(a) => Value::Array(a.iter().map(|e| convert(e, e.span())).collect()),
        DeValue::Table(t) => Value::Table(convert_table(t)),
    };
    Item {
        key_span,
        span: v.span(),
        value,
    }
}

fn convert_table(t: &toml::de::DeTable<'_>) -> Vec<(String, Item)> {
    t.iter()
        .map(|(k, v)| (k.get_ref().to_string(), convert(v, k.span())))
        .collect()
}

fn merge(base: &mut Vec<(String, Item)>, over: &[(String, Item)]) {
    for (k, item) in over {
        match base.iter_mut().find(|(bk, _)| bk == k) {
            Some((_, existing)) => match (&mut existing.value, &item.value) {
                (Value::Table(b), Value::Table(o)) => merge(b, o),
                _ => *existing = item.clone(),
            },
            None => base.push((k.clone(), item.clone())),
        }
    }
}

// ---------------------------------------------------------------------------
// Reading.

struct Reader<'s> {
    src: &'s str,
    strict: bool,
    warnings: RefCell<Vec<Diagnostic>>,
}

impl<'s> Reader<'s> {
    fn locate(&self, span: &Range<usize>) -> (Option<usize>, Option<usize>) {
        if span.start == 0 && span.end == 0 || span.start > self.src.len() {
            return (None, None);
        }
        let before = &self.src[..span.start];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (Some(line), Some(column))
    }

    fn diag(&self, kind: ErrorKind, span: &Range<usize>, key: &str, message: impl Into<String>) -> Diagnostic {
        let (line, column) = self.locate(span);
        Diagnostic {
            kind,
            line,
            column,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

struct Table<'t> {
    path: String,
    span: Range<usize>,
    entries: &'t [(String, Item)],
    used: RefCell<HashSet<String>>,
}

type Res<T> = Result<T, Diagnostic>;

impl<'t> Table<'t> {
    fn root(entries: &'t [(String, Item)]) -> Self {
        Self {
            path: String::new(),
            span: 0..0,
            entries,
            used: RefCell::new(HashSet::new()),
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&self, key: &str) -> Option<&'t Item> {
        let found = self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v);
        if found.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        found
    }

    fn span_of(&self, key: &str) -> Range<usize> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map_or(self.span.clone(), |(_, v)| v.key_span.clone())
    }

    fn type_error(&self, r: &Reader, key: &str, item: &Item, want: &str) -> Diagnostic {
        r.diag(
            ErrorKind::Type,
            &item.span,
            &self.key_path(key),
            format!("expected {want}, found {}", item.value.type_name()),
        )
    }

    fn quantity(&self, r: &Reader, key: &str, dim: Dimension) -> Res<Option<f64>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        let parsed = match &item.value {
            Value::Str(s) => parse_quantity(s, dim),
            Value::Int(n) if dim == Dimension::Dimensionless => Ok(*n as f64),
            Value::Float(x) if dim == Dimension::Dimensionless && x.is_finite() => Ok(*x),
            Value::Int(_) | Value::Float(_) => parse_quantity(&number_text(&item.value), dim),
            _ => return Err(self.type_error(r, key, item, &format!("a {dim} such as \"1 {}\"", dim.si_unit()))),
        };
        parsed
            .map(Some)
            .map_err(|e| r.diag(ErrorKind::Unit, &item.span, &self.key_path(key), e.to_string()))
    }

    fn set_quantity(&self, r: &Reader, key: &str, dim: Dimension, slot: &mut f64) -> Res<()> {
        if let Some(v) = self.quantity(r, key, dim)? {
            *slot = v;
        }
        Ok(())
    }

    fn count(&self, r: &Reader, key: &str) -> Res<Option<usize>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        match item.value {
            Value::Int(n) if n >= 0 => Ok(Some(n as usize)),
            _ => Err(self.type_error(r, key, item, "a non-negative integer")),
        }
    }

    fn flag(&self, r: &Reader, key: &str) -> Res<Option<bool>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        match item.value {
            Value::Bool(b) => Ok(Some(b)),
            _ => Err(self.type_error(r, key, item, "a boolean")),
        }
    }

    fn text(&self, r: &Reader, key: &str) -> Res<Option<String>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        match &item.value {
            Value::Str(s) => Ok(Some(s.clone())),
            _ => Err(self.type_error(r, key, item, "a string")),
        }
    }

    fn choice<T: Copy>(&self, r: &Reader, key: &str, options: &[(&str, T)]) -> Res<Option<T>> {
        let Some(text) = self.text(r, key)? else {
            return Ok(None);
        };
        options
            .iter()
            .find(|(n, _)| *n == text)
            .map(|(_, v)| Some(*v))
            .ok_or_else(|| {
                let names: Vec<String> = options.iter().map(|(n, _)| format!("\"{n}\"")).collect();
                r.diag(
                    ErrorKind::Type,
                    &self.get(key).map_or(self.span.clone(), |i| i.span.clone()),
                    &self.key_path(key),
                    format!("unknown value \"{text}\"; expected one of {}", names.join(", ")),
                )
            })
    }

    /// Either one quantity (applied to all three) or an array of three.
    fn triple(&self, r: &Reader, key: &str, dim: Dimension) -> Res<Option<[f64; 3]>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        match &item.value {
            Value::Array(a) if a.len() == 3 => {
                let mut out = [0.0; 3];
                for (slot, e) in out.iter_mut().zip(a) {
                    let Value::Str(s) = &e.value else {
                        return Err(self.type_error(r, key, e, &format!("a {dim} string")));
                    };
                    *slot = parse_quantity(s, dim)
                        .map_err(|err| r.diag(ErrorKind::Unit, &e.span, &self.key_path(key), err.to_string()))?;
                }
                Ok(Some(out))
            }
            Value::Array(_) => Err(self.type_error(r, key, item, "three values")),
            _ => Ok(self.quantity(r, key, dim)?.map(|v| [v; 3])),
        }
    }

    fn table(&self, r: &Reader, key: &str) -> Res<Option<Table<'t>>> {
        let Some(item) = self.get(key) else { return Ok(None) };
        match &item.value {
            Value::Table(entries) => Ok(Some(Table {
                path: self.key_path(key),
                span: item.key_span.clone(),
                entries,
                used: RefCell::new(HashSet::new()),
            })),
            _ => Err(self.type_error(r, key, item, "a table")),
        }
    }

    fn tables(&self, r: &Reader, key: &str) -> Res<Vec<Table<'t>>> {
        let Some(item) = self.get(key) else {
            return Ok(Vec::new());
        };
        let Value::Array(a) = &item.value else {
            return Err(self.type_error(r, key, item, "an array of tables"));
        };
        a.iter()
            .enumerate()
            .map(|(i, e)| match &e.value {
                Value::Table(entries) => Ok(Table {
                    path: format!("{}[{i}]", self.key_path(key)),
                    span: e.span.clone(),
                    entries,
                    used: RefCell::new(HashSet::new()),
                }),
                _ => Err(self.type_error(r, key, e, "a table")),
            })
            .collect()
    }

    /// Reports keys that were never read.
    fn finish(&self, r: &Reader) -> Res<()> {
        let used = self.used.borrow();
        for (k, item) in self.entries {
            if !used.contains(k) {
                let d = r.diag(ErrorKind::UnknownKey, &item.key_span, &self.key_path(k), "unknown key");
                if r.strict {
                    return Err(d);
                }
                r.warnings.borrow_mut().push(d);
            }
        }
        Ok(())
    }
}

fn number_text(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Float(x) => x.to_string(),
        _ => String::new(),
    }
}

const TARGETS: [(&str, Target); 2] = [
    ("main_beam", Target::MainBeam),
    ("auxiliary_beam", Target::AuxiliaryBeam),
];

fn read_device(r: &Reader, root: &Table, out: &mut HarvesterConfig) -> Res<()> {
    use Dimension::*;
    let geometry_error = |tables: &[&Table], e: GeometryError| -> Diagnostic {
        let field = match &e {
            GeometryError::Invalid { field, .. } => *field,
            GeometryError::OutOfDomain { .. } => "",
        };
        let owner = tables.iter().find(|t| t.entries.iter().any(|(k, _)| k == field));
        match owner {
            Some(t) => r.diag(
                ErrorKind::Invariant,
                &t.span_of(field),
                &t.key_path(field),
                e.to_string(),
            ),
            None => Diagnostic {
                kind: ErrorKind::Invariant,
                line: None,
                column: None,
                key: field.to_string(),
                message: e.to_string(),
            },
        }
    };
    let device = root.table(r, "device")?;
    let layup = root.table(r, "layup")?;
    if let Some(d) = &device {
        macro_rules! set {
            ($($key:literal, $dim:expr => $slot:expr;)*) => {
                $(d.set_quantity(r, $key, $dim, &mut $slot)?;)*
            };
        }
        set! {
            "rotation_radius", Length => out.rotation_radius;
            "l1", Length => out.section_lengths[0];
            "l2", Length => out.section_lengths[1];
            "l3", Length => out.section_lengths[2];
            "l4", Length => out.section_lengths[3];
            "mass_length", Length => out.mass_length;
            "pzt_length", Length => out.pzt_length;
            "pzt_offset", Length => out.pzt_offset;
            "main_width", Length => out.main_width;
            "aux_width", Length => out.aux_width;
            "pzt_width", Length => out.pzt_width;
            "substrate_thickness", Length => out.substrate_thickness;
            "pzt_thickness", Length => out.pzt_thickness;
            "substrate_modulus", Stress => out.substrate_modulus;
            "pzt_modulus", Stress => out.pzt_modulus;
            "pzt_inner_modulus", Stress => out.pzt_inner_modulus;
            "substrate_density", Density => out.substrate_density;
            "pzt_density", Density => out.pzt_density;
            "m1", Mass => out.tip_masses[0];
            "m2", Mass => out.tip_masses[1];
            "d31", ChargePerForce => out.d31;
            "capacitance", Capacitance => out.capacitance;
            "load_resistance", Resistance => out.load_resistance;
            "zeta1", Dimensionless => out.damping[0];
            "zeta2", Dimensionless => out.damping[1];
            "gravity", Acceleration => out.gravity;
        }
        d.finish(r)?;
    }
    if let Some(l) = &layup {
        if let Some(w) = l.quantity(r, "rail_width", Length)? {
            out.layup.rail_width = Some(w);
        }
        l.set_quantity(r, "inner_layer_thickness", Length, &mut out.layup.inner_layer_thickness)?;
        for (i, key) in ["tip_inertia1", "tip_inertia2"].iter().enumerate() {
            if let Some(j) = l.quantity(r, key, MomentOfInertia)? {
                out.layup.tip_inertia[i] = Some(j);
            }
        }
        if let Some(b) = l.flag(r, "rotary_inertia")? {
            out.layup.rotary_inertia = b;
        }
        if let Some(c) = l.choice(
            r,
            "coupling_form",
            &[
                ("slope_difference", CouplingForm::SlopeDifference),
                ("point", CouplingForm::Point),
            ],
        )? {
            out.layup.coupling_form = c;
        }
        l.finish(r)?;
    }
    let owners: Vec<&Table> = device.iter().chain(layup.iter()).collect();
    out.validate().map_err(|e| geometry_error(&owners, e))
}

fn read_stopper(r: &Reader, t: &Table) -> Res<StopperConfig> {
    use Dimension::*;
    let target = t.choice(r, "target", &TARGETS)?.ok_or_else(|| {
        r.diag(
            ErrorKind::Invariant,
            &t.span,
            &t.key_path("target"),
            "missing stopper target",
        )
    })?;
    let mut s = match target {
        Target::MainBeam => StopperConfig::main_beam(0.0),
        Target::AuxiliaryBeam => StopperConfig::auxiliary_beam(0.0),
    };
    s.gap = t
        .quantity(r, "gap", Length)?
        .ok_or_else(|| r.diag(ErrorKind::Invariant, &t.span, &t.key_path("gap"), "missing stopper gap"))?;
    if let Some(side) = t.choice(
        r,
        "side",
        &[("below", ContactSide::Below), ("above", ContactSide::Above)],
    )? {
        s.side = side;
    }
    t.set_quantity(r, "length", Length, &mut s.length)?;
    t.set_quantity(r, "width", Length, &mut s.width)?;
    t.set_quantity(r, "thickness", Length, &mut s.thickness)?;
    t.set_quantity(r, "modulus", Stress, &mut s.modulus)?;
    t.set_quantity(r, "density", Density, &mut s.density)?;
    t.set_quantity(r, "tip_mass", Mass, &mut s.tip_mass)?;
    t.set_quantity(r, "damping", Dimensionless, &mut s.damping)?;
    t.set_quantity(r, "radius", Length, &mut s.radius)?;
    t.finish(r)?;
    s.validate().map_err(|e| force_error(r, t, e))?;
    Ok(s)
}

fn read_magnet(r: &Reader, t: &Table) -> Res<MagnetConfig> {
    use Dimension::*;
    let target = t.choice(r, "target", &TARGETS)?.ok_or_else(|| {
        r.diag(
            ErrorKind::Invariant,
            &t.span,
            &t.key_path("target"),
            "missing magnet target",
        )
    })?;
    let mut m = match target {
        Target::MainBeam => MagnetConfig::main_beam(0.0),
        Target::AuxiliaryBeam => MagnetConfig::auxiliary_beam(0.0),
    };
    m.gap = t
        .quantity(r, "gap", Length)?
        .ok_or_else(|| r.diag(ErrorKind::Invariant, &t.span, &t.key_path("gap"), "missing magnet gap"))?;
    if let Some(e) = t.triple(r, "moving_edges", Length)? {
        m.moving_edges = e;
    }
    if let Some(e) = t.triple(r, "fixed_edges", Length)? {
        m.fixed_edges = e;
    }
    if let Some(b) = t.quantity(r, "remanence", FluxDensity)? {
        m.moving_remanence = b;
        m.fixed_remanence = b;
    }
    t.set_quantity(r, "moving_remanence", FluxDensity, &mut m.moving_remanence)?;
    t.set_quantity(r, "fixed_remanence", FluxDensity, &mut m.fixed_remanence)?;
    if let Some(p) = t.choice(
        r,
        "polarity",
        &[("repelling", Polarity::Repelling), ("attracting", Polarity::Attracting)],
    )? {
        m.polarity = p;
    }
    t.set_quantity(r, "opening_sign", Dimensionless, &mut m.opening_sign)?;
    t.finish(r)?;
    m.validate().map_err(|e| force_error(r, t, e))?;
    Ok(m)
}

fn force_error(r: &Reader, t: &Table, e: crate::forces::ForceError) -> Diagnostic {
    let field = match &e {
        crate::forces::ForceError::Invalid { field, .. } => *field,
        _ => "",
    };
    r.diag(
        ErrorKind::Invariant,
        &t.span_of(field),
        &t.key_path(field),
        e.to_string(),
    )
}

fn read_scenario(r: &Reader, root: &Table, default_name: &str) -> Res<Scenario> {
    use Dimension::*;
    let name = root.text(r, "name")?.unwrap_or_else(|| default_name.to_string());
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(r.diag(
            ErrorKind::Invariant,
            &root.span_of("name"),
            &root.key_path("name"),
            "name must be non-empty and free of path separators",
        ));
    }
    let mut s = Scenario::baseline(&name);
    s.output = root.text(r, "output")?.map(PathBuf::from);
    read_device(r, root, &mut s.device)?;

    if let Some(t) = root.table(r, "sweep")? {
        t.set_quantity(r, "f_low", Frequency, &mut s.sweep.f_low)?;
        t.set_quantity(r, "f_high", Frequency, &mut s.sweep.f_high)?;
        t.set_quantity(r, "step", Frequency, &mut s.sweep.step)?;
        if let Some(n) = t.count(r, "settle_cycles")? {
            s.sweep.settle_cycles = n;
        }
        if let Some(n) = t.count(r, "measure_cycles")? {
            s.sweep.measure_cycles = n;
        }
        if let Some(b) = t.flag(r, "carry_state")? {
            s.sweep.carry_state = b;
        }
        if let Some(d) = t.choice(r, "directions", &[("up", 0), ("down", 1), ("both", 2)])? {
            s.sweep.directions = directions(d);
        }
        t.finish(r)?;
        if let Err(e) = s.sweep.plan(Direction::Up).validate() {
            return Err(r.diag(ErrorKind::Invariant, &t.span, &t.path, e.to_string()));
        }
    }
    if let Some(t) = root.table(r, "map")? {
        t.set_quantity(r, "f_low", Frequency, &mut s.map.f_low)?;
        t.set_quantity(r, "f_high", Frequency, &mut s.map.f_high)?;
        t.set_quantity(r, "step", Frequency, &mut s.map.step)?;
        t.finish(r)?;
        if !(s.map.step > 0.0 && s.map.f_low >= 0.0 && s.map.f_high >= s.map.f_low) {
            return Err(r.diag(
                ErrorKind::Invariant,
                &t.span,
                &t.path,
                "need 0 ≤ f_low ≤ f_high and step > 0",
            ));
        }
    }
    if let Some(t) = root.table(r, "solver")? {
        t.set_quantity(r, "rtol", Dimensionless, &mut s.solver.tolerances.rtol)?;
        t.set_quantity(r, "atol", Dimensionless, &mut s.solver.tolerances.atol)?;
        if let Some(n) = t.count(r, "samples_per_period")? {
            s.solver.samples_per_period = n;
        }
        t.finish(r)?;
        let tol = &s.solver.tolerances;
        if !(tol.rtol > 0.0 && tol.atol > 0.0) {
            return Err(r.diag(ErrorKind::Invariant, &t.span, &t.path, "tolerances must be positive"));
        }
        if s.solver.samples_per_period < 50 {
            return Err(r.diag(
                ErrorKind::Invariant,
                &t.span_of("samples_per_period"),
                &t.key_path("samples_per_period"),
                "need at least 50 samples per period",
            ));
        }
    }

    let mut seen: Vec<(&str, Target)> = Vec::new();
    let mut claim = |kind: &'static str, target: Target, t: &Table| -> Res<()> {
        if seen.contains(&(kind, target)) {
            return Err(r.diag(
                ErrorKind::Duplicate,
                &t.span,
                &t.path,
                format!("more than one {kind} on {}", target_name(target)),
            ));
        }
        seen.push((kind, target));
        Ok(())
    };
    for t in root.tables(r, "stopper")? {
        let cfg = read_stopper(r, &t)?;
        claim("stopper", cfg.target, &t)?;
        s.plugins.push(PluginConfig::Stopper(cfg));
    }
    for t in root.tables(r, "magnet")? {
        let cfg = read_magnet(r, &t)?;
        claim("magnet", cfg.target, &t)?;
        s.plugins.push(PluginConfig::Magnet(cfg));
    }
    Ok(s)
}

fn directions(code: u8) -> Vec<Direction> {
    match code {
        0 => vec![Direction::Up],
        1 => vec![Direction::Down],
        _ => vec![Direction::Up, Direction::Down],
    }
}

fn target_name(t: Target) -> &'static str {
    match t {
        Target::MainBeam => "main_beam",
        Target::AuxiliaryBeam => "auxiliary_beam",
    }
}

fn parse_document(text: &str) -> Res<Vec<(String, Item)>> {
    let doc = toml::de::DeTable::parse(text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        let r = Reader {
            src: text,
            strict: false,
            warnings: RefCell::new(Vec::new()),
        };
        let mut d = r.diag(ErrorKind::Syntax, &span, "", e.message().trim().to_string());
        if d.line.is_none() {
            d.line = Some(1);
            d.column = Some(1);
        }
        d
    })?;
    Ok(convert_table(doc.get_ref()))
}

/// Parses one scenario from TOML text.
pub fn load_scenario_str(text: &str, strict: bool) -> Result<Loaded<Scenario>, ScenarioError> {
    let entries = parse_document(text)?;
    let r = Reader {
        src: text,
        strict,
        warnings: RefCell::new(Vec::new()),
    };
    let root = Table::root(&entries);
    let value = read_scenario(&r, &root, "scenario")?;
    root.finish(&r)?;
    Ok(Loaded {
        value,
        warnings: r.warnings.into_inner(),
    })
}

pub fn load_scenario(path: &Path, strict: bool) -> Result<Loaded<Scenario>, ScenarioError> {
    load_scenario_str(&read_file(path)?, strict)
}

/// Parses a batch: `baseline`, optional `[defaults]`, and `[[scenario]]` entries.
pub fn load_batch_str(text: &str, strict: bool) -> Result<Loaded<Batch>, ScenarioError> {
    let entries = parse_document(text)?;
    let r = Reader {
        src: text,
        strict,
        warnings: RefCell::new(Vec::new()),
    };
    let root = Table::root(&entries);
    let baseline = root.text(&r, "baseline")?;
    let defaults: Vec<(String, Item)> = match root.get("defaults") {
        Some(Item {
            value: Value::Table(t), ..
        }) => t.clone(),
        Some(item) => return Err(root.type_error(&r, "defaults", item, "a table")),
        None => Vec::new(),
    };
    let Some(list) = root.get("scenario") else {
        return Err(r.diag(
            ErrorKind::Invariant,
            &(0..0),
            "scenario",
            "batch has no [[scenario]] entries",
        ));
    };
    let Value::Array(items) = &list.value else {
        return Err(root.type_error(&r, "scenario", list, "an array of tables"));
    };
    let mut scenarios = Vec::with_capacity(items.len());
    let mut names: Vec<String> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let Value::Table(own) = &item.value else {
            return Err(root.type_error(&r, "scenario", item, "a table"));
        };
        let mut merged = defaults.clone();
        merge(&mut merged, own);
        let t = Table {
            path: String::new(),
            span: item.span.clone(),
            entries: &merged,
            used: RefCell::new(HashSet::new()),
        };
        let scenario = read_scenario(&r, &t, &format!("scenario_{}", i + 1)).map_err(|mut d| {
            d.key = format!("scenario[{i}].{}", d.key);
            d
        })?;
        t.finish(&r)?;
        if names.contains(&scenario.name) {
            return Err(r.diag(
                ErrorKind::Duplicate,
                &t.span_of("name"),
                &format!("scenario[{i}].name"),
                format!("scenario name \"{}\" is used twice", scenario.name),
            ));
        }
        names.push(scenario.name.clone());
        scenarios.push(scenario);
    }
    if let Some(b) = &baseline {
        if !names.contains(b) {
            return Err(r.diag(
                ErrorKind::Invariant,
                &root.span_of("baseline"),
                "baseline",
                format!("baseline \"{b}\" is not one of the scenarios"),
            ));
        }
    }
    Ok(Loaded {
        value: Batch { baseline, scenarios },
        warnings: r.warnings.into_inner(),
    })
}

pub fn load_batch(path: &Path, strict: bool) -> Result<Loaded<Batch>, ScenarioError> {
    load_batch_str(&read_file(path)?, strict)
}

fn read_file(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Diagnostic {
        kind: ErrorKind::Io,
        line: None,
        column: None,
        key: String::new(),
        message: format!("{}: {e}", path.display()),
    })
}

// ---------------------------------------------------------------------------
// Canonical output.

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl Scenario {
    /// Every setting written out in SI. Loading the result yields an equal
    /// scenario.
    pub fn to_toml(&self) -> String {
        use Dimension::*;
        let q = format_quantity;
        let d = &self.device;
        let mut o = String::new();
        let _ = writeln!(o, "name = {}", quoted(&self.name));
        if let Some(p) = &self.output {
            let _ = writeln!(o, "output = {}", quoted(&p.to_string_lossy()));
        }
        o.push_str("\n[device]\n");
        let fields: [(&str, f64, Dimension); 26] = [
            ("rotation_radius", d.rotation_radius, Length),
            ("l1", d.section_lengths[0], Length),
            ("l2", d.section_lengths[1], Length),
            ("l3", d.section_lengths[2], Length),
            ("l4", d.section_lengths[3], Length),
            ("mass_length", d.mass_length, Length),
            ("pzt_length", d.pzt_length, Length),
            ("pzt_offset", d.pzt_offset, Length),
            ("main_width", d.main_width, Length),
            ("aux_width", d.aux_width, Length),
            ("pzt_width", d.pzt_width, Length),
            ("substrate_thickness", d.substrate_thickness, Length),
            ("pzt_thickness", d.pzt_thickness, Length),
            ("substrate_modulus", d.substrate_modulus, Stress),
            ("pzt_modulus", d.pzt_modulus, Stress),
            ("pzt_inner_modulus", d.pzt_inner_modulus, Stress),
            ("substrate_density", d.substrate_density, Density),
            ("pzt_density", d.pzt_density, Density),
            ("m1", d.tip_masses[0], Mass),
            ("m2", d.tip_masses[1], Mass),
            ("d31", d.d31, ChargePerForce),
            ("capacitance", d.capacitance, Capacitance),
            ("load_resistance", d.load_resistance, Resistance),
            ("zeta1", d.damping[0], Dimensionless),
            ("zeta2", d.damping[1], Dimensionless),
            ("gravity", d.gravity, Acceleration),
        ];
        for (k, v, dim) in fields {
            let _ = writeln!(o, "{k} = \"{}\"", q(v, dim));
        }
        o.push_str("\n[layup]\n");
        if let Some(w) = d.layup.rail_width {
            let _ = writeln!(o, "rail_width = \"{}\"", q(w, Length));
        }
        let _ = writeln!(
            o,
            "inner_layer_thickness = \"{}\"",
            q(d.layup.inner_layer_thickness, Length)
        );
        for (i, j) in d.layup.tip_inertia.iter().enumerate() {
            if let Some(j) = j {
                let _ = writeln!(o, "tip_inertia{} = \"{}\"", i + 1, q(*j, MomentOfInertia));
            }
        }
        let _ = writeln!(o, "rotary_inertia = {}", d.layup.rotary_inertia);
        let form = match d.layup.coupling_form {
            CouplingForm::Point => "point",
            CouplingForm::SlopeDifference => "slope_difference",
        };
        let _ = writeln!(o, "coupling_form = \"{form}\"");

        let s = &self.sweep;
        let dirs = match s.directions.as_slice() {
            [Direction::Up] => "up",
            [Direction::Down] => "down",
            _ => "both",
        };
        let _ = write!(
            o,
            "\n[sweep]\nf_low = \"{}\"\nf_high = \"{}\"\nstep = \"{}\"\nsettle_cycles = {}\nmeasure_cycles = {}\ncarry_state = {}\ndirections = \"{dirs}\"\n",
            q(s.f_low, Frequency),
            q(s.f_high, Frequency),
            q(s.step, Frequency),
            s.settle_cycles,
            s.measure_cycles,
            s.carry_state
        );
        let _ = write!(
            o,
            "\n[map]\nf_low = \"{}\"\nf_high = \"{}\"\nstep = \"{}\"\n",
            q(self.map.f_low, Frequency),
            q(self.map.f_high, Frequency),
            q(self.map.step, Frequency)
        );
        let _ = write!(
            o,
            "\n[solver]\nrtol = \"{}\"\natol = \"{}\"\nsamples_per_period = {}\n",
            q(self.solver.tolerances.rtol, Dimensionless),
            q(self.solver.tolerances.atol, Dimensionless),
            self.solver.samples_per_period
        );
        for p in &self.plugins {
            match p {
                PluginConfig::Stopper(st) => {
                    let side = match st.side {
                        ContactSide::Below => "below",
                        ContactSide::Above => "above",
                    };
                    let _ = write!(
                        o,
                        "\n[[stopper]]\ntarget = \"{}\"\nside = \"{side}\"\ngap = \"{}\"\nlength = \"{}\"\nwidth = \"{}\"\nthickness = \"{}\"\nmodulus = \"{}\"\ndensity = \"{}\"\ntip_mass = \"{}\"\ndamping = \"{}\"\nradius = \"{}\"\n",
                        target_name(st.target),
                        q(st.gap, Length),
                        q(st.length, Length),
                        q(st.width, Length),
                        q(st.thickness, Length),
                        q(st.modulus, Stress),
                        q(st.density, Density),
                        q(st.tip_mass, Mass),
                        q(st.damping, Dimensionless),
                        q(st.radius, Length)
                    );
                }
                PluginConfig::Magnet(m) => {
                    let edges = |e: [f64; 3]| {
                        format!(
                            "[\"{}\", \"{}\", \"{}\"]",
                            q(e[0], Length),
                            q(e[1], Length),
                            q(e[2], Length)
                        )
                    };
                    let polarity = match m.polarity {
                        Polarity::Repelling => "repelling",
                        Polarity::Attracting => "attracting",
                    };
                    let _ = write!(
                        o,
                        "\n[[magnet]]\ntarget = \"{}\"\ngap = \"{}\"\nmoving_edges = {}\nfixed_edges = {}\nmoving_remanence = \"{}\"\nfixed_remanence = \"{}\"\npolarity = \"{polarity}\"\nopening_sign = \"{}\"\n",
                        target_name(m.target),
                        q(m.gap, Length),
                        edges(m.moving_edges),
                        edges(m.fixed_edges),
                        q(m.moving_remanence, FluxDensity),
                        q(m.fixed_remanence, FluxDensity),
                        q(m.opening_sign, Dimensionless)
                    );
                }
            }
        }
        o
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.solver.tolerances
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = r#"
name = "baseline"

[device]
rotation_radius = "30 mm"
l1 = "33 mm"
l2 = "34 mm"
l3 = "57 mm"
l4 = "41 mm"
mass_length = "6 mm"
pzt_length = "34 mm"
main_width = "20 mm"
aux_width = "12 mm"
pzt_width = "12 mm"
substrate_thickness = "0.3 mm"
pzt_thickness = "0.4 mm"
substrate_modulus = "193 GPa"
pzt_modulus = "45 GPa"
pzt_inner_modulus = "4 GPa"
substrate_density = "7930 kg/m^3"
pzt_density = "1780 kg/m^3"
m1 = "2.42 g"
m2 = "1.25 g"
d31 = "-23e-12 C/N"
capacitance = "1.38 nF"
load_resistance = "1 MOhm"
zeta1 = 0.028
zeta2 = 0.034
"#;

    #[test]
    fn table_values_give_the_prototype() {
        let s = load_scenario_str(BASELINE, true).unwrap();
        assert!(s.warnings.is_empty());
        assert!(s.value.plugins.is_empty());
        let p = HarvesterConfig::prototype();
        let d = &s.value.device;
        assert_eq!(d.section_lengths, p.section_lengths);
        assert_eq!(d.tip_masses, p.tip_masses);
        assert!((d.capacitance - p.capacitance).abs() < 1e-22);
        assert_eq!(d.damping, p.damping);
    }

    #[test]
    fn stopper_gap_converts_to_metres() {
        let text = format!("{BASELINE}\n[[stopper]]\ntarget = \"main_beam\"\ngap = \"14.4 mm\"\n");
        let s = load_scenario_str(&text, true).unwrap().value;
        match &s.plugins[0] {
            PluginConfig::Stopper(st) => assert_eq!(st.gap, 0.0144),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn long_patch_names_pzt_length_with_line() {
        let text = BASELINE.replace("pzt_length = \"34 mm\"", "pzt_length = \"40 mm\"");
        let e = load_scenario_str(&text, false).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Invariant);
        assert_eq!(e.key, "device.pzt_length");
        let line = text.lines().position(|l| l.starts_with("pzt_length")).unwrap() + 1;
        assert_eq!(e.line, Some(line));
    }

    #[test]
    fn unknown_keys_warn_or_fail() {
        let text = format!("{BASELINE}flux_capacitor = \"1 F\"\n");
        let lenient = load_scenario_str(&text, false).unwrap();
        assert_eq!(lenient.warnings.len(), 1);
        assert_eq!(lenient.warnings[0].key, "device.flux_capacitor");
        let strict = load_scenario_str(&text, true).unwrap_err();
        assert_eq!(strict.kind, ErrorKind::UnknownKey);
    }

    #[test]
    fn unit_errors_are_located() {
        let text = BASELINE.replace("l3 = \"57 mm\"", "l3 = \"57 kg\"");
        let e = load_scenario_str(&text, false).unwrap_err();
        assert_eq!((e.kind, e.line), (ErrorKind::Unit, Some(8)));
        let text = BASELINE.replace("l3 = \"57 mm\"", "l3 = 0.057");
        assert_eq!(load_scenario_str(&text, false).unwrap_err().kind, ErrorKind::Unit);
    }

    #[test]
    fn syntax_error_has_a_line() {
        let e = load_scenario_str("name = \"x\"\n[device\n", false).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Syntax);
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn two_stoppers_on_one_beam_are_rejected() {
        let stop = "\n[[stopper]]\ntarget = \"main_beam\"\ngap = \"14.4 mm\"\n";
        let e = load_scenario_str(&format!("{BASELINE}{stop}{stop}"), false).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Duplicate);
        let ok = format!("{BASELINE}{stop}\n[[magnet]]\ntarget = \"main_beam\"\ngap = \"44 mm\"\n");
        assert_eq!(load_scenario_str(&ok, false).unwrap().value.plugins.len(), 2);
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = format!(
            "{BASELINE}\n[[stopper]]\ntarget = \"auxiliary_beam\"\ngap = \"15.4 mm\"\n[[magnet]]\ntarget = \"main_beam\"\ngap = \"39.5 mm\"\nmoving_edges = [\"3 mm\", \"4 mm\", \"5 mm\"]\n[layup]\nrail_width = \"7 mm\"\n"
        );
        let first = load_scenario_str(&text, true).unwrap().value;
        let again = load_scenario_str(&first.to_toml(), true).unwrap().value;
        assert_eq!(first, again);
        assert_eq!(first.hash(), again.hash());
        assert_eq!(first.hash().len(), 64);
    }

    #[test]
    fn batch_merges_defaults_and_checks_names() {
        let text = r#"
baseline = "light"
[defaults]
device.zeta1 = 0.03
[defaults.sweep]
step = "0.1 Hz"

[[scenario]]
name = "light"

[[scenario]]
name = "heavy"
device.m1 = "3.42 g"
"#;
        let b = load_batch_str(text, true).unwrap().value;
        assert_eq!(b.scenarios.len(), 2);
        assert_eq!(b.scenarios[1].device.tip_masses[0], 3.42e-3);
        assert_eq!(b.scenarios[1].device.damping[0], 0.03);
        assert_eq!(b.scenarios[0].sweep.step, 0.1);
        let dup = text.replace("name = \"heavy\"", "name = \"light\"");
        assert_eq!(load_batch_str(&dup, false).unwrap_err().kind, ErrorKind::Duplicate);
        let missing = text.replace("baseline = \"light\"", "baseline = \"nope\"");
        assert_eq!(load_batch_str(&missing, false).unwrap_err().kind, ErrorKind::Invariant);
    }
}
