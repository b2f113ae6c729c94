//! Line-oriented circuit description: types, parser, serializer, validator.
//!
//! ```text
//! * comment
//! .title divider
//! V1 in 0 DC 12
//! R1 in out 1k prate=0.5
//! R2 out 0 1k
//! .op
//! ```

mod parse;
mod units;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{BjtModel, CapacitorModel, Dielectric, DiodeModel, ResistorModel};

pub use parse::{parse, parse_bytes};
pub use units::{format_sig9, format_value, parse_value};
pub use validate::{validate, Violation};

/// Canonical name of the ground node.
pub const GROUND: &str = "0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: unknown device kind for element `{name}`")]
    UnknownDeviceKind { line: usize, name: String },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("cannot set `{param}` on `{component}`: {reason}")]
    InvalidOverride { component: String, param: String, reason: String },
    #[error("no element named `{0}`")]
    UnknownComponent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Resistor,
    Capacitor,
    Diode,
    Zener,
    Bjt,
    VoltageSource,
}

impl ComponentKind {
    pub fn terminal_count(self) -> usize {
        match self {
            ComponentKind::Bjt => 3,
            _ => 2,
        }
    }
}

/// Time-dependent value of an independent voltage source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceWaveform {
    Dc(f64),
    /// Piecewise-linear `(time, volts)` corners, times strictly increasing.
    /// Held constant before the first and after the last corner.
    Pwl(Vec<(f64, f64)>),
}

impl SourceWaveform {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            SourceWaveform::Dc(v) => *v,
            SourceWaveform::Pwl(points) => {
                let first = points[0];
                if t <= first.0 {
                    return first.1;
                }
                for pair in points.windows(2) {
                    let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn dc_value(&self) -> f64 {
        self.value_at(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeviceParams {
    Resistor(ResistorModel),
    Capacitor(CapacitorModel),
    /// Used by both `Diode` and `Zener` kinds; Zeners carry `breakdown_v`.
    Diode(DiodeModel),
    Bjt(BjtModel),
    Source(SourceWaveform),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Upper-cased element name, e.g. `R1`.
    pub name: String,
    pub kind: ComponentKind,
    /// Node names; collector/base/emitter for a BJT.
    pub terminals: Vec<String>,
    pub params: DeviceParams,
}

/// A value in a parameter override: numeric for most keys, a word for
/// `type=` or the diode flavour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Word(String),
}

impl ParamValue {
    pub fn parse(token: &str) -> Self {
        match parse_value(token) {
            Some(v) => ParamValue::Num(v),
            None => ParamValue::Word(token.to_ascii_lowercase()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(v) => write!(f, "{}", format_value(*v)),
            ParamValue::Word(w) => f.write_str(w),
        }
    }
}

fn check(cond: bool, reason: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(reason.to_string())
    }
}

fn positive(v: f64) -> Result<f64, String> {
    check(v.is_finite() && v > 0.0, "must be finite and > 0").map(|_| v)
}

impl Component {
    /// Sets one parameter by key. Keys are the netlist `key=` names, plus
    /// `r`, `c` and `dc` for the positional value of R, C and V elements.
    pub fn set_param(&mut self, key: &str, value: &ParamValue) -> Result<(), NetlistError> {
        let key_lc = key.to_ascii_lowercase();
        let err = |reason: String| NetlistError::InvalidOverride {
            component: self.name.clone(),
            param: key_lc.clone(),
            reason,
        };
        let num = || match value {
            ParamValue::Num(v) => Ok(*v),
            ParamValue::Word(w) => Err(format!("expected a number, got `{w}`")),
        };
        let result: Result<(), String> = match (&mut self.params, key_lc.as_str()) {
            (DeviceParams::Resistor(m), "r") => num().and_then(positive).map(|v| m.resistance = v),
            (DeviceParams::Resistor(m), "prate") => num().and_then(positive).map(|v| m.rated_power = v),
            (DeviceParams::Capacitor(m), "c") => num().and_then(positive).map(|v| m.capacitance = v),
            (DeviceParams::Capacitor(m), "type") => match value {
                ParamValue::Word(w) => match Dielectric::parse(w) {
                    Some(d) => {
                        m.dielectric = Some(d);
                        Ok(())
                    }
                    None => Err(format!("unknown dielectric `{w}`")),
                },
                ParamValue::Num(_) => Err("expected electrolytic or polymer".into()),
            },
            (DeviceParams::Capacitor(m), "esr") => num().and_then(|v| {
                check(v.is_finite() && v >= 0.0, "must be finite and >= 0")?;
                m.esr_override = Some(v);
                Ok(())
            }),
            (DeviceParams::Capacitor(m), "rleak") => num().and_then(positive).map(|v| m.rleak_override = Some(v)),
            (DeviceParams::Diode(m), "is") => num().and_then(positive).map(|v| m.is_sat = v),
            (DeviceParams::Diode(m), "n") => num().and_then(|v| {
                check((1.0..=2.0).contains(&v), "ideality must lie in [1, 2]")?;
                m.n_ideality = v;
                Ok(())
            }),
            (DeviceParams::Diode(m), "bv") => {
                if self.kind != ComponentKind::Zener {
                    Err("bv applies to zener diodes only".into())
                } else {
                    num().and_then(positive).map(|v| m.breakdown_v = Some(v))
                }
            }
            (DeviceParams::Diode(m), "iave") => num().and_then(positive).map(|v| m.i_ave_rating = v),
            (DeviceParams::Bjt(m), "bf") => num().and_then(positive).map(|v| m.beta_f = v),
            (DeviceParams::Bjt(m), "br") => num().and_then(positive).map(|v| m.beta_r = v),
            (DeviceParams::Bjt(m), "is") => num().and_then(positive).map(|v| m.is_sat = v),
            (DeviceParams::Source(w), "dc") => num().and_then(|v| {
                check(v.is_finite(), "must be finite")?;
                *w = SourceWaveform::Dc(v);
                Ok(())
            }),
            _ => Err("unknown parameter".into()),
        };
        result.map_err(err)
    }

    /// Numeric value of a parameter key (see [`Component::set_param`]).
    pub fn param(&self, key: &str) -> Option<f64> {
        match (&self.params, key.to_ascii_lowercase().as_str()) {
            (DeviceParams::Resistor(m), "r") => Some(m.resistance),
            (DeviceParams::Resistor(m), "prate") => Some(m.rated_power),
            (DeviceParams::Capacitor(m), "c") => Some(m.capacitance),
            (DeviceParams::Capacitor(m), "esr") => Some(m.esr()),
            (DeviceParams::Capacitor(m), "rleak") => m.rleak(),
            (DeviceParams::Diode(m), "is") => Some(m.is_sat),
            (DeviceParams::Diode(m), "n") => Some(m.n_ideality),
            (DeviceParams::Diode(m), "bv") => m.breakdown_v,
            (DeviceParams::Diode(m), "iave") => Some(m.i_ave_rating),
            (DeviceParams::Bjt(m), "bf") => Some(m.beta_f),
            (DeviceParams::Bjt(m), "br") => Some(m.beta_r),
            (DeviceParams::Bjt(m), "is") => Some(m.is_sat),
            (DeviceParams::Source(w), "dc") => Some(w.dc_value()),
            _ => None,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.terminals.join(" "))?;
        match &self.params {
            DeviceParams::Resistor(m) => {
                write!(f, " {} prate={}", format_value(m.resistance), format_value(m.rated_power))
            }
            DeviceParams::Capacitor(m) => {
                write!(f, " {}", format_value(m.capacitance))?;
                if let Some(d) = m.dielectric {
                    write!(f, " type={}", d.as_str())?;
                }
                if let Some(esr) = m.esr_override {
                    write!(f, " esr={}", format_value(esr))?;
                }
                if let Some(r) = m.rleak_override {
                    write!(f, " rleak={}", format_value(r))?;
                }
                Ok(())
            }
            DeviceParams::Diode(m) => {
                let flavour = if self.kind == ComponentKind::Zener { "zener" } else { "diode" };
                write!(
                    f,
                    " {flavour} is={} n={} iave={}",
                    format_value(m.is_sat),
                    format_value(m.n_ideality),
                    format_value(m.i_ave_rating)
                )?;
                if let Some(bv) = m.breakdown_v {
                    write!(f, " bv={}", format_value(bv))?;
                }
                Ok(())
            }
            DeviceParams::Bjt(m) => {
                write!(f, " bf={} br={} is={}", format_value(m.beta_f), format_value(m.beta_r), format_value(m.is_sat))
            }
            DeviceParams::Source(SourceWaveform::Dc(v)) => write!(f, " DC {}", format_value(*v)),
            DeviceParams::Source(SourceWaveform::Pwl(points)) => {
                let body: Vec<String> =
                    points.iter().map(|(t, v)| format!("{} {}", format_value(*t), format_value(*v))).collect();
                write!(f, " PWL({})", body.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DirectiveKind {
    Op,
    Tran { tstep: f64, tstop: f64 },
    DcSweep { source: String, start: f64, stop: f64, step: f64 },
    ParamSweep { component: String, param: String, values: Vec<ParamValue> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub kind: DirectiveKind,
    /// Trailing `key=value` pairs; bare flags such as `uic` map to `"true"`.
    pub options: BTreeMap<String, String>,
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DirectiveKind::Op => f.write_str(".op")?,
            DirectiveKind::Tran { tstep, tstop } => {
                write!(f, ".tran {} {}", format_value(*tstep), format_value(*tstop))?
            }
            DirectiveKind::DcSweep { source, start, stop, step } => {
                write!(f, ".dcsweep {source} {} {} {}", format_value(*start), format_value(*stop), format_value(*step))?
            }
            DirectiveKind::ParamSweep { component, param, values } => {
                let list: Vec<String> = values.iter().map(ToString::to_string).collect();
                write!(f, ".paramsweep {component} {param} {}", list.join(" "))?
            }
        }
        for (k, v) in &self.options {
            if v == "true" {
                write!(f, " {k}")?;
            } else {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub title: String,
    pub components: Vec<Component>,
    /// Node name to dense index in first-appearance order; ground is 0.
    pub nodes: BTreeMap<String, usize>,
    pub directives: Vec<Directive>,
}

impl Netlist {
    pub fn new(title: impl Into<String>) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(GROUND.to_string(), 0);
        Self { title: title.into(), components: Vec::new(), nodes, directives: Vec::new() }
    }

    /// Appends a component, registering any new nodes.
    pub fn push(&mut self, component: Component) {
        for t in &component.terminals {
            let next = self.nodes.len();
            self.nodes.entry(t.clone()).or_insert(next);
        }
        self.components.push(component);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.get(&normalize_node(name)).copied()
    }

    /// Node names ordered by index.
    pub fn node_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.nodes.len()];
        for (name, &idx) in &self.nodes {
            names[idx] = name.clone();
        }
        names
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        let name = name.to_ascii_uppercase();
        self.components.iter().find(|c| c.name == name)
    }

    pub fn component_mut(&mut self, name: &str) -> Option<&mut Component> {
        let name = name.to_ascii_uppercase();
        self.components.iter_mut().find(|c| c.name == name)
    }

    /// Copy of the netlist with one parameter overridden.
    pub fn with_override(&self, component: &str, key: &str, value: &ParamValue) -> Result<Netlist, NetlistError> {
        let mut copy = self.clone();
        copy.component_mut(component)
            .ok_or_else(|| NetlistError::UnknownComponent(component.to_string()))?
            .set_param(key, value)?;
        Ok(copy)
    }

    pub fn tran_directive(&self) -> Option<&Directive> {
        self.directives.iter().find(|d| matches!(d.kind, DirectiveKind::Tran { .. }))
    }

    pub fn dcsweep_directive(&self) -> Option<&Directive> {
        self.directives.iter().find(|d| matches!(d.kind, DirectiveKind::DcSweep { .. }))
    }

    /// Serializes to the netlist text format; `parse` reads it back to an
    /// equal value.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&format!(".title {}\n", self.title));
        }
        for c in &self.components {
            out.push_str(&format!("{c}\n"));
        }
        for d in &self.directives {
            out.push_str(&format!("{d}\n"));
        }
        out
    }
}

/// Lower-cases a node name and maps `gnd` onto `0`.
pub fn normalize_node(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower == "gnd" {
        GROUND.to_string()
    } else {
        lower
    }
}

/// Legal sweep range for a parameter, where one is documented for the
/// device family (component ratings catalogue of the regulator study).
/// Polar capacitors: 33–150 µF; nonpolar: 20–150 nF; resistors 1–1000 Ω at
/// 0.25–2 W; Zener breakdown 4.7–600 V with 0.1–30 A average rating.
pub fn catalogue_range(component: &Component, key: &str) -> Option<(f64, f64)> {
    match (&component.params, key.to_ascii_lowercase().as_str()) {
        (DeviceParams::Resistor(_), "r") => Some((1.0, 1000.0)),
        (DeviceParams::Resistor(_), "prate") => Some((0.25, 2.0)),
        (DeviceParams::Capacitor(m), "c") if m.is_polar() => Some((33e-6, 150e-6)),
        (DeviceParams::Capacitor(_), "c") => Some((20e-9, 150e-9)),
        (DeviceParams::Diode(_), "bv") => Some((4.7, 600.0)),
        (DeviceParams::Diode(_), "iave") => Some((0.1, 30.0)),
        _ => None,
    }
}
