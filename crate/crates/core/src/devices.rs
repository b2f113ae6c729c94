//! Device models and their linearized companion stamps.
//!
//! Every nonlinear device exposes its large-signal current together with the
//! analytic derivative, so the engine can build a first-order Taylor stamp at
//! any bias. Exponentials are evaluated through [`limexp`], which continues
//! linearly past an argument of [`EXP_ARG_LIMIT`] so Newton excursions never
//! overflow.

use serde::{Deserialize, Serialize};

use crate::netlist::{Component, DeviceParams};

/// Thermal voltage at 300 K.
pub const ROOM_TEMP_VT: f64 = 0.02585;

/// Exponent argument above which `exp` is continued linearly.
pub const EXP_ARG_LIMIT: f64 = 80.0;

/// Value and derivative of the clamped exponential.
pub fn limexp(x: f64) -> (f64, f64) {
    if x <= EXP_ARG_LIMIT {
        let e = x.exp();
        (e, e)
    } else {
        let e = EXP_ARG_LIMIT.exp();
        (e * (1.0 + (x - EXP_ARG_LIMIT)), e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistorModel {
    pub resistance: f64,
    pub rated_power: f64,
}

impl ResistorModel {
    pub const DEFAULT_RATED_POWER: f64 = 0.25;

    pub fn new(resistance: f64) -> Self {
        Self { resistance, rated_power: Self::DEFAULT_RATED_POWER }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dielectric {
    Electrolytic,
    Polymer,
}

impl Dielectric {
    pub fn parse(word: &str) -> Option<Self> {
        match word.to_ascii_lowercase().as_str() {
            "electrolytic" => Some(Self::Electrolytic),
            "polymer" => Some(Self::Polymer),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Electrolytic => "electrolytic",
            Self::Polymer => "polymer",
        }
    }

    /// Engineering defaults, not measured data: polymer parts have a much
    /// lower series resistance and leakage than wet electrolytics.
    pub fn default_esr(self) -> f64 {
        match self {
            Self::Electrolytic => 0.5,
            Self::Polymer => 0.02,
        }
    }

    pub fn default_rleak(self) -> f64 {
        match self {
            Self::Electrolytic => 1e6,
            Self::Polymer => 1e8,
        }
    }
}

/// A capacitor. Aluminium parts (with a `dielectric`) are polar and carry a
/// series ESR and a parallel leakage resistance; a capacitor without a
/// dielectric is an ideal nonpolar element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorModel {
    pub capacitance: f64,
    pub dielectric: Option<Dielectric>,
    /// Explicit `esr=`; `None` falls back to the dielectric default.
    pub esr_override: Option<f64>,
    /// Explicit `rleak=`; `None` falls back to the dielectric default.
    pub rleak_override: Option<f64>,
}

impl CapacitorModel {
    pub fn ideal(capacitance: f64) -> Self {
        Self { capacitance, dielectric: None, esr_override: None, rleak_override: None }
    }

    pub fn esr(&self) -> f64 {
        self.esr_override.or(self.dielectric.map(Dielectric::default_esr)).unwrap_or(0.0)
    }

    /// Parallel leakage resistance, `None` when the part does not leak.
    pub fn rleak(&self) -> Option<f64> {
        self.rleak_override.or(self.dielectric.map(Dielectric::default_rleak))
    }

    pub fn is_polar(&self) -> bool {
        self.dielectric.is_some()
    }

    /// Conductance seen between the terminals at DC: leakage in series with
    /// the ESR, or nothing for an ideal part.
    pub fn dc_conductance(&self) -> f64 {
        self.rleak().map_or(0.0, |r| 1.0 / (r + self.esr()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeModel {
    pub is_sat: f64,
    pub n_ideality: f64,
    pub vt: f64,
    /// Reverse breakdown voltage; set only for Zener diodes.
    pub breakdown_v: Option<f64>,
    /// Current at the breakdown knee (`v = -breakdown_v`).
    pub breakdown_current: f64,
    pub i_ave_rating: f64,
}

impl Default for DiodeModel {
    fn default() -> Self {
        Self {
            is_sat: 1e-12,
            n_ideality: 1.0,
            vt: ROOM_TEMP_VT,
            breakdown_v: None,
            breakdown_current: 1e-3,
            i_ave_rating: 1.0,
        }
    }
}

impl DiodeModel {
    pub fn zener(breakdown_v: f64) -> Self {
        Self { breakdown_v: Some(breakdown_v), ..Self::default() }
    }

    fn nvt(&self) -> f64 {
        self.n_ideality * self.vt
    }

    /// Current and conductance at junction voltage `v` (anode minus cathode),
    /// including the breakdown branch when one is configured.
    pub fn eval(&self, v: f64) -> (f64, f64) {
        let nvt = self.nvt();
        let (e, de) = limexp(v / nvt);
        let mut i = self.is_sat * (e - 1.0);
        let mut g = self.is_sat * de / nvt;
        if let Some(bv) = self.breakdown_v {
            let (er, der) = limexp(-(v + bv) / nvt);
            let offset = (-bv / nvt).exp();
            i -= self.breakdown_current * (er - offset);
            g += self.breakdown_current * der / nvt;
        }
        (i, g)
    }

    /// Critical voltage for junction limiting of the forward branch.
    pub(crate) fn vcrit(&self) -> f64 {
        let nvt = self.nvt();
        nvt * (nvt / (std::f64::consts::SQRT_2 * self.is_sat)).ln()
    }

    pub(crate) fn vcrit_breakdown(&self) -> f64 {
        let nvt = self.nvt();
        nvt * (nvt / (std::f64::consts::SQRT_2 * self.breakdown_current)).ln()
    }

    /// Limits a new junction voltage against the previous iterate on both the
    /// forward and (for Zeners) the breakdown exponential. Returns the limited
    /// voltage and whether limiting changed it.
    pub(crate) fn limit(&self, v_new: f64, v_old: f64) -> (f64, bool) {
        let nvt = self.nvt();
        if let Some(bv) = self.breakdown_v {
            if v_new < (-bv + 10.0 * nvt).min(0.0) {
                let (r, limited) = pnjlim(-(v_new + bv), -(v_old + bv), nvt, self.vcrit_breakdown());
                return (-(r + bv), limited);
            }
        }
        pnjlim(v_new, v_old, nvt, self.vcrit())
    }
}

/// Shockley diode current. Breakdown is ignored even if configured; see
/// [`zener_current`].
pub fn diode_current(v: f64, m: &DiodeModel) -> f64 {
    let (e, _) = limexp(v / m.nvt());
    m.is_sat * (e - 1.0)
}

/// Diode current with the reverse-breakdown branch. The breakdown term is
/// offset so the current is exactly zero at zero bias.
pub fn zener_current(v: f64, m: &DiodeModel) -> f64 {
    m.eval(v).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BjtModel {
    pub is_sat: f64,
    pub beta_f: f64,
    pub beta_r: f64,
    pub vt: f64,
}

impl Default for BjtModel {
    fn default() -> Self {
        Self { is_sat: 1e-13, beta_f: 50.0, beta_r: 2.0, vt: ROOM_TEMP_VT }
    }
}

/// Terminal currents of an NPN transistor and their partial derivatives with
/// respect to `vbe` and `vbc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BjtEval {
    pub ic: f64,
    pub ib: f64,
    pub dic_dvbe: f64,
    pub dic_dvbc: f64,
    pub dib_dvbe: f64,
    pub dib_dvbc: f64,
}

impl BjtModel {
    pub fn eval(&self, vbe: f64, vbc: f64) -> BjtEval {
        let is = self.is_sat;
        let (ebe, debe) = limexp(vbe / self.vt);
        let (ebc, debc) = limexp(vbc / self.vt);
        let ic = is * (ebe - ebc) - is / self.beta_r * (ebc - 1.0);
        let ib = is / self.beta_f * (ebe - 1.0) + is / self.beta_r * (ebc - 1.0);
        BjtEval {
            ic,
            ib,
            dic_dvbe: is * debe / self.vt,
            dic_dvbc: -is * debc / self.vt - is / self.beta_r * debc / self.vt,
            dib_dvbe: is / self.beta_f * debe / self.vt,
            dib_dvbc: is / self.beta_r * debc / self.vt,
        }
    }

    pub(crate) fn limit(&self, v_new: f64, v_old: f64) -> (f64, bool) {
        let vcrit = self.vt * (self.vt / (std::f64::consts::SQRT_2 * self.is_sat)).ln();
        pnjlim(v_new, v_old, self.vt, vcrit)
    }
}

/// Ebers–Moll transport model: `(ic, ib, ie)` with `ie = ic + ib`.
pub fn bjt_currents(vbe: f64, vbc: f64, m: &BjtModel) -> (f64, f64, f64) {
    let e = m.eval(vbe, vbc);
    (e.ic, e.ib, e.ic + e.ib)
}

/// SPICE `pnjlim`: logarithmic damping of large forward steps on a junction.
pub(crate) fn pnjlim(v_new: f64, v_old: f64, vt: f64, vcrit: f64) -> (f64, bool) {
    if v_new > vcrit && (v_new - v_old).abs() > 2.0 * vt {
        let limited = if v_old > 0.0 {
            let arg = 1.0 + (v_new - v_old) / vt;
            if arg > 0.0 {
                v_old + vt * arg.ln()
            } else {
                vcrit
            }
        } else {
            vt * (v_new / vt).ln()
        };
        (limited, true)
    } else {
        (v_new, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMethod {
    #[serde(rename = "be")]
    BackwardEuler,
    #[serde(rename = "trap")]
    Trapezoidal,
}

/// Norton companion of a capacitor for one implicit step: the capacitor
/// current is `geq·v − ieq`.
pub fn capacitor_companion(
    m: &CapacitorModel,
    v_prev: f64,
    i_prev: f64,
    dt: f64,
    method: IntegrationMethod,
) -> (f64, f64) {
    match method {
        IntegrationMethod::BackwardEuler => {
            let geq = m.capacitance / dt;
            (geq, geq * v_prev)
        }
        IntegrationMethod::Trapezoidal => {
            let geq = 2.0 * m.capacitance / dt;
            (geq, geq * v_prev + i_prev)
        }
    }
}

/// Linearized contribution of one device, indexed by terminal position.
///
/// The current flowing into the device at terminal `k` is
/// `Σ_j g[k][j]·v_j + ieq[k]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stamp {
    pub conductances: Vec<(usize, usize, f64)>,
    pub currents: Vec<(usize, f64)>,
}

impl Stamp {
    /// Two-terminal conductance `g` with equivalent current `ieq` flowing
    /// from terminal `a` to terminal `b` through the device.
    pub fn two_terminal(a: usize, b: usize, g: f64, ieq: f64) -> Self {
        let mut s = Stamp::default();
        s.add_branch(a, b, g, ieq);
        s
    }

    pub fn add_branch(&mut self, a: usize, b: usize, g: f64, ieq: f64) {
        self.conductances.extend([(a, a, g), (a, b, -g), (b, a, -g), (b, b, g)]);
        if ieq != 0.0 {
            self.currents.extend([(a, ieq), (b, -ieq)]);
        }
    }

    /// Conductance entry `g[row][col]`, summed over duplicates.
    pub fn conductance(&self, row: usize, col: usize) -> f64 {
        self.conductances.iter().filter(|(r, c, _)| *r == row && *c == col).map(|(_, _, g)| g).sum()
    }

    pub fn current(&self, terminal: usize) -> f64 {
        self.currents.iter().filter(|(t, _)| *t == terminal).map(|(_, i)| i).sum()
    }
}

pub(crate) fn diode_stamp(vd: f64, i: f64, g: f64) -> Stamp {
    Stamp::two_terminal(0, 1, g, i - g * vd)
}

/// Terminal order: collector 0, base 1, emitter 2.
pub(crate) fn bjt_stamp(vbe: f64, vbc: f64, e: &BjtEval) -> Stamp {
    const C: usize = 0;
    const B: usize = 1;
    const E: usize = 2;
    // vbe = vb − ve, vbc = vb − vc; chain rule onto node voltages.
    let row = |di_dvbe: f64, di_dvbc: f64| -> [f64; 3] { [-di_dvbc, di_dvbe + di_dvbc, -di_dvbe] };
    let gc = row(e.dic_dvbe, e.dic_dvbc);
    let gb = row(e.dib_dvbe, e.dib_dvbc);
    let ge = [-(gc[0] + gb[0]), -(gc[1] + gb[1]), -(gc[2] + gb[2])];
    let ic_eq = e.ic - e.dic_dvbe * vbe - e.dic_dvbc * vbc;
    let ib_eq = e.ib - e.dib_dvbe * vbe - e.dib_dvbc * vbc;

    let mut s = Stamp::default();
    for (term, g) in [(C, gc), (B, gb), (E, ge)] {
        for (col, value) in g.iter().enumerate() {
            s.conductances.push((term, col, *value));
        }
    }
    s.currents.extend([(C, ic_eq), (B, ib_eq), (E, -(ic_eq + ib_eq))]);
    s
}

/// First-order Taylor stamp of `c` at the given terminal voltages (in
/// terminal order). Capacitors contribute their DC leakage path only;
/// voltage sources are branch elements and produce an empty stamp.
pub fn linearize(c: &Component, terminal_voltages: &[f64]) -> Stamp {
    match &c.params {
        DeviceParams::Resistor(m) => Stamp::two_terminal(0, 1, 1.0 / m.resistance, 0.0),
        DeviceParams::Capacitor(m) => Stamp::two_terminal(0, 1, m.dc_conductance(), 0.0),
        DeviceParams::Diode(m) => {
            let vd = terminal_voltages[0] - terminal_voltages[1];
            let (i, g) = m.eval(vd);
            diode_stamp(vd, i, g)
        }
        DeviceParams::Bjt(m) => {
            let (vc, vb, ve) = (terminal_voltages[0], terminal_voltages[1], terminal_voltages[2]);
            let (vbe, vbc) = (vb - ve, vb - vc);
            bjt_stamp(vbe, vbc, &m.eval(vbe, vbc))
        }
        DeviceParams::Source(_) => Stamp::default(),
    }
}

/// Large-signal current into each terminal of `c` (terminal order). Used for
/// KCL audits; voltage sources return zeros because their current is a
/// solution unknown.
pub fn terminal_currents(c: &Component, terminal_voltages: &[f64]) -> Vec<f64> {
    match &c.params {
        DeviceParams::Resistor(m) => {
            let i = (terminal_voltages[0] - terminal_voltages[1]) / m.resistance;
            vec![i, -i]
        }
        DeviceParams::Capacitor(m) => {
            let i = (terminal_voltages[0] - terminal_voltages[1]) * m.dc_conductance();
            vec![i, -i]
        }
        DeviceParams::Diode(m) => {
            let i = m.eval(terminal_voltages[0] - terminal_voltages[1]).0;
            vec![i, -i]
        }
        DeviceParams::Bjt(m) => {
            let (vc, vb, ve) = (terminal_voltages[0], terminal_voltages[1], terminal_voltages[2]);
            let (ic, ib, ie) = bjt_currents(vb - ve, vb - vc, m);
            vec![ic, ib, -ie]
        }
        DeviceParams::Source(_) => vec![0.0; terminal_voltages.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn shockley_closed_form() {
        let m = DiodeModel::default();
        assert_eq!(diode_current(0.0, &m), 0.0);
        let expected = 1e-12 * ((0.6f64 / 0.02585).exp() - 1.0);
        assert_relative_eq!(diode_current(0.6, &m), expected, max_relative = 1e-14);
        assert_relative_eq!(diode_current(0.6, &m), 1.2e-2, max_relative = 0.05);
        assert_relative_eq!(diode_current(-1.0, &m), -1e-12, max_relative = 1e-9);
    }

    #[test]
    fn zener_branches() {
        let m = DiodeModel::zener(5.6);
        assert_eq!(zener_current(0.0, &m), 0.0);
        assert_eq!(zener_current(0.6, &m), diode_current(0.6, &m));
        assert!(zener_current(-(5.6 + 0.2), &m) < -1e-3);
        // 600 V part stays off anywhere near a 12 V rail.
        let hv = DiodeModel::zener(600.0);
        assert!(zener_current(-15.0, &hv).abs() < 2e-12);
    }

    #[test]
    fn limexp_is_continuous_at_limit() {
        let below = limexp(EXP_ARG_LIMIT - 1e-9).0;
        let above = limexp(EXP_ARG_LIMIT + 1e-9).0;
        assert_relative_eq!(below, above, max_relative = 1e-8);
        assert!(limexp(1e6).0.is_finite());
    }

    #[test]
    fn bjt_zero_bias_and_active_gain() {
        let m = BjtModel::default();
        assert_eq!(bjt_currents(0.0, 0.0, &m), (0.0, 0.0, 0.0));
        let (ic, ib, ie) = bjt_currents(0.65, -5.0, &m);
        assert_relative_eq!(ic, 50.0 * ib, max_relative = 0.01);
        assert_eq!(ie, ic + ib);
    }

    #[test]
    fn companion_formulas() {
        let c = CapacitorModel::ideal(1e-6);
        assert_eq!(capacitor_companion(&c, 0.0, 0.0, 1e-6, IntegrationMethod::BackwardEuler), (1.0, 0.0));
        assert_eq!(capacitor_companion(&c, 0.0, 0.0, 1e-6, IntegrationMethod::Trapezoidal).1, 0.0);
        let (g, i) = capacitor_companion(&c, 1.0, 0.0, 2e-6, IntegrationMethod::Trapezoidal);
        assert_relative_eq!(g, 1.0, max_relative = 1e-15);
        assert_relative_eq!(i, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn dielectric_defaults() {
        let mut c = CapacitorModel::ideal(100e-6);
        assert_eq!(c.esr(), 0.0);
        assert_eq!(c.rleak(), None);
        c.dielectric = Some(Dielectric::Polymer);
        assert_eq!((c.esr(), c.rleak()), (0.02, Some(1e8)));
        c.esr_override = Some(0.1);
        assert_eq!(c.esr(), 0.1);
    }

    #[test]
    fn diode_conductance_matches_finite_difference() {
        let m = DiodeModel::default();
        let g0 = m.eval(0.0).1;
        assert_relative_eq!(g0, 1e-12 / 0.02585, max_relative = 1e-12);
        let g = m.eval(0.5).1;
        let num = fd(|v| diode_current(v, &m), 0.5, 1e-6);
        assert!(((g - num) / g).abs() < 1e-4);
    }

    #[test]
    fn zener_conductance_in_breakdown() {
        let m = DiodeModel::zener(12.0);
        let v = -12.05;
        let g = m.eval(v).1;
        let num = fd(|v| zener_current(v, &m), v, 1e-6);
        assert!(((g - num) / g).abs() < 1e-4);
    }

    #[test]
    fn bjt_stamp_matches_finite_difference() {
        let m = BjtModel::default();
        let (vc, vb, ve) = (5.0, 0.68, 0.0);
        let s = bjt_stamp(vb - ve, vb - vc, &m.eval(vb - ve, vb - vc));
        let v = [vc, vb, ve];
        for (row, col) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2)] {
            let f = |x: f64| {
                let mut vv = v;
                vv[col] = x;
                let (ic, ib, ie) = bjt_currents(vv[1] - vv[2], vv[1] - vv[0], &m);
                [ic, ib, -ie][row]
            };
            let num = fd(f, v[col], 1e-6);
            let g = s.conductance(row, col);
            let scale = g.abs().max(1e-9);
            assert!(((g - num) / scale).abs() < 1e-4, "({row},{col}) {g} vs {num}");
        }
        // Stamp currents reproduce the large-signal currents at the bias.
        let (ic, ib, ie) = bjt_currents(vb - ve, vb - vc, &m);
        for (term, expected) in [(0, ic), (1, ib), (2, -ie)] {
            let lin: f64 = (0..3).map(|j| s.conductance(term, j) * v[j]).sum::<f64>() + s.current(term);
            assert_relative_eq!(lin, expected, max_relative = 1e-9, epsilon = 1e-15);
        }
    }

    #[test]
    fn pnjlim_damps_large_forward_steps() {
        let m = DiodeModel::default();
        let (v, limited) = m.limit(5.0, 0.6);
        assert!(limited);
        assert!(v < 0.8);
        let (v, limited) = m.limit(0.61, 0.6);
        assert!(!limited);
        assert_eq!(v, 0.61);
    }
}
