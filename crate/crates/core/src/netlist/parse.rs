use std::collections::{BTreeMap, HashSet};

use super::{
    normalize_node, parse_value, Component, ComponentKind, DeviceParams, Directive, DirectiveKind, Netlist,
    NetlistError, ParamValue, SourceWaveform,
};
use crate::devices::{BjtModel, CapacitorModel, DiodeModel, ResistorModel};

/// A whitespace-delimited token and its 1-based column.
#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    col: usize,
    text: &'a str,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { col: line[..s].chars().count() + 1, text: &line[s..i] });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { col: line[..s].chars().count() + 1, text: &line[s..] });
    }
    tokens
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn syntax(&self, col: usize, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax { line: self.line, column: col, message: message.into() }
    }

    fn number(&self, tok: Token<'_>, what: &str) -> Result<f64, NetlistError> {
        parse_value(tok.text).ok_or_else(|| self.syntax(tok.col, format!("invalid {what} `{}`", tok.text)))
    }

    fn node(&self, tok: Token<'_>) -> Result<String, NetlistError> {
        if tok.text.contains(['=', '(', ')', ',', '*']) {
            return Err(self.syntax(tok.col, format!("invalid node name `{}`", tok.text)));
        }
        Ok(normalize_node(tok.text))
    }
}

/// Splits `key=value`; returns `None` for a bare word.
fn key_value(text: &str) -> Option<(&str, &str)> {
    text.split_once('=')
}

/// Parses netlist text. Elements keep their source order; comment (`*`) and
/// blank lines are skipped; `.end` stops parsing.
pub fn parse(text: &str) -> Result<Netlist, NetlistError> {
    let mut netlist = Netlist::new("");
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, raw) in text.split('\n').enumerate() {
        let ctx = LineCtx { line: idx + 1 };
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let tokens = tokenize(line);
        let head = tokens[0];
        if head.text.starts_with('.') {
            let keyword = head.text.to_ascii_lowercase();
            match keyword.as_str() {
                ".end" => break,
                ".title" => {
                    let offset = line.find(head.text).unwrap_or(0) + head.text.len();
                    netlist.title = line[offset..].trim().to_string();
                }
                _ => netlist.directives.push(parse_directive(&ctx, &keyword, &tokens)?),
            }
            continue;
        }

        let component = parse_element(&ctx, line, &tokens)?;
        if !seen.insert(component.name.clone()) {
            return Err(NetlistError::DuplicateName { line: ctx.line, name: component.name });
        }
        netlist.push(component);
    }
    Ok(netlist)
}

/// Parses raw bytes, reporting invalid UTF-8 as a syntax error.
pub fn parse_bytes(bytes: &[u8]) -> Result<Netlist, NetlistError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
            let line_start = valid.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            Err(NetlistError::Syntax {
                line,
                column: e.valid_up_to() - line_start + 1,
                message: "invalid UTF-8".into(),
            })
        }
    }
}

fn parse_element(ctx: &LineCtx, line: &str, tokens: &[Token<'_>]) -> Result<Component, NetlistError> {
    let head = tokens[0];
    let name = head.text.to_ascii_uppercase();
    let kind = match name.chars().next() {
        Some('R') => ComponentKind::Resistor,
        Some('C') => ComponentKind::Capacitor,
        Some('D') => ComponentKind::Diode,
        Some('Q') => ComponentKind::Bjt,
        Some('V') => ComponentKind::VoltageSource,
        _ => return Err(NetlistError::UnknownDeviceKind { line: ctx.line, name }),
    };
    if name.contains(['=', '(', ')', ',']) {
        return Err(ctx.syntax(head.col, format!("invalid element name `{}`", head.text)));
    }
    let n_terms = kind.terminal_count();
    if tokens.len() < 1 + n_terms {
        return Err(ctx.syntax(head.col, format!("`{name}` needs {n_terms} nodes")));
    }
    let terminals = tokens[1..=n_terms].iter().map(|t| ctx.node(*t)).collect::<Result<Vec<_>, _>>()?;
    let rest = &tokens[1 + n_terms..];

    let mut component = Component { name, kind, terminals, params: DeviceParams::Resistor(ResistorModel::new(1.0)) };

    let keyword_params = match kind {
        ComponentKind::Resistor | ComponentKind::Capacitor => {
            let Some(value_tok) = rest.first() else {
                return Err(ctx.syntax(line.len() + 1, "missing value"));
            };
            let value = ctx.number(*value_tok, "value")?;
            if !(value > 0.0) {
                return Err(ctx.syntax(value_tok.col, "value must be > 0"));
            }
            component.params = if kind == ComponentKind::Resistor {
                DeviceParams::Resistor(ResistorModel::new(value))
            } else {
                DeviceParams::Capacitor(CapacitorModel::ideal(value))
            };
            &rest[1..]
        }
        ComponentKind::Diode => {
            let mut params = rest;
            if let Some(first) = rest.first() {
                match first.text.to_ascii_lowercase().as_str() {
                    "zener" => {
                        component.kind = ComponentKind::Zener;
                        params = &rest[1..];
                    }
                    "diode" => params = &rest[1..],
                    _ => {}
                }
            }
            component.params = DeviceParams::Diode(DiodeModel::default());
            params
        }
        ComponentKind::Bjt => {
            component.params = DeviceParams::Bjt(BjtModel::default());
            rest
        }
        ComponentKind::VoltageSource => {
            component.params = DeviceParams::Source(parse_source(ctx, line, rest)?);
            &[]
        }
        ComponentKind::Zener => unreachable!("zener is derived from a D element"),
    };

    for tok in keyword_params {
        let Some((key, value)) = key_value(tok.text) else {
            return Err(ctx.syntax(tok.col, format!("expected key=value, got `{}`", tok.text)));
        };
        let key_lc = key.to_ascii_lowercase();
        // Positional values are not settable by keyword.
        if matches!(key_lc.as_str(), "r" | "c" | "dc") {
            return Err(ctx.syntax(tok.col, format!("unknown parameter `{key}`")));
        }
        let value = if key_lc == "type" {
            ParamValue::Word(value.to_ascii_lowercase())
        } else {
            ParamValue::Num(ctx.number(Token { col: tok.col + key.len() + 1, text: value }, key)?)
        };
        component.set_param(&key_lc, &value).map_err(|e| ctx.syntax(tok.col, e.to_string()))?;
    }

    if component.kind == ComponentKind::Zener {
        if let DeviceParams::Diode(m) = &component.params {
            if m.breakdown_v.is_none() {
                return Err(ctx.syntax(head.col, "zener requires bv="));
            }
        }
    }
    Ok(component)
}

fn parse_source(ctx: &LineCtx, line: &str, rest: &[Token<'_>]) -> Result<SourceWaveform, NetlistError> {
    let Some(first) = rest.first() else {
        return Err(ctx.syntax(line.len() + 1, "missing source value"));
    };
    let word = first.text.to_ascii_lowercase();
    if word.starts_with("pwl") {
        // Everything from the keyword to the closing parenthesis.
        let start = byte_offset(line, first.col);
        let body = &line[start + 3..];
        let body = body.trim_start();
        let Some(inner) = body.strip_prefix('(') else {
            return Err(ctx.syntax(first.col, "expected `(` after PWL"));
        };
        let Some(close) = inner.find(')') else {
            return Err(ctx.syntax(first.col, "unterminated PWL("));
        };
        if !inner[close + 1..].trim().is_empty() {
            return Err(ctx.syntax(first.col, "unexpected text after PWL(...)"));
        }
        let values = inner[..close]
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| parse_value(s).ok_or_else(|| ctx.syntax(first.col, format!("invalid PWL value `{s}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() < 2 || values.len() % 2 != 0 {
            return Err(ctx.syntax(first.col, "PWL needs time/value pairs"));
        }
        let points: Vec<(f64, f64)> = values.chunks(2).map(|p| (p[0], p[1])).collect();
        if points[0].0 < 0.0 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ctx.syntax(first.col, "PWL times must be >= 0 and strictly increasing"));
        }
        return Ok(SourceWaveform::Pwl(points));
    }

    let value_tok = if word == "dc" {
        rest.get(1).copied().ok_or_else(|| ctx.syntax(first.col, "missing DC value"))?
    } else {
        *first
    };
    let consumed = if word == "dc" { 2 } else { 1 };
    if let Some(extra) = rest.get(consumed) {
        return Err(ctx.syntax(extra.col, format!("unexpected `{}`", extra.text)));
    }
    Ok(SourceWaveform::Dc(ctx.number(value_tok, "source value")?))
}

/// Byte offset of a 1-based character column.
fn byte_offset(line: &str, col: usize) -> usize {
    line.char_indices().nth(col - 1).map_or(line.len(), |(i, _)| i)
}

fn parse_directive(ctx: &LineCtx, keyword: &str, tokens: &[Token<'_>]) -> Result<Directive, NetlistError> {
    let args = &tokens[1..];
    let split_options = |args: &[Token<'_>], allowed: &[&str]| -> Result<BTreeMap<String, String>, NetlistError> {
        let mut options = BTreeMap::new();
        for tok in args {
            let (k, v) = match key_value(tok.text) {
                Some((k, v)) => (k.to_ascii_lowercase(), v.to_ascii_lowercase()),
                None => (tok.text.to_ascii_lowercase(), "true".to_string()),
            };
            if !allowed.contains(&k.as_str()) {
                return Err(ctx.syntax(tok.col, format!("unknown option `{}`", tok.text)));
            }
            options.insert(k, v);
        }
        Ok(options)
    };
    let need = |n: usize| -> Result<(), NetlistError> {
        if args.len() < n {
            Err(ctx.syntax(tokens[0].col, format!("`{keyword}` needs {n} arguments")))
        } else {
            Ok(())
        }
    };

    match keyword {
        ".op" => Ok(Directive { kind: DirectiveKind::Op, options: split_options(args, &[])? }),
        ".tran" => {
            need(2)?;
            let tstep = ctx.number(args[0], "tstep")?;
            let tstop = ctx.number(args[1], "tstop")?;
            if !(tstep > 0.0 && tstep <= tstop) {
                return Err(ctx.syntax(args[0].col, "require 0 < tstep <= tstop"));
            }
            let options = split_options(&args[2..], &["uic", "method"])?;
            if let Some(m) = options.get("method") {
                if m != "be" && m != "trap" {
                    return Err(ctx.syntax(args[0].col, format!("unknown method `{m}`")));
                }
            }
            Ok(Directive { kind: DirectiveKind::Tran { tstep, tstop }, options })
        }
        ".dcsweep" => {
            need(4)?;
            let source = args[0].text.to_ascii_uppercase();
            let start = ctx.number(args[1], "start")?;
            let stop = ctx.number(args[2], "stop")?;
            let step = ctx.number(args[3], "step")?;
            if step == 0.0 || (stop - start) / step < 0.0 {
                return Err(ctx.syntax(args[3].col, "step must be nonzero and point from start to stop"));
            }
            Ok(Directive {
                kind: DirectiveKind::DcSweep { source, start, stop, step },
                options: split_options(&args[4..], &[])?,
            })
        }
        ".paramsweep" => {
            need(3)?;
            let values: Vec<ParamValue> = args[2..]
                .iter()
                .flat_map(|t| t.text.split(','))
                .filter(|s| !s.is_empty())
                .map(ParamValue::parse)
                .collect();
            if values.is_empty() {
                return Err(ctx.syntax(args[2].col, "empty value list"));
            }
            Ok(Directive {
                kind: DirectiveKind::ParamSweep {
                    component: args[0].text.to_ascii_uppercase(),
                    param: args[1].text.to_ascii_lowercase(),
                    values,
                },
                options: BTreeMap::new(),
            })
        }
        _ => Err(ctx.syntax(tokens[0].col, format!("unknown directive `{}`", tokens[0].text))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::Dielectric;

    #[test]
    fn resistor_line() {
        let n = parse("R1 in out 1k").unwrap();
        let r = &n.components[0];
        assert_eq!(r.kind, ComponentKind::Resistor);
        assert_eq!(r.terminals, ["in", "out"]);
        assert_eq!(r.param("r"), Some(1000.0));
    }

    #[test]
    fn electrolytic_capacitor_line() {
        let n = parse("C3 out 0 100u type=electrolytic").unwrap();
        let DeviceParams::Capacitor(m) = &n.components[0].params else { panic!() };
        assert_eq!(m.capacitance, 1e-4);
        assert_eq!(m.dielectric, Some(Dielectric::Electrolytic));
    }

    #[test]
    fn zener_line() {
        let n = parse("D1 ref 0 zener bv=600").unwrap();
        assert_eq!(n.components[0].kind, ComponentKind::Zener);
        assert_eq!(n.components[0].param("bv"), Some(600.0));
    }

    #[test]
    fn sources_and_directives() {
        let n = parse(
            "* header\r\n.title rc test\r\nV1 in 0 DC 12\r\nV2 b 0 PWL(0 0 1m 5)\r\n\r\n.tran 1u 5m uic\r\n.dcsweep v1 10 15 1\r\n.op\r\n.paramsweep d1 bv 4.7,12 600\r\n",
        )
        .unwrap();
        assert_eq!(n.title, "rc test");
        assert_eq!(
            n.component("V2").unwrap().params,
            DeviceParams::Source(SourceWaveform::Pwl(vec![(0.0, 0.0), (1e-3, 5.0)]))
        );
        assert_eq!(n.directives.len(), 4);
        assert_eq!(n.directives[0].options.get("uic").map(String::as_str), Some("true"));
        let DirectiveKind::ParamSweep { values, .. } = &n.directives[3].kind else { panic!() };
        assert_eq!(values.len(), 3);
    }

    #[test]
    fn ground_aliases_and_case() {
        let n = parse("r1 IN gnd 1k\nV1 in 0 5").unwrap();
        assert_eq!(n.components[0].name, "R1");
        assert_eq!(n.components[0].terminals, ["in", "0"]);
        assert_eq!(n.node_count(), 2);
    }

    #[test]
    fn errors_carry_position() {
        match parse("R1 a 0 1k\nR2 a 0 abc") {
            Err(NetlistError::Syntax { line: 2, column: 8, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("X1 a b 1"), Err(NetlistError::UnknownDeviceKind { line: 1, .. })));
        assert!(matches!(parse("R1 a 0 1\nr1 a 0 2"), Err(NetlistError::DuplicateName { line: 2, .. })));
        assert!(matches!(parse("R1 a 0 1k foo=2"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse("D1 a 0 bv=5"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse("D1 a 0 zener"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse("Q1 a b"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse(".tran 2 1"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse(".dcsweep V1 10 15 -1"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse("V1 a 0 PWL(1 0 0 1)"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse("D1 a 0 n=3"), Err(NetlistError::Syntax { .. })));
        assert!(matches!(parse(".foo"), Err(NetlistError::Syntax { .. })));
    }

    #[test]
    fn invalid_utf8() {
        let err = parse_bytes(b"R1 a 0 1k\nR2 \xff").unwrap_err();
        assert!(matches!(err, NetlistError::Syntax { line: 2, column: 4, .. }));
    }

    #[test]
    fn end_stops_parsing() {
        let n = parse("R1 a 0 1\n.end\ngarbage here").unwrap();
        assert_eq!(n.components.len(), 1);
    }

    #[test]
    fn corpus_round_trips() {
        let n = crate::corpus::vavs_netlist();
        assert_eq!(parse(&n.serialize()).unwrap(), n);
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(proptest::num::u8::ANY, 0..2048)) {
            let _ = parse_bytes(&bytes);
        }

        #[test]
        fn netlist_like_lines_never_panic(lines in proptest::collection::vec("[RCDQVX.*][0-9a-z]{0,3}( [a-z0-9=.()-]{0,8}){0,6}", 0..40)) {
            if let Ok(n) = parse(&lines.join("\n")) {
                let again = parse(&n.serialize());
                proptest::prop_assert!(again.is_ok(), "{:?}", again);
            }
        }
    }
}
