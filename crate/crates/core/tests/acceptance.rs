//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use stabilsim::analysis::{
    ieee1159_overvoltage, line_regulation, parameter_study, vehicle_experiment, Ieee1159Config, StudyAxis, StudySetup,
    SweepResult, Verdict,
};
use stabilsim::corpus::{reference_sweep, rpm_map_sample, vavs_netlist, VAVS_OUTPUT, VAVS_SOURCE};
use stabilsim::devices::{diode_current, DiodeModel, IntegrationMethod};
use stabilsim::engine::{
    assemble_mna, dc_operating_point, dc_sweep, kcl_residuals, solve_linear, transient, SolverOptions,
};
use stabilsim::netlist::{parse, parse_bytes, ParamValue};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const REFERENCE: [(f64, f64); 6] =
    [(10.0, 12.1), (11.0, 12.1), (12.0, 12.1), (13.0, 11.98), (14.0, 12.2), (15.0, 12.15)];

fn reference_sweep_reproduction() -> Outcome {
    let n = vavs_netlist();
    let t0 = Instant::now();
    let sweep = dc_sweep(&n, VAVS_SOURCE, 10.0, 15.0, 1.0, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let result = SweepResult::from_dc_sweep(&sweep, VAVS_OUTPUT).map_err(|e| e.to_string())?;
    let rows = reference_sweep().check(&result);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "Vi={} Vo={} ({})",
                r.input_v,
                r.actual_vo.map_or("-".into(), |v| format!("{v:.4}")),
                if r.pass { "ok" } else { "out of band" }
            )
        })
        .collect();
    let summary = format!("{}; sweep {:.1} ms", detail.join(", "), elapsed.as_secs_f64() * 1e3);
    check(rows.len() == 6, "reference table must have 6 rows")?;
    check(elapsed < Duration::from_secs(1), format!("runtime {elapsed:?} >= 1 s"))?;
    check(rows.iter().all(|r| r.pass), summary.clone())?;
    Ok(summary)
}

fn ieee_verdict() -> Outcome {
    let cfg = Ieee1159Config::new(12.0);
    let report = line_regulation(&SweepResult::from_pairs("V1", "out", &REFERENCE), &cfg).map_err(|e| e.to_string())?;
    let hand = 12.2 / 12.0;
    // Each sweep level held for two minutes.
    let series: Vec<(f64, f64)> = REFERENCE
        .iter()
        .enumerate()
        .flat_map(|(k, (_, vo))| [(k as f64 * 120.0, *vo), (k as f64 * 120.0 + 119.0, *vo)])
        .collect();
    let timed = ieee1159_overvoltage(&series, &cfg).map_err(|e| e.to_string())?;
    check((report.max_pu - hand).abs() <= 1e-6, format!("report max_pu {} vs {hand}", report.max_pu))?;
    check((timed.max_pu - hand).abs() <= 1e-6, format!("series max_pu {} vs {hand}", timed.max_pu))?;
    check(report.max_pu < 1.1 && (report.max_pu - 1.017).abs() < 1e-3, "max_pu not about 1.017")?;
    check(report.verdict == Verdict::Compliant && timed.verdict == Verdict::Compliant, "verdict not compliant")?;
    Ok(format!("max_pu {:.6} (hand {hand:.6}), verdict compliant", report.max_pu))
}

fn line_regulation_oracle() -> Outcome {
    let report = line_regulation(&SweepResult::from_pairs("V1", "out", &REFERENCE), &Ieee1159Config::new(12.0))
        .map_err(|e| e.to_string())?;
    // Brute force straight off the rows.
    let vo: Vec<f64> = REFERENCE.iter().map(|r| r.1).collect();
    let dvo = vo.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - vo.iter().cloned().fold(f64::INFINITY, f64::min);
    let dvi = REFERENCE[5].0 - REFERENCE[0].0;
    let oracle = dvo / (dvi * 12.1) * 100.0;
    let got = report.line_regulation_pct_per_v;
    check(((got - oracle) / oracle).abs() <= 1e-9, format!("{got} vs oracle {oracle}"))?;
    check((oracle - 0.3636).abs() < 1e-4, format!("oracle {oracle} not about 0.3636"))?;
    Ok(format!("{got:.10} %/V vs oracle {oracle:.10} %/V"))
}

fn vehicle_emulation() -> Outcome {
    let map = rpm_map_sample();
    let grid: Vec<f64> = (0..=15).map(|k| 1500.0 + 500.0 * k as f64).collect();
    let t0 = Instant::now();
    let rows = vehicle_experiment(&vavs_netlist(), &map, &grid, VAVS_SOURCE, VAVS_OUTPUT, &SolverOptions::default())
        .map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let spread = |f: &dyn Fn(&stabilsim::analysis::VehicleRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let reg = spread(&|r| r.regulated_v);
    let unreg = spread(&|r| Some(r.unregulated_v));
    let worst_lr = rows.iter().filter_map(|r| r.line_regulation_pct_per_v).fold(0.0, f64::max);
    let summary = format!(
        "{} rpm points, input {:.2}-{:.2} V, regulated spread {reg:.4} V, unregulated spread {unreg:.2} V, worst per-point {worst_lr:.3} %/V, {:.1} ms",
        rows.len(),
        map.breakpoints()[0].1,
        map.breakpoints()[map.breakpoints().len() - 1].1,
        elapsed.as_secs_f64() * 1e3
    );
    check(rows.iter().all(|r| r.error.is_none() && r.line_regulation_pct_per_v.is_some()), "a row failed to solve")?;
    check(reg <= 0.6, summary.clone())?;
    check(unreg >= 2.0, summary.clone())?;
    check(worst_lr <= 2.0, summary.clone())?;
    check(elapsed < Duration::from_secs(1), format!("runtime {elapsed:?} >= 1 s"))?;
    Ok(summary)
}

fn study_shape() -> Outcome {
    let n = vavs_netlist();
    // Inputs above the 12.1 V target: below it no passive regulator can
    // reach the target, so those points would only measure the dropout.
    let setup = StudySetup {
        source: VAVS_SOURCE.into(),
        output_node: VAVS_OUTPUT.into(),
        start: 13.0,
        stop: 15.0,
        step: 1.0,
        target_v: 12.1,
    };
    let num = |v: &[f64]| v.iter().map(|x| ParamValue::Num(*x)).collect::<Vec<_>>();
    let axes = [
        ("D1", "bv", num(&[4.7, 6.2, 9.1, 12.0, 15.0, 600.0]), ParamValue::Num(600.0)),
        ("R1", "r", num(&[10.0, 47.0, 100.0, 220.0, 470.0, 1000.0]), ParamValue::Num(1000.0)),
        ("C4", "c", num(&[33e-6, 47e-6, 68e-6, 100e-6, 150e-6]), ParamValue::Num(100e-6)),
        (
            "C4",
            "type",
            vec![ParamValue::Word("electrolytic".into()), ParamValue::Word("polymer".into())],
            ParamValue::Word("electrolytic".into()),
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (comp, param, values, winner) in axes {
        let axis = StudyAxis { component: comp.into(), param: param.into(), values };
        let rows = parameter_study(&n, &axis, &setup, &SolverOptions::default()).map_err(|e| e.to_string())?;
        let rank = rows.iter().position(|r| r.value == winner).map(|p| p + 1);
        let tied = rows.iter().filter(|r| r.max_deviation == rows[0].max_deviation).count();
        let pass = rank.is_some_and(|r| r <= 2);
        ok &= pass;
        lines.push(format!(
            "{comp}.{param}={winner} rank {}/{}{}",
            rank.map_or("-".into(), |r| r.to_string()),
            rows.len(),
            if tied > 1 { format!(" ({tied} tied at the top)") } else { String::new() }
        ));
    }
    let summary = lines.join("; ");
    check(ok, summary.clone())?;
    Ok(summary)
}

fn bisect_diode(vs: f64, r: f64) -> f64 {
    let m = DiodeModel::default();
    let f = |v: f64| (vs - v) / r - diode_current(v, &m);
    let (mut lo, mut hi) = (0.0, vs);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rc_error(tstep: f64, method: IntegrationMethod) -> Result<(f64, f64), String> {
    let n = parse("V1 in 0 DC 1\nR1 in out 1k\nC1 out 0 1u\n.tran 1u 1m uic\n").map_err(|e| e.to_string())?;
    let opts = SolverOptions { integration: method, ..Default::default() };
    let w = transient(&n, tstep, 1e-3, &opts).map_err(|e| e.to_string())?;
    let v = w.node("out").ok_or("no out node")?;
    let max_err = w.times.iter().zip(v).map(|(t, v)| (v - (1.0 - (-t / 1e-3).exp())).abs()).fold(0.0, f64::max);
    Ok((max_err, *v.last().ok_or("empty")?))
}

fn solver_suite() -> Outcome {
    let t0 = Instant::now();
    let opts = SolverOptions::default();
    let op = |text: &str| dc_operating_point(&parse(text).unwrap(), &opts).map_err(|e| e.to_string());

    // (a)
    let div = op("V1 in 0 DC 12\nR1 in mid 1k\nR2 mid 0 1k\n")?;
    let vmid = div.voltage("mid").unwrap();
    check(((vmid - 6.0) / 6.0).abs() <= 1e-9, format!("(a) divider {vmid}"))?;

    // (b)
    let oracle = bisect_diode(5.0, 1000.0);
    let vd = op("V1 in 0 DC 5\nR1 in d 1k\nD1 d 0\n")?.voltage("d").unwrap();
    check((vd - oracle).abs() <= 1e-6, format!("(b) diode {vd} vs bisection {oracle}"))?;

    // (c)
    let (_, v_tau) = rc_error(1e-6, IntegrationMethod::Trapezoidal)?;
    let exact = 1.0 - (-1.0f64).exp();
    check(((v_tau - exact) / exact).abs() <= opts.reltol, format!("(c) v(tau) {v_tau}"))?;

    // (d)
    let trap = rc_error(2e-5, IntegrationMethod::Trapezoidal)?.0 / rc_error(1e-5, IntegrationMethod::Trapezoidal)?.0;
    check((3.0..=5.0).contains(&trap), format!("(d) TRAP ratio {trap}"))?;

    // (e)
    let n = vavs_netlist();
    let mut kcl_points = 0;
    let mut worst: f64 = 0.0;
    let mut ops = vec![dc_operating_point(&n, &opts).map_err(|e| e.to_string())?];
    for p in dc_sweep(&n, VAVS_SOURCE, 10.0, 15.0, 0.5, &opts).map_err(|e| e.to_string())?.points {
        ops.push(p.result.map_err(|e| e.to_string())?);
    }
    for p in &ops {
        for r in kcl_residuals(&n, p, &opts) {
            kcl_points += 1;
            worst = worst.max(r.residual.abs() / r.tolerance);
            check(
                r.residual.abs() <= r.tolerance,
                format!("(e) KCL at {}: {:e} > {:e}", r.node, r.residual, r.tolerance),
            )?;
        }
    }

    // (f)
    for text in [
        "V1 in 0 DC 12\nR1 in mid 1k\nR2 mid 0 1k\n",
        "V1 a 0 DC 3\nR1 a b 10\nR2 b c 22\nR3 c 0 47\nR4 b 0 100\nV2 c d DC 1\nR5 d 0 1\n",
        "V1 a 0 DC 5\nR1 a b 1k\nC1 b 0 10u type=electrolytic\n",
    ] {
        let net = parse(text).unwrap();
        let p = dc_operating_point(&net, &opts).map_err(|e| e.to_string())?;
        check(p.iterations == 1, format!("(f) {} iterations", p.iterations))?;
        let direct = solve_linear(&assemble_mna(&net, &[], None, &opts).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let nodes = p.node_voltages.len() - 1;
        check(direct[..nodes] == p.node_voltages[1..], "(f) not bitwise equal to a direct solve")?;
    }

    let elapsed = t0.elapsed();
    check(elapsed < Duration::from_secs(10), format!("suite took {elapsed:?}"))?;
    Ok(format!(
        "(a) {vmid} (b) |dv| {:.1e} (c) {v_tau:.6} (d) TRAP ratio {trap:.3} (e) {kcl_points} node checks, worst {worst:.2e} of tol (f) 1 iteration, bitwise; {:.2} s",
        (vd - oracle).abs(),
        elapsed.as_secs_f64()
    ))
}

fn robustness() -> Outcome {
    // Parser fuzz: arbitrary bytes and netlist-like token soup.
    let mut runner = TestRunner::new(Config { cases: 2000, failure_persistence: None, ..Config::default() });
    runner
        .run(&prop::collection::vec(any::<u8>(), 0..4096), |bytes| {
            let _ = parse_bytes(&bytes);
            Ok(())
        })
        .map_err(|e| format!("byte fuzz: {e}"))?;
    let token = prop::sample::select(vec![
        "R1",
        "C2",
        "D3",
        "Q4",
        "V5",
        "X9",
        "0",
        "in",
        "out",
        "1k",
        "1e309",
        "-1",
        "nan",
        "zener",
        "bv=5",
        "type=electrolytic",
        "PWL(0",
        "1",
        "2)",
        "DC",
        ".tran",
        ".dcsweep",
        ".op",
        ".paramsweep",
        "uic",
        "=",
        "(",
        ")",
        "*",
        "\n",
        "\r\n",
        "µ",
    ]);
    let mut runner = TestRunner::new(Config { cases: 2000, failure_persistence: None, ..Config::default() });
    runner
        .run(&prop::collection::vec(token, 0..200), |toks| {
            let text = toks.join(" ");
            if let Ok(n) = parse(&text) {
                let _ = dc_operating_point(&n, &SolverOptions::default());
            }
            Ok(())
        })
        .map_err(|e| format!("token fuzz: {e}"))?;
    // One input at the 1 MiB bound.
    let big: String = "R1 a 0 1k\n".repeat((1 << 20) / 10);
    check(catch_unwind(|| parse(&big)).is_ok(), "1 MiB netlist panicked")?;

    // Non-convergent circuit through the binary: exit 2 with a diagnostic.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("stiff.net");
    std::fs::write(&path, "V1 in 0 DC 1e6\nR1 in d 1m\nD1 d 0 is=1e-300\n").map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_stabilsim")).arg("op").arg(&path).output().map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let stderr = String::from_utf8_lossy(&out.stderr);
    check(out.status.code() == Some(2), format!("exit {:?}, stderr {stderr}", out.status.code()))?;
    check(stderr.contains("did not converge"), format!("no diagnostic: {stderr}"))?;
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!(
        "4000 fuzz cases + 1 MiB input without panic; non-convergent op exits 2 in {:.0} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("Reference sweep reproduction", reference_sweep_reproduction),
        ("IEEE 1159 verdict", ieee_verdict),
        ("Line regulation oracle equivalence", line_regulation_oracle),
        ("Vehicle emulation", vehicle_emulation),
        ("Parameter study shape", study_shape),
        ("Solver correctness suite", solver_suite),
        ("Robustness", robustness),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(msg) => println!("PASS [{}] {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{}] {name}: {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
