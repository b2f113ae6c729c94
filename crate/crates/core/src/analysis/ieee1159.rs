use serde::Serialize;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Overvoltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ieee1159Config {
    pub nominal_v: f64,
    pub overvoltage_pu: f64,
    /// Seconds the overvoltage must persist.
    pub min_duration: f64,
}

impl Ieee1159Config {
    /// Default thresholds: 1.1 pu sustained for 60 s.
    pub fn new(nominal_v: f64) -> Self {
        Self { nominal_v, overvoltage_pu: 1.1, min_duration: 60.0 }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.nominal_v.is_finite() && self.nominal_v > 0.0) {
            return Err(AnalysisError::InvalidConfig("nominal voltage must be > 0".into()));
        }
        if !(self.overvoltage_pu.is_finite() && self.overvoltage_pu > 1.0) {
            return Err(AnalysisError::InvalidConfig("overvoltage threshold must exceed 1 pu".into()));
        }
        if !(self.min_duration.is_finite() && self.min_duration > 0.0) {
            return Err(AnalysisError::InvalidConfig("minimum duration must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ieee1159Result {
    pub verdict: Verdict,
    pub max_pu: f64,
    /// False when the whole series is shorter than the minimum duration,
    /// so no span could ever qualify.
    pub duration_triggerable: bool,
}

/// Overvoltage when some contiguous run of samples stays above the
/// threshold for at least `min_duration` seconds.
pub fn ieee1159_overvoltage(series: &[(f64, f64)], cfg: &Ieee1159Config) -> Result<Ieee1159Result, AnalysisError> {
    cfg.validate()?;
    let (first, last) = match (series.first(), series.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(AnalysisError::EmptySeries),
    };
    if series.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(AnalysisError::UnorderedSeries);
    }
    let threshold = cfg.overvoltage_pu * cfg.nominal_v;
    let max_v = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);

    let mut verdict = Verdict::Compliant;
    let mut run_start: Option<f64> = None;
    for &(t, v) in series {
        if v > threshold {
            let start = *run_start.get_or_insert(t);
            if t - start >= cfg.min_duration {
                verdict = Verdict::Overvoltage;
                break;
            }
        } else {
            run_start = None;
        }
    }
    Ok(Ieee1159Result {
        verdict,
        max_pu: max_v / cfg.nominal_v,
        duration_triggerable: last - first >= cfg.min_duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(v: f64, seconds: f64) -> Vec<(f64, f64)> {
        (0..=seconds as usize).map(|t| (t as f64, v)).collect()
    }

    #[test]
    fn nominal_is_compliant() {
        let r = ieee1159_overvoltage(&constant(12.0, 10.0), &Ieee1159Config::new(12.0)).unwrap();
        assert_eq!((r.verdict, r.max_pu), (Verdict::Compliant, 1.0));
        assert!(!r.duration_triggerable);
    }

    #[test]
    fn reference_worst_case() {
        let r = ieee1159_overvoltage(&constant(12.2, 120.0), &Ieee1159Config::new(12.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Compliant);
        assert!((r.max_pu - 12.2 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn sustained_overvoltage() {
        let r = ieee1159_overvoltage(&constant(13.3, 90.0), &Ieee1159Config::new(12.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Overvoltage);
        assert!((r.max_pu - 13.3 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn short_burst_is_compliant() {
        let mut s = constant(12.0, 200.0);
        for p in &mut s[10..40] {
            p.1 = 14.0;
        }
        assert_eq!(ieee1159_overvoltage(&s, &Ieee1159Config::new(12.0)).unwrap().verdict, Verdict::Compliant);
    }

    #[test]
    fn empty_series() {
        assert!(matches!(ieee1159_overvoltage(&[], &Ieee1159Config::new(12.0)), Err(AnalysisError::EmptySeries)));
    }

    proptest! {
        #[test]
        fn raising_nominal_never_adds_overvoltage(
            vs in prop::collection::vec(10.0f64..16.0, 1..200),
            nominal in 10.0f64..14.0,
            bump in 0.0f64..3.0,
        ) {
            let s: Vec<(f64, f64)> = vs.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
            let lo = ieee1159_overvoltage(&s, &Ieee1159Config::new(nominal)).unwrap();
            let hi = ieee1159_overvoltage(&s, &Ieee1159Config::new(nominal + bump)).unwrap();
            prop_assert!(!(lo.verdict == Verdict::Compliant && hi.verdict == Verdict::Overvoltage));
        }
    }
}
