use crate::engine::Waveform;

use super::AnalysisError;

/// Mean (trapezoidal time average) and peak-to-peak ripple of `node` over
/// the trailing `window` seconds.
pub fn steady_state_voltage(w: &Waveform, node: &str, window: f64) -> Result<(f64, f64), AnalysisError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(AnalysisError::InvalidWindow);
    }
    let series = w.node(node).ok_or_else(|| AnalysisError::UnknownNode(node.to_string()))?;
    let (first, last) = match (w.times.first(), w.times.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(AnalysisError::EmptySeries),
    };
    let span = last - first;
    // A single-sample waveform has zero span; any window then covers it.
    if window > span * (1.0 + 1e-12) && span > 0.0 {
        return Err(AnalysisError::WindowTooLong { window, span });
    }
    let cutoff = last - window * (1.0 + 1e-12);
    let start = w.times.iter().position(|t| *t >= cutoff).unwrap_or(w.times.len() - 1);
    let (t, v) = (&w.times[start..], &series[start..]);

    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    let duration = t[t.len() - 1] - t[0];
    let mean = if duration > 0.0 {
        t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0])).sum::<f64>() / duration
    } else {
        v[v.len() - 1]
    };
    Ok((mean, hi - lo))
}
