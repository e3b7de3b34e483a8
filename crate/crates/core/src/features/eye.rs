//! Eye movement events from LOC/ROC deviations around a running median.

use super::{sample_time, DetectorConfig, EyeEvent, EyeEventKind};
use crate::features::spectral::median;
use crate::features::transients::runs;
use crate::psg_io::{Channel, Epoch, TARGET_RATE_HZ};

const BASELINE_STEP: usize = 10;

/// Running median over `window` samples, evaluated every
/// [`BASELINE_STEP`] samples and linearly interpolated.
pub(crate) fn running_median(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let half = window / 2;
    let knots: Vec<usize> = (0..n).step_by(BASELINE_STEP).chain(std::iter::once(n - 1)).collect();
    let values: Vec<f64> = knots
        .iter()
        .map(|&c| median(&x[c.saturating_sub(half)..(c + half + 1).min(n)]).expect("non-empty"))
        .collect();
    let mut out = vec![0.0; n];
    for w in 0..knots.len() - 1 {
        let (a, b) = (knots[w], knots[w + 1]);
        for (i, o) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = if b > a { (i - a) as f64 / (b - a) as f64 } else { 0.0 };
            *o = values[w] + t * (values[w + 1] - values[w]);
        }
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Blinks, slow and rapid eye movements in the epoch, ordered by onset.
pub fn detect_eye_events(epoch: &Epoch, cfg: &DetectorConfig) -> Vec<EyeEvent> {
    let window = (cfg.eye_baseline_s * TARGET_RATE_HZ).round() as usize;
    let dev = |c: Channel| -> Vec<f64> {
        let x = epoch.channel(c);
        running_median(x, window).iter().zip(x).map(|(m, v)| v - m).collect()
    };
    let (dl, dr) = (dev(Channel::Loc), dev(Channel::Roc));
    let n = dl.len();
    let e: Vec<f64> = dl.iter().zip(&dr).map(|(a, b)| a.abs().max(b.abs())).collect();

    let mut extents: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b) in runs(n, |i| e[i] >= cfg.eye_trigger_uv) {
        let peak = e[a..b].iter().copied().fold(0.0, f64::max);
        let floor = cfg.eye_extent_ratio * peak;
        let mut s = a;
        while s > 0 && e[s - 1] >= floor {
            s -= 1;
        }
        let mut t = b;
        while t < n && e[t] >= floor {
            t += 1;
        }
        match extents.last_mut() {
            Some(last) if s < last.1 => {
                last.1 = last.1.max(t);
                last.2 = last.2.max(peak);
            }
            _ => extents.push((s, t, peak)),
        }
    }

    let mut blinks = Vec::new();
    let mut out = Vec::new();
    for (s, t, peak) in extents {
        let conj = cosine(&dl[s..t], &dr[s..t]);
        let lead = if dl[s..t].iter().map(|v| v.abs()).fold(0.0, f64::max)
            >= dr[s..t].iter().map(|v| v.abs()).fold(0.0, f64::max)
        {
            &dl[s..t]
        } else {
            &dr[s..t]
        };
        let sign = lead.iter().find(|v| **v != 0.0).map_or(1.0, |v| v.signum());
        let lobe = lead.iter().take_while(|v| **v * sign >= 0.0).count();
        let initial_deflection_ms = lobe as f64 * 1000.0 / TARGET_RATE_HZ;
        let mut ev = EyeEvent {
            kind: EyeEventKind::Blink,
            t_start: sample_time(s),
            t_end: sample_time(t),
            conjugacy: conj,
            initial_deflection_ms,
            peak_uv: peak,
        };
        if conj < -cfg.eye_correlation {
            ev.kind = if initial_deflection_ms > cfg.sem_min_deflection_ms { EyeEventKind::Sem } else { EyeEventKind::Rem };
            out.push(ev);
        } else if conj > cfg.eye_correlation {
            blinks.push(ev);
        }
    }

    let (lo, hi) = cfg.blink_interval_s;
    let onsets: Vec<f64> = blinks.iter().map(|b| b.t_start).collect();
    for (i, b) in blinks.into_iter().enumerate() {
        let repeated = onsets.iter().enumerate().any(|(j, &o)| j != i && (o - b.t_start).abs() >= lo && (o - b.t_start).abs() <= hi);
        if repeated {
            out.push(b);
        }
    }
    out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    out
}
