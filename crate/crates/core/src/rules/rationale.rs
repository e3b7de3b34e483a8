//! Templated rationale text for a staging decision.
//!
//! Sections appear in a fixed order: channel observations, identified
//! features, rule citations, exclusion of the runner-up stage, conclusion.

use super::{RuleId, Stage, StageDecision};
use crate::features::{EpochFeatures, EyeEventKind, TransientKind};

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

fn times(f: &EpochFeatures, kind: EyeEventKind) -> String {
    let t: Vec<String> = f.eye_events.iter().filter(|e| e.kind == kind).map(|e| format!("{:.1}", e.t_start)).collect();
    t.join(", ")
}

fn observations(f: &EpochFeatures) -> Vec<String> {
    let mut out = Vec::new();
    let alpha_s = (f.alpha_fraction * 30.0).round();
    out.push(if alpha_s > 0.0 {
        format!("O2-M1 shows alpha activity (8–13 Hz) in {alpha_s:.0} of 30 seconds ({}).", pct(f.alpha_fraction))
    } else {
        "O2-M1 shows no alpha activity.".to_string()
    });
    out.push(if f.swa_fraction > 0.0 {
        format!(
            "F4-M1 shows slow wave activity (0.5–2 Hz, >75 μV peak-to-peak) over {} of the epoch.",
            pct(f.swa_fraction)
        )
    } else {
        "F4-M1 shows no slow wave activity above 75 μV peak-to-peak.".to_string()
    });
    for t in &f.transients {
        let span = format!("{:.1}–{:.1} s", t.t_start, t.t_end);
        out.push(match t.kind {
            TransientKind::Spindle => format!(
                "{} shows a sleep spindle (11–16 Hz) at {span}, {:.0} μV peak-to-peak.",
                t.channel, t.peak_to_peak
            ),
            TransientKind::KComplex => format!(
                "{} shows a K-complex at {span}, {:.0} μV peak-to-peak, {} an arousal.",
                t.channel,
                t.peak_to_peak,
                if t.arousal_associated { "associated with" } else { "not associated with" }
            ),
            TransientKind::VertexSharp => format!(
                "{} shows a vertex sharp wave at {span}, {:.0} μV peak-to-peak.",
                t.channel, t.peak_to_peak
            ),
        });
    }
    if f.lamf_fraction > 0.0 {
        out.push(format!("Low-amplitude mixed-frequency (LAMF) activity occupies {} of the epoch.", pct(f.lamf_fraction)));
    }
    if f.theta_slowing {
        if let Some(hz) = f.dominant_frequency_hz {
            out.push(format!("The dominant EEG frequency is {hz:.0} Hz, within the 4–7 Hz range."));
        }
    }
    let blinks = f.eye_count(EyeEventKind::Blink);
    let rems = f.eye_count(EyeEventKind::Rem);
    let sems = f.eye_count(EyeEventKind::Sem);
    if blinks > 0 {
        out.push(format!(
            "LOC and ROC show {blinks} eye blinks (in-phase deflections repeating at 0.5–2 Hz), the first at {} s.",
            times(f, EyeEventKind::Blink).split(", ").next().unwrap_or_default()
        ));
    }
    if rems > 0 {
        out.push(format!(
            "LOC and ROC show {rems} rapid eye movements (out-of-phase, initial deflection under 500 ms) at {} s.",
            times(f, EyeEventKind::Rem)
        ));
    }
    if sems > 0 {
        out.push(format!(
            "LOC and ROC show {sems} slow eye movements (out-of-phase, initial deflection over 500 ms) at {} s.",
            times(f, EyeEventKind::Sem)
        ));
    }
    if blinks + rems + sems == 0 {
        out.push("LOC and ROC show no eye movements.".to_string());
    }
    out.push(format!(
        "Chin EMG median amplitude is {:.1} μV ({}).",
        f.chin_mav_median,
        if f.chin_tone_low { "low tone" } else { "normal or high tone" }
    ));
    if f.artifact_fraction > 0.0 {
        out.push(format!("Movement or muscle artifact obscures {} of the epoch.", pct(f.artifact_fraction)));
    }
    if let Some(t) = f.arousal_onset_s {
        out.push(format!("An arousal (shift to alpha and beta frequencies on C4-M1) begins at {t:.0} s."));
    }
    out
}

fn identified(f: &EpochFeatures) -> String {
    let mut v: Vec<&str> = Vec::new();
    if f.alpha_fraction > 0.5 {
        v.push("alpha rhythm");
    }
    if f.swa_fraction > 0.0 {
        v.push("slow wave activity");
    }
    for (kind, name) in [
        (TransientKind::Spindle, "sleep spindle"),
        (TransientKind::KComplex, "K-complex"),
        (TransientKind::VertexSharp, "vertex sharp wave"),
    ] {
        if f.transients.iter().any(|t| t.kind == kind) {
            v.push(name);
        }
    }
    if f.lamf_fraction > 0.5 {
        v.push("LAMF activity");
    }
    for (kind, name) in [(EyeEventKind::Blink, "eye blinks"), (EyeEventKind::Rem, "REMs"), (EyeEventKind::Sem, "SEMs")] {
        if f.eye_count(kind) > 0 {
            v.push(name);
        }
    }
    if f.chin_tone_low {
        v.push("low chin tone");
    }
    if f.artifact_fraction > 0.5 {
        v.push("movement artifact");
    }
    if f.arousal_present {
        v.push("arousal");
    }
    if v.is_empty() {
        "none".to_string()
    } else {
        v.join(", ")
    }
}

fn rule_summary(r: RuleId) -> &'static str {
    match r {
        RuleId::W1 => "alpha rhythm over O2-M1 occupies more than half of the epoch",
        RuleId::W2 => "eye blinks at 0.5–2 Hz fill more than half of the epoch",
        RuleId::W3 => "rapid eye movements fill more than half of the epoch while chin tone is normal or high",
        RuleId::N1_1 => "in a subject who generates alpha, alpha rhythm gives way to LAMF activity for more than half of the epoch",
        RuleId::N1_2 => "in a subject without alpha rhythm, EEG slowing, vertex sharp waves or slow eye movements are present",
        RuleId::N2_1 => {
            "a spindle or a K-complex without arousal appears in the first half of this epoch or the second half of the previous one, with N3 criteria unmet"
        }
        RuleId::N2_2 => "LAMF activity without spindles or K-complexes continues N2 opened by an earlier spindle or K-complex, with no arousal in between",
        RuleId::N2_3 => "the epoch follows N3, no longer meets N3 criteria, has no arousal and meets neither W nor R criteria",
        RuleId::N2_4 => "N2 ends at this epoch",
        RuleId::N3_1 => "slow wave activity covers at least 20% of the epoch",
        RuleId::R1 => "LAMF activity without spindles or K-complexes, low chin tone and rapid eye movements occur together",
        RuleId::R2 => "LAMF activity with low chin tone continues a definite R epoch without arousal",
        RuleId::R3 => "R ends at this epoch",
        RuleId::Mbm1 => "artifact obscures more than half of the epoch with alpha activity or an adjacent wake epoch",
        RuleId::Mbm2 => "artifact obscures more than half of the epoch without wake evidence, so the following epoch's stage is used",
    }
}

fn exclusion(d: &StageDecision, f: &EpochFeatures) -> String {
    if d.rules.iter().any(|r| matches!(r, RuleId::Mbm1 | RuleId::Mbm2)) {
        return "Stage-specific criteria are not assessed because artifact obscures most of the epoch.".to_string();
    }
    if d.fallback {
        return "No stage has its onset or continuation criteria met.".to_string();
    }
    match d.stage {
        Stage::W => "Stage N1 is excluded because the wake criteria above are met.".to_string(),
        Stage::N1 => {
            "Stage N2 is excluded because no spindle or K-complex without arousal opens N2 and no N2 continuation applies."
                .to_string()
        }
        Stage::N2 if f.swa_fraction > 0.0 => format!(
            "Stage N3 is excluded because slow wave activity covers {}, below 20%.",
            pct(f.swa_fraction)
        ),
        Stage::N2 => "Stage N1 is excluded because N2 criteria hold for this epoch.".to_string(),
        Stage::N3 => format!(
            "Stage N2 is excluded because slow wave activity of {} meets the 20% threshold.",
            pct(f.swa_fraction)
        ),
        Stage::R => format!(
            "Stage N1 is excluded because chin tone is low ({:.1} μV) and no spindle or K-complex is present.",
            f.chin_mav_median
        ),
    }
}

/// Renders the rationale paragraph for `decision`.
pub fn render_rationale(decision: &StageDecision, features: &EpochFeatures) -> String {
    let mut parts = observations(features);
    parts.push(format!("Identified features: {}.", identified(features)));
    if decision.rules.is_empty() {
        parts.push("Continuation, no rule matched: the stage of the preceding epoch is carried forward.".to_string());
    }
    for r in &decision.rules {
        parts.push(format!("Rule {r} applies: {}.", rule_summary(*r)));
    }
    parts.push(exclusion(decision, features));
    parts.push(format!("Conclusion: stage {}.", decision.stage));
    parts.join(" ")
}
