//! Fixed-precedence evaluation of the staging rules over a feature
//! sequence.

use super::{render_rationale, RuleError, RuleId, ScorerState, Stage, StageDecision};
use crate::features::{EpochFeatures, EyeEventKind};

/// Epochs inspected when deciding whether a subject generates alpha.
pub const ALPHA_GENERATOR_EPOCHS: usize = 20;

const MAJORITY: f64 = 0.5;
/// Event count treated as filling the epoch for blink and REM trains.
const EYE_TRAIN_COUNT: usize = 8;
const N3_MIN_SWA: f64 = 0.20;
const HALF_EPOCH_S: f64 = 15.0;

fn eye_train(f: &EpochFeatures, kind: EyeEventKind) -> bool {
    f.eye_count(kind) >= EYE_TRAIN_COUNT || f.eye_coverage(kind) > MAJORITY
}

fn wake_rules(f: &EpochFeatures) -> Vec<RuleId> {
    let mut rules = Vec::new();
    if f.alpha_fraction > MAJORITY {
        rules.push(RuleId::W1);
    }
    if eye_train(f, EyeEventKind::Blink) {
        rules.push(RuleId::W2);
    }
    if eye_train(f, EyeEventKind::Rem) && !f.chin_tone_low {
        rules.push(RuleId::W3);
    }
    rules
}

/// Whether the epoch meets a wake onset rule on its own.
pub fn scoreable_as_wake(f: &EpochFeatures) -> bool {
    f.artifact_fraction <= MAJORITY && !wake_rules(f).is_empty()
}

fn lamf(f: &EpochFeatures) -> bool {
    f.lamf_fraction > MAJORITY
}

fn n1_rules(f: &EpochFeatures, state: &ScorerState) -> Vec<RuleId> {
    if state.alpha_generator {
        if lamf(f) && f.alpha_fraction <= MAJORITY {
            return vec![RuleId::N1_1];
        }
    } else if f.theta_slowing || f.has_vertex() || f.eye_count(EyeEventKind::Sem) > 0 {
        return vec![RuleId::N1_2];
    }
    Vec::new()
}

/// Stage and onset/continuation rules, before transition citations.
fn evaluate(f: &EpochFeatures, state: &ScorerState, prev_f: Option<&EpochFeatures>) -> (Stage, Vec<RuleId>, bool) {
    use Stage::*;
    let prev = state.prev_stage;
    let wake = wake_rules(f);
    if !wake.is_empty() {
        return (W, wake, false);
    }
    if f.swa_fraction >= N3_MIN_SWA {
        return (N3, vec![RuleId::N3_1], false);
    }

    let rems = f.eye_count(EyeEventKind::Rem);
    let sems = f.eye_count(EyeEventKind::Sem);
    let transients = f.has_spindle_or_kc();
    // Arousal followed by SEMs ends R even with low chin tone.
    let r_exit_to_n1 = prev == Some(R) && f.arousal_present && sems > 0;
    if !r_exit_to_n1 {
        if lamf(f) && !transients && f.chin_tone_low && rems > 0 {
            return (R, vec![RuleId::R1], false);
        }
        if state.r_context_active && lamf(f) && f.chin_tone_low && !f.arousal_present && !transients {
            return (R, vec![RuleId::R2], false);
        }
    }

    let n2_onset = f.n2_markers_in(0.0, HALF_EPOCH_S).next().is_some()
        || prev_f.is_some_and(|p| p.n2_markers_in(HALF_EPOCH_S, f64::INFINITY).next().is_some());
    if n2_onset {
        return (N2, vec![RuleId::N2_1], false);
    }
    if prev == Some(N3) && !f.arousal_present {
        return (N2, vec![RuleId::N2_3], false);
    }
    let movement_then_sem = prev == Some(N2) && prev_f.is_some_and(|p| p.artifact_fraction > MAJORITY) && sems > 0;
    if state.n2_context_active && !movement_then_sem && lamf(f) && !transients && !f.arousal_present {
        return (N2, vec![RuleId::N2_2], false);
    }

    let n1 = n1_rules(f, state);
    if !n1.is_empty() || r_exit_to_n1 || movement_then_sem {
        return (N1, n1, false);
    }
    (prev.unwrap_or(W), Vec::new(), true)
}

/// Stages one epoch.
///
/// `next_hint` is `Some(Stage::W)` when the following epoch is scoreable
/// as wake; it only matters for movement epochs. A movement epoch without
/// a wake indication cites MBM.2 and provisionally takes `next_hint`, the
/// previous stage, or W, in that order; [`stage_recording`] replaces it
/// with the resolved stage of its successor.
pub fn classify_epoch(
    features: &EpochFeatures,
    state: &ScorerState,
    prev_features: Option<&EpochFeatures>,
    next_hint: Option<Stage>,
) -> Result<StageDecision, RuleError> {
    state.check()?;
    let decision = |stage, rules, fallback| StageDecision {
        epoch_index: features.epoch_index,
        stage,
        rules,
        rationale: None,
        boundary: false,
        fallback,
    };
    let prev = state.prev_stage;

    if features.artifact_fraction > MAJORITY {
        let wake_adjacent = features.alpha_fraction > 0.0 || prev == Some(Stage::W) || next_hint == Some(Stage::W);
        return Ok(if wake_adjacent {
            decision(Stage::W, vec![RuleId::Mbm1], false)
        } else {
            decision(next_hint.or(prev).unwrap_or(Stage::W), vec![RuleId::Mbm2], false)
        });
    }

    let (stage, mut rules, fallback) = evaluate(features, state, prev_features);
    match prev {
        Some(Stage::N2) if stage != Stage::N2 => rules.push(RuleId::N2_4),
        Some(Stage::R) if stage != Stage::R => rules.push(RuleId::R3),
        _ => {}
    }
    rules.sort();
    rules.dedup();
    Ok(decision(stage, rules, fallback))
}

fn advance(state: &ScorerState, d: &StageDecision, f: &EpochFeatures) -> ScorerState {
    ScorerState {
        prev_stage: Some(d.stage),
        n2_context_active: d.stage == Stage::N2
            && !f.arousal_present
            && (d.cites(RuleId::N2_1) || state.n2_context_active),
        r_context_active: d.stage == Stage::R && !f.arousal_present,
        alpha_generator: state.alpha_generator,
    }
}

/// True if any of the first [`ALPHA_GENERATOR_EPOCHS`] epochs is alpha
/// dominant.
pub fn determine_alpha_generator(features: &[EpochFeatures]) -> bool {
    features.iter().take(ALPHA_GENERATOR_EPOCHS).any(|f| f.alpha_fraction > MAJORITY)
}

/// Stages a whole recording: a forward pass threading [`ScorerState`]
/// (movement epochs citing MBM.2 leave the state untouched), then a
/// backward pass giving each MBM.2 epoch its successor's stage. Rationales
/// are rendered for the final decisions.
pub fn stage_recording(
    features: &[EpochFeatures],
    alpha_generator: Option<bool>,
) -> Result<Vec<StageDecision>, RuleError> {
    if features.len() < 3 {
        return Err(RuleError::Sequence(format!("{} epochs; at least 3 are required", features.len())));
    }
    let mut state = ScorerState::new(alpha_generator.unwrap_or_else(|| determine_alpha_generator(features)));
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let next_hint = features.get(i + 1).filter(|n| scoreable_as_wake(n)).map(|_| Stage::W);
        let prev_f = i.checked_sub(1).map(|j| &features[j]);
        let d = classify_epoch(f, &state, prev_f, next_hint)?;
        if !d.cites(RuleId::Mbm2) {
            state = advance(&state, &d, f);
        }
        out.push(d);
    }
    for i in (0..out.len().saturating_sub(1)).rev() {
        if out[i].cites(RuleId::Mbm2) {
            out[i].stage = out[i + 1].stage;
        }
    }
    let last = out.len() - 1;
    for (i, d) in out.iter_mut().enumerate() {
        d.boundary = i == 0 || i == last;
        d.rationale = Some(render_rationale(d, &features[i]));
    }
    Ok(out)
}

/// `epoch_index,stage,rules,boundary_flag` with rules joined by `;`.
pub fn hypnogram_csv(decisions: &[StageDecision]) -> String {
    let mut s = String::from("epoch_index,stage,rules,boundary_flag\n");
    for d in decisions {
        let rules: Vec<&str> = d.rules.iter().map(|r| r.as_str()).collect();
        s.push_str(&format!("{},{},{},{}\n", d.epoch_index, d.stage, rules.join(";"), u8::from(d.boundary)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{EyeEvent, TransientEvent, TransientKind};
    use crate::psg_io::Channel;

    fn blank(index: usize) -> EpochFeatures {
        EpochFeatures {
            epoch_index: index,
            alpha_fraction: 0.0,
            lamf_fraction: 0.0,
            theta_slowing: false,
            dominant_frequency_hz: None,
            transients: Vec::new(),
            swa_fraction: 0.0,
            eye_events: Vec::new(),
            chin_mav_median: 10.0,
            chin_tone_low: false,
            artifact_fraction: 0.0,
            arousal_present: false,
            arousal_onset_s: None,
        }
    }

    fn eye(kind: EyeEventKind, t: f64) -> EyeEvent {
        EyeEvent { kind, t_start: t, t_end: t + 0.3, conjugacy: 0.9, initial_deflection_ms: 250.0, peak_uv: 60.0 }
    }

    fn spindle(t: f64) -> TransientEvent {
        TransientEvent {
            kind: TransientKind::Spindle,
            channel: Channel::C4M1,
            t_start: t,
            t_end: t + 1.0,
            peak_to_peak: 50.0,
            arousal_associated: false,
        }
    }

    fn lamf(index: usize) -> EpochFeatures {
        EpochFeatures { lamf_fraction: 0.9, ..blank(index) }
    }

    fn decide(f: &EpochFeatures, state: &ScorerState) -> StageDecision {
        classify_epoch(f, state, None, None).unwrap()
    }

    #[test]
    fn alpha_and_blinks_is_wake() {
        let f = EpochFeatures {
            alpha_fraction: 0.6,
            eye_events: (0..10).map(|k| eye(EyeEventKind::Blink, k as f64 * 1.2)).collect(),
            ..blank(0)
        };
        let d = decide(&f, &ScorerState::default());
        assert_eq!((d.stage, d.rules), (Stage::W, vec![RuleId::W1, RuleId::W2]));
    }

    #[test]
    fn early_spindle_is_n2() {
        let f = EpochFeatures { transients: vec![spindle(5.0)], swa_fraction: 0.05, ..lamf(0) };
        let d = decide(&f, &ScorerState::default());
        assert_eq!((d.stage, d.rules), (Stage::N2, vec![RuleId::N2_1]));
    }

    #[test]
    fn slow_waves_take_precedence() {
        let f = EpochFeatures { swa_fraction: 0.25, transients: vec![spindle(5.0)], ..blank(0) };
        let d = decide(&f, &ScorerState::default());
        assert_eq!((d.stage, d.rules), (Stage::N3, vec![RuleId::N3_1]));
    }

    #[test]
    fn rem_with_low_chin_is_r() {
        let f = EpochFeatures {
            chin_tone_low: true,
            chin_mav_median: 1.5,
            eye_events: vec![eye(EyeEventKind::Rem, 4.0)],
            ..lamf(0)
        };
        let d = decide(&f, &ScorerState::default());
        assert_eq!((d.stage, d.rules), (Stage::R, vec![RuleId::R1]));
    }

    #[test]
    fn lamf_under_n2_context_continues_n2() {
        let state = ScorerState { prev_stage: Some(Stage::N2), n2_context_active: true, ..Default::default() };
        let d = decide(&lamf(1), &state);
        assert_eq!((d.stage, d.rules), (Stage::N2, vec![RuleId::N2_2]));
    }

    #[test]
    fn inconsistent_state_is_rejected() {
        let state = ScorerState { prev_stage: Some(Stage::W), n2_context_active: true, ..Default::default() };
        assert!(matches!(classify_epoch(&lamf(0), &state, None, None), Err(RuleError::State(_))));
        let state = ScorerState { prev_stage: None, r_context_active: true, ..Default::default() };
        assert!(matches!(classify_epoch(&lamf(0), &state, None, None), Err(RuleError::State(_))));
    }

    #[test]
    fn fallback_carries_previous_stage() {
        let state = ScorerState { prev_stage: Some(Stage::N3), ..Default::default() };
        let f = EpochFeatures { arousal_present: true, arousal_onset_s: Some(3.0), ..blank(0) };
        let d = decide(&f, &state);
        assert_eq!(d.stage, Stage::N3);
        assert!(d.rules.is_empty() && d.fallback);
        let first = decide(&blank(0), &ScorerState::default());
        assert_eq!(first.stage, Stage::W);
        assert!(first.fallback);
    }

    fn movement(index: usize) -> EpochFeatures {
        EpochFeatures { artifact_fraction: 0.7, ..blank(index) }
    }

    fn wake(index: usize) -> EpochFeatures {
        EpochFeatures { alpha_fraction: 0.8, ..blank(index) }
    }

    fn n2(index: usize) -> EpochFeatures {
        EpochFeatures { transients: vec![spindle(4.0)], ..lamf(index) }
    }

    #[test]
    fn movement_next_to_wake_is_mbm1() {
        let d = stage_recording(&[wake(0), movement(1), n2(2)], Some(true)).unwrap();
        assert_eq!((d[1].stage, d[1].rules.clone()), (Stage::W, vec![RuleId::Mbm1]));
        assert!(d[0].boundary && !d[1].boundary && d[2].boundary);
    }

    #[test]
    fn movement_between_n2_is_mbm2() {
        let d = stage_recording(&[n2(0), movement(1), n2(2)], Some(true)).unwrap();
        assert_eq!((d[1].stage, d[1].rules.clone()), (Stage::N2, vec![RuleId::Mbm2]));
    }

    #[test]
    fn mbm2_chains_resolve_from_first_scored_successor() {
        let feats = vec![n2(0), movement(1), movement(2), movement(3), lamf(4), lamf(5)];
        let d = stage_recording(&feats, Some(true)).unwrap();
        assert!(d[1..4].iter().all(|x| x.cites(RuleId::Mbm2)));
        assert!(d[1..4].iter().all(|x| x.stage == d[4].stage));
        assert_eq!((d[4].stage, d[4].rules.clone()), (Stage::N2, vec![RuleId::N2_2]));
    }

    #[test]
    fn too_short_recording() {
        assert!(matches!(stage_recording(&[n2(0), n2(1)], None), Err(RuleError::Sequence(_))));
    }

    #[test]
    fn transitions_cite_termination_rules() {
        let d = stage_recording(&[n2(0), wake(1), wake(2)], Some(true)).unwrap();
        assert_eq!(d[1].rules, vec![RuleId::W1, RuleId::N2_4]);
        let rem = EpochFeatures {
            chin_tone_low: true,
            eye_events: vec![eye(EyeEventKind::Rem, 4.0)],
            ..lamf(0)
        };
        let d = stage_recording(&[rem.clone(), n2(1), n2(2)], Some(true)).unwrap();
        assert_eq!(d[1].rules, vec![RuleId::N2_1, RuleId::R3]);
        assert!(d.iter().all(StageDecision::is_compatible));
    }

    #[test]
    fn arousal_with_sem_leaves_r() {
        let rem = EpochFeatures { chin_tone_low: true, eye_events: vec![eye(EyeEventKind::Rem, 4.0)], ..lamf(0) };
        let mut sem = eye(EyeEventKind::Sem, 20.0);
        sem.initial_deflection_ms = 800.0;
        let exit = EpochFeatures {
            arousal_present: true,
            arousal_onset_s: Some(12.0),
            eye_events: vec![eye(EyeEventKind::Rem, 3.0), sem],
            ..rem.clone()
        };
        let d = stage_recording(&[rem.clone(), exit, rem], Some(false)).unwrap();
        assert_eq!(d[1].stage, Stage::N1);
        assert_eq!(d[1].rules, vec![RuleId::N1_2, RuleId::R3]);
    }

    #[test]
    fn hypnogram_layout() {
        let d = stage_recording(&[n2(0), wake(1), wake(2)], Some(true)).unwrap();
        let csv = hypnogram_csv(&d);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch_index,stage,rules,boundary_flag");
        assert_eq!(lines[2], "1,W,W.1;N2.4,0");
    }

    #[test]
    fn rationale_sections() {
        let f = EpochFeatures { swa_fraction: 0.3, ..blank(3) };
        let d = stage_recording(&[f.clone(), f.clone(), f], Some(true)).unwrap();
        let text = d[1].rationale.as_deref().unwrap();
        for needle in ["slow wave activity", "30%", ">75 μV", "Rule N3.1", "Conclusion: stage N3."] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
        assert!(!text.contains("I ") && !text.contains("my "));
    }

    #[test]
    fn rule_labels_round_trip() {
        for r in RuleId::ALL {
            assert_eq!(r.as_str().parse::<RuleId>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("N4".parse::<Stage>().is_err());
    }
}
