//! Scripted synthetic nights: epoch templates with the stage and rule
//! citations each one is built to satisfy.

use crate::psg_io::synth::{render_components, Component, Waveform};
use crate::psg_io::{Channel, ChannelSignal, Epoch, PsgError, Recording, EPOCH_SECONDS};
use crate::rules::{RuleId, Stage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "template")]
pub enum Template {
    /// Awake EEG with beta activity, optional occipital alpha and blinks.
    Wake { alpha: bool, blinks: bool },
    /// Irregular rapid eye movements with high chin tone.
    WakeRem,
    /// Low-amplitude mixed-frequency EEG, normal chin tone.
    Lamf { sems: bool, vertex: bool },
    /// LAMF with a spindle early and optionally a second one late.
    Spindle { late: bool },
    /// LAMF with a K-complex; with `arousal` it sits on an arousal onset.
    KComplex { arousal: bool },
    SlowWave,
    /// LAMF, low chin tone and `rems` rapid eye movements.
    Rem { rems: u8 },
    /// R background interrupted by an arousal followed by a slow eye
    /// movement.
    RemArousalSem,
    /// R background with an early spindle and no eye movements.
    RemSpindle,
    /// LAMF obscured by movement artifact from 5 to 25 s.
    Movement { alpha: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Chin {
    Low,
    Normal,
    High,
}

fn chin(level: Chin) -> Vec<Component> {
    let (a, b) = match level {
        Chin::Low => (2.4, 0.8),
        Chin::Normal => (15.0, 8.0),
        Chin::High => (22.0, 10.0),
    };
    vec![Component::sine(Channel::Chin, 25.0, a), Component::sine(Channel::Chin, 37.0, b).with_phase(0.7)]
}

fn eog_noise() -> Vec<Component> {
    [Channel::Loc, Channel::Roc]
        .iter()
        .map(|&c| Component::new(c, Waveform::Noise, 0.0, 30.0, 0.0, 1.0))
        .collect()
}

fn lamf_eeg() -> Vec<Component> {
    let mut v = Vec::new();
    for (c, ph) in [(Channel::F4M1, 0.0), (Channel::C4M1, 1.0), (Channel::O2M1, 2.0)] {
        v.push(Component::sine(c, 5.0, 6.0).with_phase(ph));
        v.push(Component::sine(c, 6.5, 4.0).with_phase(2.0 * ph));
        v.push(Component::sine(c, 3.0, 3.0).with_phase(3.0 * ph));
        v.push(Component::new(c, Waveform::Noise, 0.0, 30.0, 0.0, 1.0));
    }
    v
}

fn awake_eeg(alpha: bool) -> Vec<Component> {
    let mut v = Vec::new();
    for c in Channel::EEG {
        if alpha && c == Channel::O2M1 {
            v.push(Component::sine(c, 10.0, 30.0));
            v.push(Component::sine(c, 18.0, 3.0));
        } else {
            v.push(Component::sine(c, 18.0, 6.0).with_phase(c.index() as f64));
            v.push(Component::sine(c, 22.0, 4.0));
        }
        v.push(Component::new(c, Waveform::Noise, 0.0, 30.0, 0.0, 1.5));
    }
    v
}

fn eye_pair(kind: Waveform, t: f64, duration: f64, amplitude: f64, conjugate_sign: f64) -> [Component; 2] {
    [
        Component::new(Channel::Loc, kind, t, duration, 0.0, amplitude),
        Component::new(Channel::Roc, kind, t, duration, 0.0, conjugate_sign * amplitude),
    ]
}

fn blinks() -> Vec<Component> {
    (0..29).flat_map(|k| eye_pair(Waveform::Blink, 0.6 + k as f64, 0.25, 80.0, 1.0)).collect()
}

/// Rapid eye movements at jittered, irregular times, alternating direction.
fn rems(count: usize, span: (f64, f64), jitter: usize) -> Vec<Component> {
    let step = (span.1 - span.0) / count as f64;
    (0..count)
        .flat_map(|k| {
            let t = span.0 + step * k as f64 + 0.3 * ((k + jitter) % 3) as f64;
            let dir = if k % 2 == 0 { 1.0 } else { -1.0 };
            eye_pair(Waveform::Rem, t, 0.2, 70.0 * dir, -1.0)
        })
        .collect()
}

fn sem(t: f64) -> [Component; 2] {
    eye_pair(Waveform::Sem, t, 1.0, 40.0, -1.0)
}

fn spindle(t: f64) -> Component {
    Component::new(Channel::C4M1, Waveform::SpindleBurst, t, 1.0, 13.0, 30.0)
}

fn arousal_burst(t: f64) -> [Component; 2] {
    [
        Component::new(Channel::C4M1, Waveform::Sine, t, 5.0, 10.0, 25.0),
        Component::new(Channel::C4M1, Waveform::Sine, t, 5.0, 20.0, 8.0),
    ]
}

impl Template {
    /// Waveform components of the template for the `position`-th epoch of
    /// a night (used only to vary event timing).
    pub fn components(self, position: usize) -> Vec<Component> {
        let mut v = eog_noise();
        match self {
            Template::Wake { alpha, blinks: b } => {
                v.extend(awake_eeg(alpha));
                v.extend(chin(Chin::High));
                if b {
                    v.extend(blinks());
                }
            }
            Template::WakeRem => {
                v.extend(awake_eeg(false));
                v.extend(chin(Chin::High));
                v.extend(rems(12, (1.0, 28.0), position));
            }
            Template::Lamf { sems, vertex } => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Normal));
                if sems {
                    v.extend(sem(6.0));
                    v.extend(sem(19.0));
                }
                if vertex {
                    v.push(Component::new(Channel::C4M1, Waveform::KComplex, 9.0, 0.3, 0.0, 30.0));
                }
            }
            Template::Spindle { late } => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Normal));
                v.push(spindle(4.0 + (position % 4) as f64));
                if late {
                    v.push(spindle(21.0));
                }
            }
            Template::KComplex { arousal } => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Normal));
                let t = if arousal { 16.0 } else { 7.0 + (position % 3) as f64 };
                v.push(Component::new(Channel::F4M1, Waveform::KComplex, t, 0.8, 0.0, 60.0));
                if arousal {
                    v.extend(arousal_burst(15.5));
                }
            }
            Template::SlowWave => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Normal));
                v.push(Component::new(Channel::F4M1, Waveform::SlowWave, 8.0, 9.0, 1.0, 65.0));
                v.push(Component::new(Channel::C4M1, Waveform::SlowWave, 8.0, 9.0, 1.0, 50.0));
            }
            Template::Rem { rems: n } => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Low));
                if n > 0 {
                    v.extend(rems(n as usize, (3.0, 27.0), position));
                }
            }
            Template::RemArousalSem => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Low));
                v.extend(rems(1, (4.0, 5.0), 0));
                v.extend(arousal_burst(15.5));
                v.extend(sem(22.0));
            }
            Template::RemSpindle => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Low));
                v.push(spindle(6.0));
            }
            Template::Movement { alpha } => {
                v.extend(lamf_eeg());
                v.extend(chin(Chin::Normal));
                for c in Channel::ALL {
                    v.push(Component::new(c, Waveform::Artifact, 5.0, 20.0, 0.0, 150.0));
                }
                if alpha {
                    v.push(Component::new(Channel::O2M1, Waveform::Sine, 0.0, 5.0, 10.0, 30.0));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEpoch {
    #[serde(flatten)]
    pub template: Template,
    pub stage: Stage,
    pub rules: Vec<RuleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NightScript {
    pub subject_id: String,
    pub alpha_generator: bool,
    pub epochs: Vec<ScriptedEpoch>,
}

fn epoch_seed(seed: u64, position: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(position as u64)
}

impl NightScript {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epochs rendered directly at 100 Hz.
    pub fn render_epochs(&self, seed: u64) -> Result<Vec<Epoch>, PsgError> {
        self.epochs
            .iter()
            .enumerate()
            .map(|(i, e)| crate::psg_io::synth::synthesize_epoch(&e.template.components(i), i, epoch_seed(seed, i)))
            .collect()
    }

    /// The whole night as a continuous recording at `rate_hz`.
    pub fn render_recording(&self, rate_hz: f64, seed: u64) -> Result<Recording, PsgError> {
        let mut rows: [Vec<f64>; 6] = Default::default();
        for (i, e) in self.epochs.iter().enumerate() {
            let part = render_components(&e.template.components(i), rate_hz, EPOCH_SECONDS as f64, epoch_seed(seed, i))?;
            for (row, p) in rows.iter_mut().zip(part) {
                row.extend(p);
            }
        }
        let channels = Channel::ALL
            .iter()
            .zip(rows)
            .map(|(&c, samples)| ChannelSignal::new(c, samples, rate_hz))
            .collect();
        Recording::new(self.subject_id.clone(), channels, rate_hz)
    }
}

struct Builder(Vec<ScriptedEpoch>);

impl Builder {
    fn push(&mut self, template: Template, stage: Stage, rules: &[RuleId]) -> &mut Self {
        let mut rules = rules.to_vec();
        rules.sort();
        self.0.push(ScriptedEpoch { template, stage, rules });
        self
    }

    fn repeat(&mut self, n: usize, template: Template, stage: Stage, rules: &[RuleId]) -> &mut Self {
        for _ in 0..n {
            self.push(template, stage, rules);
        }
        self
    }
}

const LAMF: Template = Template::Lamf { sems: false, vertex: false };
const SPINDLE: Template = Template::Spindle { late: false };
const KC: Template = Template::KComplex { arousal: false };
const REM3: Template = Template::Rem { rems: 3 };
const REM_QUIET: Template = Template::Rem { rems: 0 };

/// Night of a subject with a posterior dominant rhythm.
fn alpha_subject() -> NightScript {
    use RuleId::*;
    use Stage::*;
    let wake_blink = Template::Wake { alpha: true, blinks: true };
    let wake = Template::Wake { alpha: true, blinks: false };
    let mut b = Builder(Vec::new());
    b.repeat(3, wake_blink, W, &[W1, W2]).repeat(2, wake, W, &[W1]);
    b.push(Template::Movement { alpha: false }, W, &[Mbm1]);
    b.push(wake, W, &[W1]);
    b.push(Template::Movement { alpha: true }, W, &[Mbm1]);
    b.push(wake_blink, W, &[W1, W2]);
    for cycle in 0..3 {
        b.repeat(2, LAMF, N1, &[N1_1]);
        b.push(SPINDLE, N2, &[N2_1]).repeat(2, LAMF, N2, &[N2_2]);
        b.push(KC, N2, &[N2_1]).push(LAMF, N2, &[N2_2]);
        b.push(Template::Spindle { late: true }, N2, &[N2_1]).push(LAMF, N2, &[N2_1]);
        b.push(LAMF, N2, &[N2_2]);
        b.push(Template::SlowWave, N3, &[N2_4, N3_1]).repeat(3, Template::SlowWave, N3, &[N3_1]);
        b.push(LAMF, N2, &[N2_3]).push(SPINDLE, N2, &[N2_1]).push(LAMF, N2, &[N2_2]);
        b.push(Template::KComplex { arousal: true }, N1, &[N1_1, N2_4]);
        b.push(LAMF, N1, &[N1_1]);
        b.push(SPINDLE, N2, &[N2_1]).push(LAMF, N2, &[N2_2]);
        b.push(Template::Movement { alpha: false }, N2, &[Mbm2]);
        b.push(SPINDLE, N2, &[N2_1]);
        b.push(Template::Movement { alpha: false }, N1, &[Mbm2]);
        b.push(Template::Lamf { sems: true, vertex: false }, N1, &[N1_1, N2_4]);
        b.push(SPINDLE, N2, &[N2_1]);
        b.push(REM3, R, &[N2_4, R1]).repeat(2, REM_QUIET, R, &[R2]);
        b.push(REM3, R, &[R1]).push(LAMF, N1, &[N1_1, R3]);
        b.push(REM3, R, &[R1]).push(REM_QUIET, R, &[R2]);
        b.push(Template::RemSpindle, N2, &[N2_1, R3]).push(LAMF, N2, &[N2_2]);
        b.push(REM3, R, &[N2_4, R1]).push(Template::RemArousalSem, N1, &[N1_1, R3]);
        b.push(LAMF, N1, &[N1_1]);
        b.push(REM3, R, &[R1]);
        if cycle < 2 {
            b.push(wake_blink, W, &[R3, W1, W2]).push(wake, W, &[W1]);
        } else {
            b.push(REM_QUIET, R, &[R2]);
            b.push(wake_blink, W, &[R3, W1, W2]).repeat(2, wake_blink, W, &[W1, W2]);
        }
    }
    NightScript { subject_id: "synth-a".into(), alpha_generator: true, epochs: b.0 }
}

/// Night of a subject without a posterior dominant rhythm.
fn non_alpha_subject() -> NightScript {
    use RuleId::*;
    use Stage::*;
    let wake_blink = Template::Wake { alpha: false, blinks: true };
    let mut b = Builder(Vec::new());
    b.repeat(3, wake_blink, W, &[W2]).repeat(2, Template::WakeRem, W, &[W3]);
    b.push(Template::Movement { alpha: false }, W, &[Mbm1]).push(wake_blink, W, &[W2]);
    for cycle in 0..3 {
        b.push(LAMF, N1, &[N1_2]).push(Template::Lamf { sems: true, vertex: false }, N1, &[N1_2]);
        b.push(Template::Lamf { sems: false, vertex: true }, N1, &[N1_2]);
        b.push(SPINDLE, N2, &[N2_1]).repeat(2, LAMF, N2, &[N2_2]);
        b.push(KC, N2, &[N2_1]).push(LAMF, N2, &[N2_2]);
        b.repeat(3, Template::SlowWave, N3, &[N3_1]);
        b.0.iter_mut().rev().nth(2).expect("three slow-wave epochs").rules = vec![N2_4, N3_1];
        b.push(LAMF, N2, &[N2_3]).push(KC, N2, &[N2_1]);
        b.push(Template::KComplex { arousal: true }, N1, &[N1_2, N2_4]);
        b.push(LAMF, N1, &[N1_2]).push(SPINDLE, N2, &[N2_1]);
        b.push(REM3, R, &[N2_4, R1]).repeat(2, REM_QUIET, R, &[R2]);
        b.push(LAMF, N1, &[N1_2, R3]);
        b.push(REM3, R, &[R1]).push(Template::RemArousalSem, N1, &[N1_2, R3]);
        b.push(LAMF, N1, &[N1_2]);
        b.push(REM3, R, &[R1]).push(Template::RemSpindle, N2, &[N2_1, R3]);
        b.push(LAMF, N2, &[N2_2]);
        b.push(Template::Movement { alpha: false }, N2, &[Mbm2]).push(KC, N2, &[N2_1]);
        b.push(wake_blink, W, &[N2_4, W2]);
        b.push(Template::Movement { alpha: false }, W, &[Mbm1]);
        b.push(Template::WakeRem, W, &[W3]);
        if cycle == 2 {
            b.repeat(2, wake_blink, W, &[W2]);
        }
    }
    NightScript { subject_id: "synth-b".into(), alpha_generator: false, epochs: b.0 }
}

/// The two standard scripted nights.
pub fn standard_nights() -> Vec<NightScript> {
    vec![alpha_subject(), non_alpha_subject()]
}
