//! Rasterizes a 30-s, six-channel epoch into a 448×224 RGB waveform image.
//!
//! Lanes are stacked top to bottom in montage order with integer
//! boundaries at `round(i·H/6)`. Each channel is drawn as a per-column
//! min/max envelope around its lane centre; excursions past the lane are
//! drawn into neighbouring lanes. Vertical time grid lines sit under the
//! traces.

use crate::psg_io::{Channel, ChannelKind, Epoch, EPOCH_SAMPLES, EPOCH_SECONDS};
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("sequence error: {0}")]
    Sequence(String),
    #[error("image encoding failed: {0}")]
    Encode(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// RGB per channel, montage order.
    pub colors: [[u8; 3]; 6],
    pub background: [u8; 3],
    /// Half-lane amplitude for EEG and EOG, μV.
    pub eeg_eog_scale_uv: f64,
    /// Half-lane amplitude for chin EMG, μV.
    pub emg_scale_uv: f64,
    pub grid_1s: [u8; 3],
    pub grid_5s: [u8; 3],
    pub antialias: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 448,
            height: 224,
            colors: [
                [0xFF, 0xFF, 0x00], // F4-M1 yellow
                [0x00, 0xFF, 0x00], // C4-M1 green
                [0xFF, 0x00, 0x00], // O2-M1 red
                [0x00, 0xFF, 0xFF], // LOC cyan
                [0xFF, 0x00, 0xFF], // ROC magenta
                [0x00, 0x00, 0xFF], // Chin blue
            ],
            background: [0, 0, 0],
            eeg_eog_scale_uv: 50.0,
            emg_scale_uv: 40.0,
            grid_1s: [64, 64, 64],
            grid_5s: [128, 128, 128],
            antialias: false,
        }
    }
}

impl RenderConfig {
    pub fn color(&self, channel: Channel) -> [u8; 3] {
        self.colors[channel.index()]
    }

    pub fn scale_uv(&self, channel: Channel) -> f64 {
        match channel.kind() {
            ChannelKind::Emg => self.emg_scale_uv,
            _ => self.eeg_eog_scale_uv,
        }
    }

    /// Integer row boundaries `[top, bottom)` of a lane.
    pub fn lane_bounds(&self, channel: Channel) -> (u32, u32) {
        let h = self.height as f64;
        let i = channel.index() as f64;
        ((i * h / 6.0).round() as u32, ((i + 1.0) * h / 6.0).round() as u32)
    }

    pub fn lane_center(&self, channel: Channel) -> f64 {
        (channel.index() as f64 + 0.5) * self.height as f64 / 6.0
    }

    fn half_lane(&self) -> f64 {
        self.height as f64 / 12.0
    }

    /// Vertical pixel coordinate (float) of `value_uv` on `channel`'s lane.
    pub fn y_of(&self, channel: Channel, value_uv: f64) -> f64 {
        self.lane_center(channel) - value_uv / self.scale_uv(channel) * self.half_lane()
    }

    /// Columns of the 1-s grid lines, with a flag for the 5-s subset.
    pub fn grid_columns(&self) -> Vec<(u32, bool)> {
        (1..EPOCH_SECONDS)
            .map(|t| {
                let x = (t as f64 * self.width as f64 / EPOCH_SECONDS as f64).round() as u32;
                (x, t % 5 == 0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochImage {
    pub pixels: RgbImage,
    pub epoch_index: usize,
}

impl EpochImage {
    pub fn to_png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            self.pixels.as_raw(),
            self.pixels.width(),
            self.pixels.height(),
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RenderError> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }
}

/// `<subject>_<epoch:05>.png`
pub fn image_file_name(subject_id: &str, epoch_index: usize) -> String {
    format!("{subject_id}_{epoch_index:05}.png")
}

fn blend(img: &mut RgbImage, x: u32, y: i64, color: [u8; 3], alpha: f64) {
    if y < 0 || y >= img.height() as i64 || alpha <= 0.0 {
        return;
    }
    let px = img.get_pixel_mut(x, y as u32);
    let a = alpha.min(1.0);
    for (v, c) in px.0.iter_mut().zip(color) {
        *v = (*v as f64 * (1.0 - a) + c as f64 * a).round() as u8;
    }
}

fn draw_span(img: &mut RgbImage, x: u32, y0: f64, y1: f64, color: [u8; 3], antialias: bool) {
    let (lo, hi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
    if !antialias {
        let (a, b) = (lo.round() as i64, hi.round() as i64);
        for y in a.max(0)..=b.min(img.height() as i64 - 1) {
            img.put_pixel(x, y as u32, Rgb(color));
        }
        return;
    }
    if hi - lo < 1.0 {
        // Sub-pixel span: split one pixel's worth of ink between two rows.
        let mid = 0.5 * (lo + hi);
        let base = mid.floor();
        let frac = mid - base;
        blend(img, x, base as i64, color, 1.0 - frac);
        blend(img, x, base as i64 + 1, color, frac);
        return;
    }
    let (first, last) = (lo.floor() as i64, hi.floor() as i64);
    blend(img, x, first, color, 1.0 - (lo - lo.floor()));
    for y in first + 1..last {
        blend(img, x, y, color, 1.0);
    }
    blend(img, x, last, color, hi - hi.floor());
}

/// Deterministic rendering of one epoch.
pub fn render_epoch(epoch: &Epoch, cfg: &RenderConfig) -> EpochImage {
    let (w, h) = (cfg.width, cfg.height);
    let mut img = RgbImage::from_pixel(w, h, Rgb(cfg.background));
    for (x, major) in cfg.grid_columns() {
        if x < w {
            let c = if major { cfg.grid_5s } else { cfg.grid_1s };
            for y in 0..h {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }

    let n = EPOCH_SAMPLES;
    for channel in Channel::ALL {
        let data = epoch.channel(channel);
        let color = cfg.color(channel);
        let mut prev_last: Option<f64> = None;
        for x in 0..w {
            let s0 = x as usize * n / w as usize;
            let s1 = ((x as usize + 1) * n / w as usize).max(s0 + 1).min(n);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in prev_last.iter().chain(&data[s0..s1]) {
                let y = cfg.y_of(channel, v);
                lo = lo.min(y);
                hi = hi.max(y);
            }
            prev_last = Some(data[s1 - 1]);
            draw_span(&mut img, x, lo, hi, color, cfg.antialias);
        }
    }
    EpochImage { pixels: img, epoch_index: epoch.index }
}

/// Renders preceding, current and subsequent epochs; indices must be
/// consecutive.
pub fn render_triplet(
    prev: &Epoch,
    cur: &Epoch,
    next: &Epoch,
    cfg: &RenderConfig,
) -> Result<[EpochImage; 3], RenderError> {
    if cur.index == 0 || prev.index + 1 != cur.index || cur.index + 1 != next.index {
        return Err(RenderError::Sequence(format!(
            "epochs {}, {}, {} are not consecutive",
            prev.index, cur.index, next.index
        )));
    }
    Ok([render_epoch(prev, cfg), render_epoch(cur, cfg), render_epoch(next, cfg)])
}

/// Triplet centred on `center` within a recording's epoch list; the first
/// and last epochs cannot be centres.
pub fn render_triplet_at(epochs: &[Epoch], center: usize, cfg: &RenderConfig) -> Result<[EpochImage; 3], RenderError> {
    if center == 0 || center + 1 >= epochs.len() {
        return Err(RenderError::Sequence(format!(
            "epoch {center} has no neighbour on both sides (recording has {} epochs)",
            epochs.len()
        )));
    }
    render_triplet(&epochs[center - 1], &epochs[center], &epochs[center + 1], cfg)
}
