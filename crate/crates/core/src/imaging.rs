//! Synthetic MR frames and artifact-based localization.
//!
//! The magnetic core shows up as a soft-edged signal void. Its edge profile
//! does not depend on the underlying tissue, so the thresholded blob stays
//! centred on the (smeared) capsule position whether it sits over fluid or wall.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dye::DyeField;
use crate::environment::Environment;
use crate::error::{NotFound, ValidationError};
use crate::geometry::Rect;
use crate::hifu::HifuState;
use crate::scalar::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactModel {
    /// m
    pub artifact_radius: f64,
    /// Edge falloff length, m.
    pub softness: f64,
    pub noise_sigma: f64,
    /// Centroid displacement per unit velocity, s.
    pub motion_smear_gain: f64,
}

impl Default for ArtifactModel {
    fn default() -> Self {
        Self { artifact_radius: 6.0e-3, softness: 5.0e-4, noise_sigma: 0.02, motion_smear_gain: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub width: usize,
    pub height: usize,
    /// Imaged area. Defaults to the world bounds grown by `fov_margin`, made square.
    pub field_of_view: Option<Rect<f64>>,
    pub fov_margin: f64,
    pub fluid_intensity: f64,
    pub wall_intensity: f64,
    /// Intensity added by a dye cell holding `dye_full_scale` m³ or more.
    pub dye_contrast: f64,
    pub dye_full_scale: f64,
    /// Noise multiplier inside `2σ` of an active focus.
    pub ripple_factor: f64,
    pub localize_threshold: f64,
    pub min_blob_pixels: usize,
    pub artifact: ArtifactModel,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            field_of_view: None,
            fov_margin: 8.0e-3,
            fluid_intensity: 0.8,
            wall_intensity: 0.2,
            dye_contrast: 0.2,
            dye_full_scale: 1.0e-10,
            ripple_factor: 3.0,
            localize_threshold: 0.15,
            min_blob_pixels: 10,
            artifact: ArtifactModel::default(),
        }
    }
}

impl ImagingConfig {
    pub fn validate(&self, capsule_radius: f64) -> Result<(), ValidationError> {
        if self.width < 8 || self.height < 8 {
            return Err(ValidationError::new("imaging.width", "frames must be at least 8x8 pixels"));
        }
        if let Some(f) = &self.field_of_view {
            if !f.is_valid() {
                return Err(ValidationError::new("imaging.field_of_view", "must be a non-empty rectangle"));
            }
        }
        if !(self.fov_margin >= 0.0) {
            return Err(ValidationError::new("imaging.fov_margin", "must be >= 0"));
        }
        for (name, v) in [("imaging.fluid_intensity", self.fluid_intensity), ("imaging.wall_intensity", self.wall_intensity)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ValidationError::new(name, "must be in [0, 1]"));
            }
        }
        if !(self.dye_full_scale > 0.0) {
            return Err(ValidationError::new("imaging.dye_full_scale", "must be > 0"));
        }
        let a = &self.artifact;
        if !(a.artifact_radius > capsule_radius) {
            return Err(ValidationError::new("imaging.artifact.artifact_radius", "must exceed the capsule radius"));
        }
        if !(a.softness > 0.0) {
            return Err(ValidationError::new("imaging.artifact.softness", "must be > 0"));
        }
        if !(a.noise_sigma >= 0.0) {
            return Err(ValidationError::new("imaging.artifact.noise_sigma", "must be >= 0"));
        }
        if !a.motion_smear_gain.is_finite() {
            return Err(ValidationError::new("imaging.artifact.motion_smear_gain", "must be finite"));
        }
        Ok(())
    }

    /// Imaged rectangle for `env`.
    pub fn resolve_fov(&self, env: &Environment<f64>) -> Rect<f64> {
        if let Some(f) = self.field_of_view {
            return f;
        }
        let b = env.bounds().expanded(self.fov_margin);
        let side = b.width().max(b.height());
        let half = Vec2::new(side, side) * 0.5;
        let c = b.center();
        Rect::new(c - half, c + half)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MRFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in `[0, 1]`, row 0 at the top (largest `y`).
    pub pixels: Vec<f32>,
    pub field_of_view: Rect<f64>,
    pub timestamp: f64,
    pub sequence_index: u64,
}

impl MRFrame {
    pub fn pixel_size(&self) -> Vec2<f64> {
        Vec2::new(self.field_of_view.width() / self.width as f64, self.field_of_view.height() / self.height as f64)
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Vec2<f64> {
        pixel_center(&self.field_of_view, self.width, self.height, row, col)
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// 8-bit grayscale bytes, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn to_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_bytes())
            .expect("pixel buffer matches frame size");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}

fn pixel_center(fov: &Rect<f64>, width: usize, height: usize, row: usize, col: usize) -> Vec2<f64> {
    let px = fov.width() / width as f64;
    let py = fov.height() / height as f64;
    Vec2::new(fov.min.x + (col as f64 + 0.5) * px, fov.max.y - (row as f64 + 0.5) * py)
}

/// Everything a frame depends on at the moment it is rendered.
#[derive(Debug, Clone, Copy)]
pub struct WorldSnapshot<'a> {
    pub capsule_position: Vec2<f64>,
    /// Mean velocity over the acquisition window.
    pub capsule_velocity: Vec2<f64>,
    pub hifu: HifuState<f64>,
    pub focal_sigma: f64,
    pub dye: Option<&'a DyeField<f64>>,
}

/// Renders frames for one world; the tissue background is computed once.
#[derive(Debug, Clone)]
pub struct Imager {
    pub config: ImagingConfig,
    pub field_of_view: Rect<f64>,
    background: Vec<f32>,
}

impl Imager {
    pub fn new(config: ImagingConfig, env: &Environment<f64>) -> Self {
        let fov = config.resolve_fov(env);
        let mut background = Vec::with_capacity(config.width * config.height);
        for row in 0..config.height {
            for col in 0..config.width {
                let p = pixel_center(&fov, config.width, config.height, row, col);
                let v = if env.is_navigable(p) { config.fluid_intensity } else { config.wall_intensity };
                background.push(v as f32);
            }
        }
        Self { config, field_of_view: fov, background }
    }

    /// Centre of the rendered artifact: the capsule displaced along its motion.
    pub fn artifact_center(&self, snapshot: &WorldSnapshot<'_>) -> Vec2<f64> {
        snapshot.capsule_position + snapshot.capsule_velocity * self.config.artifact.motion_smear_gain
    }

    pub fn render(&self, snapshot: &WorldSnapshot<'_>, seed: u64, sequence_index: u64, timestamp: f64) -> MRFrame {
        let cfg = &self.config;
        let art = &cfg.artifact;
        let (w, h) = (cfg.width, cfg.height);
        let center = self.artifact_center(snapshot);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sequence_index);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let ripple_r2 = (2.0 * snapshot.focal_sigma).powi(2);

        let mut pixels = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let p = pixel_center(&self.field_of_view, w, h, row, col);
                let mut v = self.background[row * w + col] as f64;
                if let Some(dye) = snapshot.dye {
                    if let Some((i, j)) = dye.cell_of(p) {
                        let c = dye.at(i, j);
                        if c > 0.0 {
                            v += cfg.dye_contrast * (c / cfg.dye_full_scale).min(1.0);
                        }
                    }
                }
                let d = p.distance(center);
                v = v.min(void_profile(d, art.artifact_radius, art.softness));
                let mut sigma = art.noise_sigma;
                if snapshot.hifu.enabled && snapshot.hifu.drive_voltage > 0.0 && (p - snapshot.hifu.focus_position).norm_squared() <= ripple_r2 {
                    sigma *= cfg.ripple_factor;
                }
                let n: f64 = unit.sample(&mut rng);
                pixels.push((v + sigma * n).clamp(0.0, 1.0) as f32);
            }
        }
        MRFrame { width: w, height: h, pixels, field_of_view: self.field_of_view, timestamp, sequence_index }
    }
}

/// Upper bound on intensity at distance `d` from the artifact centre.
fn void_profile(d: f64, radius: f64, softness: f64) -> f64 {
    let s = 1.0 / (1.0 + (-(d - radius) / softness).exp());
    0.02 + 0.98 * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub position: Vec2<f64>,
    /// Blob area over the nominal artifact area.
    pub confidence: f64,
    pub pixels: usize,
}

/// Centroid of the largest 4-connected blob at or below `threshold`.
/// Equal-sized blobs are separated by mean intensity, darker first.
pub fn localize_artifact(
    frame: &MRFrame,
    threshold: f32,
    min_pixels: usize,
    artifact_radius: f64,
) -> Result<Localization, NotFound> {
    let (w, h) = (frame.width, frame.height);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    // (pixel count, intensity sum, row sum, col sum)
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for start in 0..w * h {
        if seen[start] || frame.pixels[start] > threshold {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut n, mut sum, mut rs, mut cs) = (0usize, 0.0, 0.0, 0.0);
        while let Some(idx) = queue.pop_front() {
            let (r, c) = (idx / w, idx % w);
            n += 1;
            sum += frame.pixels[idx] as f64;
            rs += r as f64;
            cs += c as f64;
            let mut visit = |j: usize| {
                if !seen[j] && frame.pixels[j] <= threshold {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(idx - w);
            }
            if r + 1 < h {
                visit(idx + w);
            }
            if c > 0 {
                visit(idx - 1);
            }
            if c + 1 < w {
                visit(idx + 1);
            }
        }
        let better = match best {
            None => true,
            Some((bn, bsum, _, _)) => n > bn || (n == bn && sum / (n as f64) < bsum / (bn as f64)),
        };
        if better {
            best = Some((n, sum, rs, cs));
        }
    }
    match best {
        Some((n, _, rs, cs)) if n >= min_pixels => {
            let fov = &frame.field_of_view;
            let px = frame.pixel_size();
            let row = rs / n as f64;
            let col = cs / n as f64;
            let position = Vec2::new(fov.min.x + (col + 0.5) * px.x, fov.max.y - (row + 0.5) * px.y);
            let expected = std::f64::consts::PI * artifact_radius * artifact_radius;
            Ok(Localization { position, confidence: n as f64 * px.x * px.y / expected, pixels: n })
        }
        _ => Err(NotFound { min_pixels }),
    }
}
