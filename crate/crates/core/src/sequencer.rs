//! Frame evaluation: `(Timeline, t) -> Frame`.
//!
//! Evaluation is a pure function of its inputs. Camera blocks form a chain
//! ordered by start time; each camera block animates from the final state of
//! the one before it. Content blocks become overlays while active.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{to_canonical_string, CanonicalError};
use crate::geometry::morph::MorphPlan;
use crate::geometry::path::{cumulative_lengths, path_prefix, point_along_with};
use crate::geometry::sphere::normalize_degrees;
use crate::model::{
    AnimationBlock, BlockArgs, BlockKind, GeoPoint, GeoShape, Polygon, Timeline, MAX_ZOOM,
};

/// Highlights fade in over this many seconds from their start.
pub const FADE_IN_SECONDS: f64 = 0.3;
/// Curvature of the smooth zoom-and-pan path.
pub const RHO: f64 = 1.42;
pub const MAX_PITCH: f64 = 60.0;
/// Web Mercator latitude limit.
const MAX_MERCATOR_LAT: f64 = 85.051_128_779_806_59;

#[derive(Debug, Error)]
pub enum SequencerError {
    #[error("block {0} is not a camera block")]
    NotCamera(String),
    #[error("block {0} is a camera block")]
    IsCamera(String),
    #[error("fps must be at least 1, got {0}")]
    InvalidFps(u32),
    #[error(transparent)]
    Serialize(#[from] CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub center: GeoPoint,
    pub zoom: f64,
    pub bearing: f64,
    pub pitch: f64,
}

impl CameraState {
    /// Default view before any camera block.
    pub const WORLD: CameraState = CameraState {
        center: GeoPoint::new(20.0, 0.0),
        zoom: 1.5,
        bearing: 0.0,
        pitch: 0.0,
    };

    fn normalized(mut self) -> Self {
        self.zoom = self.zoom.clamp(0.0, MAX_ZOOM);
        self.bearing = normalize_degrees(self.bearing);
        self.pitch = self.pitch.clamp(0.0, MAX_PITCH);
        self
    }
}

impl Default for CameraState {
    fn default() -> Self {
        Self::WORLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpritePose {
    pub point: GeoPoint,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterPose {
    pub point: GeoPoint,
    /// Position in the sprite's loop, `[0, 1)`.
    pub phase: f64,
}

/// Style values after fades are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedStyle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    pub opacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// A secondary shape drawn alongside the main one (fading morph pieces).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub shape: GeoShape,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayState {
    pub block_id: String,
    pub kind: BlockKind,
    pub shape: GeoShape,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprite_pose: Option<SpritePose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_poses: Option<Vec<ClusterPose>>,
    pub style: ResolvedStyle,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub camera: CameraState,
    pub overlays: Vec<OverlayState>,
}

impl Frame {
    pub fn to_canonical(&self) -> Result<String, CanonicalError> {
        to_canonical_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequencerConfig {
    pub world_view: CameraState,
    pub fade_in_seconds: f64,
}

impl Default for SequencerConfig {
    fn default() -> Self {
        Self {
            world_view: CameraState::WORLD,
            fade_in_seconds: FADE_IN_SECONDS,
        }
    }
}

pub fn ease_in_out_cubic(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p < 0.5 {
        4.0 * p * p * p
    } else {
        1.0 - (-2.0 * p + 2.0).powi(3) / 2.0
    }
}

/// Camera pose of `block` at `progress`, starting from `previous`.
pub fn camera_state(
    block: &AnimationBlock,
    progress: f64,
    previous: &CameraState,
) -> Result<CameraState, SequencerError> {
    let p = if progress.is_nan() { 0.0 } else { progress.clamp(0.0, 1.0) };
    let state = match &block.args {
        BlockArgs::CameraZoom { target, zoom_level } => {
            let end = CameraState {
                center: *target,
                zoom: *zoom_level,
                ..*previous
            };
            fly(previous, &end, ease_in_out_cubic(p))
        }
        BlockArgs::CameraTranslate {
            from,
            to,
            zoom_level,
        } => {
            let e = ease_in_out_cubic(p);
            CameraState {
                center: lerp_exact(*from, *to, e),
                zoom: *zoom_level,
                ..*previous
            }
        }
        BlockArgs::CameraOrbit {
            center,
            zoom_level,
            sweep,
            direction,
            start_bearing,
        } => CameraState {
            center: *center,
            zoom: *zoom_level,
            bearing: start_bearing.unwrap_or(previous.bearing) + direction.sign() * sweep * p,
            pitch: previous.pitch,
        },
        _ => return Err(SequencerError::NotCamera(block.id.clone())),
    };
    Ok(state.normalized())
}

fn lerp_exact(a: GeoPoint, b: GeoPoint, f: f64) -> GeoPoint {
    GeoPoint::new((1.0 - f) * a.lat + f * b.lat, (1.0 - f) * a.lon + f * b.lon)
}

fn mercator(p: GeoPoint) -> (f64, f64) {
    let lat = p.lat.clamp(-MAX_MERCATOR_LAT, MAX_MERCATOR_LAT).to_radians();
    let x = (p.lon + 180.0) / 360.0;
    let y = (1.0 - (std::f64::consts::FRAC_PI_4 + lat / 2.0).tan().ln() / std::f64::consts::PI) / 2.0;
    (x, y)
}

/// Smooth zoom-and-pan from `a` to `b` at eased progress `e` in `[0, 1]`.
///
/// The zoom follows the optimal zoom-and-pan curve, computed in Web Mercator
/// world units with visible width `2^-zoom`. The curve is traversed so that
/// the pan fraction equals `e`: the center moves linearly in lat/lon like a
/// translate, and the width is read off the curve at that pan fraction.
/// Longitude takes the short way round.
fn fly(a: &CameraState, b: &CameraState, e: f64) -> CameraState {
    if e <= 0.0 {
        return *a;
    }
    if e >= 1.0 {
        return *b;
    }
    let mut target = b.center;
    if target.lon - a.center.lon > 180.0 {
        target.lon -= 360.0;
    } else if a.center.lon - target.lon > 180.0 {
        target.lon += 360.0;
    }
    let (x0, y0) = mercator(a.center);
    let (x1, y1) = mercator(target);
    let w0 = (-a.zoom).exp2();
    let w1 = (-b.zoom).exp2();
    let d = (x1 - x0).hypot(y1 - y0);
    let rho2 = RHO * RHO;

    let w = if d < 1e-12 {
        // No pan: log-linear width.
        w0 * (w1 / w0).powf(e)
    } else {
        let b0 = (w1 * w1 - w0 * w0 + rho2 * rho2 * d * d) / (2.0 * w0 * rho2 * d);
        let r0 = ((b0 * b0 + 1.0).sqrt() - b0).ln();
        // Along the curve u(s) = w0/(rho^2 d) (cosh r0 tanh(rho s + r0) - sinh r0)
        // and w(s) = w0 cosh r0 / cosh(rho s + r0); eliminate s.
        let q = (e * d * rho2 / w0 + r0.sinh()) / r0.cosh();
        w0 * r0.cosh() * (1.0 - q * q).max(f64::MIN_POSITIVE).sqrt()
    };
    let mut center = lerp_exact(a.center, target, e);
    if center.lon < -180.0 {
        center.lon += 360.0;
    } else if center.lon > 180.0 {
        center.lon -= 360.0;
    }
    CameraState {
        center,
        zoom: -w.log2(),
        bearing: (1.0 - e) * a.bearing + e * b.bearing,
        pitch: (1.0 - e) * a.pitch + e * b.pitch,
    }
}

/// Overlay of a content block at `progress`, with no precomputed plan.
pub fn element_state(block: &AnimationBlock, progress: f64) -> Result<OverlayState, SequencerError> {
    if block.kind().is_camera() {
        return Err(SequencerError::IsCamera(block.id.clone()));
    }
    Ok(Prepared::block(block).overlay(block, progress, &SequencerConfig::default()))
}

/// Per-block precomputation reused across frames.
enum Prepared {
    None,
    Route(Vec<f64>),
    Morph(Option<MorphPlan>),
}

impl Prepared {
    fn block(block: &AnimationBlock) -> Self {
        match &block.args {
            BlockArgs::ElementRoute { path, .. } => Prepared::Route(cumulative_lengths(&path.vertices())),
            BlockArgs::ElementSpatialTransition {
                from_shape,
                to_shape,
            } => Prepared::Morph(MorphPlan::new(from_shape, to_shape).ok()),
            _ => Prepared::None,
        }
    }

    fn overlay(&self, block: &AnimationBlock, progress: f64, cfg: &SequencerConfig) -> OverlayState {
        let p = if progress.is_nan() { 0.0 } else { progress.clamp(0.0, 1.0) };
        let elapsed = p * block.duration();
        let base_opacity = block.style.opacity_or_default();
        let mut opacity = base_opacity;
        let mut sprite_pose = None;
        let mut cluster_poses = None;
        let mut residuals = Vec::new();

        let shape = match &block.args {
            BlockArgs::HighlightArea { shape } => {
                opacity *= fade(elapsed, cfg.fade_in_seconds);
                shape.clone()
            }
            BlockArgs::HighlightLine { path } => {
                opacity *= fade(elapsed, cfg.fade_in_seconds);
                path.clone()
            }
            BlockArgs::HighlightPoint { point } => {
                opacity *= fade(elapsed, cfg.fade_in_seconds);
                GeoShape::point(*point)
            }
            BlockArgs::ElementRoute { path, .. } => {
                let path = path.vertices();
                let cum = match self {
                    Prepared::Route(c) => c.clone(),
                    _ => cumulative_lengths(&path),
                };
                let (point, heading) = point_along_with(&path, &cum, p);
                sprite_pose = Some(SpritePose { point, heading });
                GeoShape::line(path_prefix(&path, &cum, p))
            }
            BlockArgs::ElementSpatialTransition {
                from_shape,
                to_shape,
            } => match self {
                Prepared::Morph(Some(plan)) => {
                    let f = plan.at(p);
                    residuals = f
                        .residuals
                        .into_iter()
                        .map(|(poly, o)| Residual {
                            shape: GeoShape::polygon(poly),
                            opacity: o * base_opacity,
                        })
                        .collect();
                    f.shape
                }
                // Shapes that cannot be morphed cut over at the midpoint.
                _ if p < 0.5 => from_shape.clone(),
                _ => to_shape.clone(),
            },
            BlockArgs::ElementAuxiliaryMotion {
                region,
                cluster_count,
                seed,
                ..
            } => {
                cluster_poses = Some(cluster(*region, *cluster_count, *seed, elapsed));
                GeoShape::polygon(Polygon::rect(
                    region.min.lon,
                    region.min.lat,
                    region.max.lon,
                    region.max.lat,
                ))
            }
            BlockArgs::CameraZoom { .. }
            | BlockArgs::CameraTranslate { .. }
            | BlockArgs::CameraOrbit { .. } => GeoShape::empty(),
        };

        let image = match &block.args {
            BlockArgs::ElementRoute { sprite, .. } => {
                block.style.image.clone().or_else(|| sprite.clone())
            }
            BlockArgs::ElementAuxiliaryMotion { sprite, .. } => {
                block.style.image.clone().or_else(|| Some(sprite.clone()))
            }
            _ => block.style.image.clone(),
        };

        OverlayState {
            block_id: block.id.clone(),
            kind: block.kind(),
            shape,
            progress: p,
            sprite_pose,
            cluster_poses,
            style: ResolvedStyle {
                color: block.style.color.clone(),
                opacity,
                label: block.style.label.clone(),
                image,
            },
            residuals,
        }
    }
}

fn fade(elapsed: f64, fade_in: f64) -> f64 {
    if fade_in <= 0.0 {
        1.0
    } else {
        (elapsed / fade_in).clamp(0.0, 1.0)
    }
}

/// Lissajous loops inside `region`, one per sprite; sprite `i` draws its
/// parameters from stream `i` of a generator seeded with `seed`.
fn cluster(region: crate::model::BoundingBox, count: u32, seed: u64, elapsed: f64) -> Vec<ClusterPose> {
    let (w, h) = (region.width(), region.height());
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(i));
            let cx = region.min.lon + w * rng.random_range(0.25..0.75);
            let cy = region.min.lat + h * rng.random_range(0.25..0.75);
            // Amplitudes keep the loop inside the region.
            let ax = (cx - region.min.lon).min(region.max.lon - cx) * rng.random_range(0.3..1.0);
            let ay = (cy - region.min.lat).min(region.max.lat - cy) * rng.random_range(0.3..1.0);
            let fx = f64::from(rng.random_range(1u32..=3));
            let fy = f64::from(rng.random_range(1u32..=3));
            let delta = rng.random_range(0.0..std::f64::consts::TAU);
            let period = rng.random_range(4.0..8.0);
            let offset: f64 = rng.random_range(0.0..1.0);
            let cycles = elapsed / period + offset;
            let phase = cycles - cycles.floor();
            let theta = std::f64::consts::TAU * phase;
            ClusterPose {
                point: GeoPoint::new(
                    cy + ay * (fy * theta).sin(),
                    cx + ax * (fx * theta + delta).sin(),
                ),
                phase,
            }
        })
        .collect()
}

/// A timeline with per-block precomputation, for evaluating many frames.
pub struct Sequencer<'a> {
    timeline: &'a Timeline,
    config: SequencerConfig,
    prepared: Vec<Prepared>,
    /// Indices of camera blocks ordered by start time.
    cameras: Vec<usize>,
    /// State each camera block starts from.
    camera_starts: Vec<CameraState>,
    camera_ends: Vec<CameraState>,
    /// Indices of content blocks ordered by start time.
    content: Vec<usize>,
}

impl<'a> Sequencer<'a> {
    pub fn new(timeline: &'a Timeline) -> Self {
        Self::with_config(timeline, SequencerConfig::default())
    }

    pub fn with_config(timeline: &'a Timeline, config: SequencerConfig) -> Self {
        let blocks = &timeline.blocks;
        let by_start = |v: &mut Vec<usize>| {
            v.sort_by(|&a, &b| blocks[a].start_time.total_cmp(&blocks[b].start_time).then(a.cmp(&b)))
        };
        let mut cameras: Vec<usize> = (0..blocks.len()).filter(|&i| blocks[i].kind().is_camera()).collect();
        let mut content: Vec<usize> = (0..blocks.len()).filter(|&i| !blocks[i].kind().is_camera()).collect();
        by_start(&mut cameras);
        by_start(&mut content);

        let mut camera_starts = Vec::with_capacity(cameras.len());
        let mut camera_ends = Vec::with_capacity(cameras.len());
        let mut state = config.world_view;
        for &i in &cameras {
            camera_starts.push(state);
            state = camera_state(&blocks[i], 1.0, &state).unwrap_or(state);
            camera_ends.push(state);
        }
        let prepared = blocks
            .iter()
            .map(|b| {
                if b.kind().is_camera() {
                    Prepared::None
                } else {
                    Prepared::block(b)
                }
            })
            .collect();
        Self {
            timeline,
            config,
            prepared,
            cameras,
            camera_starts,
            camera_ends,
            content,
        }
    }

    pub fn camera_at(&self, t: f64) -> CameraState {
        let blocks = &self.timeline.blocks;
        // Latest-starting active camera wins.
        let active = self
            .cameras
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &i)| blocks[i].is_active_at(t));
        if let Some((k, &i)) = active {
            let b = &blocks[i];
            return camera_state(b, b.local_progress(t), &self.camera_starts[k])
                .unwrap_or(self.camera_starts[k]);
        }
        // Otherwise hold the most recently finished camera.
        let mut held: Option<(f64, usize)> = None;
        for (k, &i) in self.cameras.iter().enumerate() {
            let end = blocks[i].end_time;
            if end <= t && held.is_none_or(|(e, _)| end >= e) {
                held = Some((end, k));
            }
        }
        held.map_or(self.config.world_view, |(_, k)| self.camera_ends[k])
    }

    pub fn evaluate(&self, t: f64) -> Frame {
        let blocks = &self.timeline.blocks;
        let overlays = self
            .content
            .iter()
            .filter(|&&i| blocks[i].is_active_at(t))
            .map(|&i| {
                let b = &blocks[i];
                self.prepared[i].overlay(b, b.local_progress(t), &self.config)
            })
            .collect();
        Frame {
            t,
            camera: self.camera_at(t),
            overlays,
        }
    }

    pub fn frame_count(&self, fps: u32) -> Result<usize, SequencerError> {
        if fps < 1 {
            return Err(SequencerError::InvalidFps(fps));
        }
        // The epsilon absorbs float noise in durations like 2.0 * 30.
        Ok((self.timeline.duration() * f64::from(fps) + 1e-9).floor() as usize + 1)
    }

    pub fn frames(&self, fps: u32) -> Result<impl Iterator<Item = Frame> + '_, SequencerError> {
        let n = self.frame_count(fps)?;
        Ok((0..n).map(move |i| self.evaluate(i as f64 / f64::from(fps))))
    }
}

pub fn evaluate(timeline: &Timeline, t: f64) -> Frame {
    Sequencer::new(timeline).evaluate(t)
}

pub fn export_frames(timeline: &Timeline, fps: u32) -> Result<Vec<Frame>, SequencerError> {
    let seq = Sequencer::new(timeline);
    let frames = seq.frames(fps)?.collect();
    Ok(frames)
}

/// Newline-delimited canonical frames, one per line.
pub fn export_stream(timeline: &Timeline, fps: u32) -> Result<String, SequencerError> {
    let seq = Sequencer::new(timeline);
    let mut out = String::new();
    for frame in seq.frames(fps)? {
        out.push_str(&frame.to_canonical()?);
        out.push('\n');
    }
    Ok(out)
}
