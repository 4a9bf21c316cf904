//! Piecewise-planar stereo sequences with analytic textures and exact ground truth.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{inverse_from_depth, ImageGrid, InverseDepthMap, NormalMap, ValidityMask};
use crate::solver::StereoSequence;

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 96;
pub const DEFAULT_FOCAL: f64 = 100.0;
pub const DEFAULT_BASELINE: f64 = 0.54;
pub const DEFAULT_SEED: u64 = 7;
pub const SCENE_NAMES: [&str; 3] = ["wall", "ground", "corridor"];

/// One planar wave `amplitude * sin(2 pi <frequency, (u, v)> + phase)`,
/// frequency in cycles per metre along the plane axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: [f64; 2],
    pub phase: f64,
}

/// Gray texture `mean + sum of sinusoids`, replicated over three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub mean: f64,
    pub components: Vec<Sinusoid>,
}

impl Texture {
    /// `count` waves with random orientation and phase. The first wave has the
    /// lowest frequency of `frequencies`, which keeps a wide basin for matching.
    pub fn random(
        rng: &mut ChaCha8Rng,
        count: usize,
        frequencies: (f64, f64),
        amplitude: f64,
    ) -> Self {
        let components = (0..count)
            .map(|i| {
                let f = if i == 0 {
                    frequencies.0
                } else {
                    rng.gen_range(frequencies.0..=frequencies.1)
                };
                let angle = rng.gen_range(0.0..PI);
                Sinusoid {
                    amplitude: amplitude / count as f64,
                    frequency: [f * angle.cos(), f * angle.sin()],
                    phase: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect();
        Self {
            mean: 0.5,
            components,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.components.len()) {
            return Err(Error::InvalidScene(format!(
                "texture needs 2 to 5 sinusoids, got {}",
                self.components.len()
            )));
        }
        let swing: f64 = self.components.iter().map(|s| s.amplitude.abs()).sum();
        if !(self.mean - swing >= 0.0 && self.mean + swing <= 1.0) {
            return Err(Error::InvalidScene("texture values leave [0, 1]".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.mean
            + self
                .components
                .iter()
                .map(|s| {
                    s.amplitude
                        * (2.0 * PI * (s.frequency[0] * u + s.frequency[1] * v) + s.phase).sin()
                })
                .sum::<f64>()
    }
}

/// Plane `<normal, X> = offset` in the frame-`t` left camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Breaks depth ties; the lower value wins.
    pub priority: u32,
    pub texture: Texture,
}

impl TexturedPlane {
    /// Orthonormal in-plane axes used as texture coordinates.
    fn axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.normal;
        let helper = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = n.cross(&helper).normalize();
        (e1, n.cross(&e1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub planes: Vec<TexturedPlane>,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
    /// Pure-x distance between the left and right cameras.
    pub baseline: f64,
    /// Pose 6-vector of the transform from frame `t` to frame `t-1`.
    pub ego_motion: Vector6<f64>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::InvalidScene("scene has no planes".into()));
        }
        for p in &self.planes {
            if !((p.normal.norm() - 1.0).abs() <= 1e-9) {
                return Err(Error::NotUnit {
                    norm: p.normal.norm(),
                });
            }
            if !p.offset.is_finite() {
                return Err(Error::InvalidScene("plane offset must be finite".into()));
            }
            p.texture.validate()?;
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::GridTooSmall {
                width: self.width,
                height: self.height,
                min_width: 16,
                min_height: 16,
            });
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "baseline must be positive, got {}",
                self.baseline
            )));
        }
        if !self.ego_motion.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidScene("ego-motion must be finite".into()));
        }
        Ok(())
    }

    /// Left-to-right camera transform.
    pub fn stereo_transform(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(-self.baseline, 0.0, 0.0))
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::exp(&self.ego_motion)
    }
}

/// Ground truth of one left view.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub depth: ImageGrid,
    pub dinv: InverseDepthMap,
    pub normals: NormalMap,
    /// Index into [`SceneSpec::planes`] of the surface seen at each pixel.
    pub plane: Vec<usize>,
}

impl FrameTruth {
    /// True at pixels whose 3x3 neighbourhood lies on a single plane.
    pub fn seam_mask(&self) -> ValidityMask {
        let (w, h) = self.depth.dims();
        let mut mask = ValidityMask::new(w, h, true);
        for y in 0..h {
            for x in 0..w {
                let id = self.plane[y * w + x];
                let mixed = (y.saturating_sub(1)..(y + 2).min(h)).any(|v| {
                    (x.saturating_sub(1)..(x + 2).min(w)).any(|u| self.plane[v * w + u] != id)
                });
                mask.set(x, y, !mixed);
            }
        }
        mask
    }
}

/// Two consecutive rendered stereo pairs with exact geometry for both left views.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub sequence: StereoSequence,
    pub truth: FrameTruth,
    pub prev_truth: FrameTruth,
    pub pose: RigidTransform,
}

/// Renders the four views of `spec`. Frame `t` left is the world frame.
pub fn render(spec: &SceneSpec) -> Result<OracleInstance> {
    spec.validate()?;
    let stereo = spec.stereo_transform();
    let pose = spec.pose();
    let rendered = |view: &RigidTransform| render_view(spec, view);
    let (left, truth) = rendered(&RigidTransform::identity())?;
    let (right, _) = rendered(&stereo)?;
    let (prev_left, prev_truth) = rendered(&pose)?;
    let (prev_right, _) = rendered(&stereo.compose(&pose))?;
    Ok(OracleInstance {
        sequence: StereoSequence::new(left, right, prev_left, prev_right, spec.intrinsics, stereo)?,
        truth,
        prev_truth,
        pose,
    })
}

/// Image and ground truth seen by a camera with world-to-camera transform `view`.
fn render_view(spec: &SceneSpec, view: &RigidTransform) -> Result<(ImageGrid, FrameTruth)> {
    let (w, h) = (spec.width, spec.height);
    let rt = view.rotation().transpose();
    let centre = -(rt * view.translation());
    let axes: Vec<_> = spec.planes.iter().map(TexturedPlane::axes).collect();
    let mut image = ImageGrid::zeros(w, h, 3);
    let mut depth = vec![0.0; w * h];
    let mut normals = vec![0.0; 3 * w * h];
    let mut plane = vec![0; w * h];
    for y in 0..h {
        for x in 0..w {
            let ray = spec.intrinsics.backproject(x as f64, y as f64).xtilde;
            let dir = rt * ray;
            // the ray has unit camera-z, so the ray parameter is the depth
            let hit = spec
                .planes
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let denom = p.normal.dot(&dir);
                    let s = (p.offset - p.normal.dot(&centre)) / denom;
                    (denom != 0.0 && s > 0.0 && s.is_finite()).then_some((s, p.priority, i))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((s, _, id)) = hit else {
                return Err(Error::NoIntersection { x, y });
            };
            let p = &spec.planes[id];
            let world = centre + dir * s;
            let value = p
                .texture
                .eval(axes[id].0.dot(&world), axes[id].1.dot(&world));
            for c in 0..3 {
                image.set(x, y, c, value);
            }
            let i = y * w + x;
            depth[i] = s;
            plane[i] = id;
            let mut n = view.rotation() * p.normal;
            if n.dot(&ray) > 0.0 {
                n = -n;
            }
            normals[3 * i..3 * i + 3].copy_from_slice(n.normalize().as_slice());
        }
    }
    let depth = ImageGrid::new(w, h, 1, depth)?;
    let dinv = InverseDepthMap::new(ImageGrid::new(
        w,
        h,
        1,
        depth
            .data()
            .iter()
            .map(|&d| inverse_from_depth(d))
            .collect(),
    )?)?;
    let truth = FrameTruth {
        depth,
        dinv,
        normals: NormalMap::new(ImageGrid::new(w, h, 3, normals)?)?,
        plane,
    };
    Ok((image, truth))
}

fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(
        DEFAULT_FOCAL,
        DEFAULT_FOCAL,
        (DEFAULT_WIDTH as f64 - 1.0) / 2.0,
        (DEFAULT_HEIGHT as f64 - 1.0) / 2.0,
    )
    .expect("default intrinsics are valid")
}

/// Geometry of one plane of a generated scene; the texture is drawn at build time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Texture frequency band in cycles per metre.
    pub frequencies: (f64, f64),
}

impl PlaneSpec {
    fn new(normal: [f64; 3], offset: f64, frequencies: (f64, f64)) -> Self {
        Self {
            normal: Vector3::from(normal),
            offset,
            frequencies,
        }
    }
}

/// Builds a scene from plane geometry, drawing 3 or 4 sinusoids per plane
/// from `seed`. Earlier planes win depth ties.
pub fn custom_scene(
    name: &str,
    planes: &[PlaneSpec],
    seed: u64,
    intrinsics: Intrinsics,
    (width, height): (usize, usize),
    baseline: f64,
    ego_motion: Vector6<f64>,
) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = planes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let count = rng.gen_range(3..=4);
            TexturedPlane {
                normal: p.normal,
                offset: p.offset,
                priority: i as u32,
                texture: Texture::random(&mut rng, count, p.frequencies, 0.4),
            }
        })
        .collect();
    SceneSpec {
        name: name.to_string(),
        planes,
        intrinsics,
        width,
        height,
        baseline,
        ego_motion,
    }
}

/// One of the canonical scenes by name (`wall`, `ground`, `corridor`), with
/// textures drawn from `seed`.
pub fn default_scene(name: &str, seed: u64) -> Option<SceneSpec> {
    let planes = match name {
        "wall" => vec![PlaneSpec::new([0.0, 0.0, -1.0], -6.0, (0.15, 0.4))],
        "ground" => vec![
            PlaneSpec::new([0.0, -1.0, 0.0], -1.5, (0.05, 0.2)),
            PlaneSpec::new([0.0, 0.0, -1.0], -12.0, (0.08, 0.2)),
        ],
        "corridor" => vec![
            PlaneSpec::new([1.0, 0.0, 0.0], -2.5, (0.05, 0.2)),
            PlaneSpec::new([-1.0, 0.0, 0.0], -2.5, (0.05, 0.2)),
            PlaneSpec::new([0.0, 0.0, -1.0], -14.0, (0.07, 0.18)),
        ],
        _ => return None,
    };
    Some(custom_scene(
        name,
        &planes,
        seed,
        default_intrinsics(),
        (DEFAULT_WIDTH, DEFAULT_HEIGHT),
        DEFAULT_BASELINE,
        Vector6::new(0.0, 0.0, 0.5, 0.0, 0.0, 0.0),
    ))
}

/// The fronto-parallel wall, the ground plane with a far wall, and the corridor.
pub fn default_scenes() -> Vec<SceneSpec> {
    SCENE_NAMES
        .iter()
        .map(|n| default_scene(n, DEFAULT_SEED).expect("known scene"))
        .collect()
}
