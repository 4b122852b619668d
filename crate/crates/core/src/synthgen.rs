//! Procedural labeled voxel rooms.
//!
//! A room is a floor plus two low walls (background) with a handful of
//! solid primitives standing on the floor. Each class has its own shape
//! family, size range and base color. Class frequencies follow a power-law
//! long tail, and every scene carries a scene-type tag that biases which
//! classes appear in it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::standard_normal;
use crate::rng;
use crate::scene::{ClassCatalog, ClassEntry, Instance, Label, Mask, Scene, Voxel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Sphere,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    pub kind: ShapeKind,
    /// Inclusive range of the half extent / radius, in voxels.
    pub size: (u32, u32),
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scenes: usize,
    pub grid: u32,
    pub classes: usize,
    /// Per-class shape; empty means the built-in palette.
    pub shapes: Vec<ClassShape>,
    pub instances: (usize, usize),
    pub color_noise: f64,
    /// Class `c` (1-based rank) is drawn with weight `c^-tail_exponent`.
    pub tail_exponent: f64,
    pub scene_types: usize,
    /// Weight multiplier for classes whose home scene type matches the scene.
    pub type_affinity: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scenes: 60,
            grid: 16,
            classes: 12,
            shapes: Vec::new(),
            instances: (3, 8),
            color_noise: 0.05,
            tail_exponent: 1.0,
            scene_types: 4,
            type_affinity: 3.0,
            seed: 0,
        }
    }
}

const MAX_RETRIES: usize = 200;
const MAX_LAYOUTS: usize = 50;
pub const MIN_INSTANCE_VOXELS: usize = 8;

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.grid < 8 {
            return bad("grid must be at least 8");
        }
        if self.classes == 0 {
            return bad("class count must be positive");
        }
        if self.instances.0 == 0 || self.instances.0 > self.instances.1 {
            return bad("instance range must be positive and ordered");
        }
        if !(self.color_noise >= 0.0) || !self.color_noise.is_finite() {
            return bad("color noise std must be >= 0");
        }
        if !self.tail_exponent.is_finite() || self.tail_exponent < 0.0 {
            return bad("tail exponent must be >= 0");
        }
        if self.scene_types == 0 {
            return bad("scene type count must be positive");
        }
        if !(self.type_affinity > 0.0) || !self.type_affinity.is_finite() {
            return bad("type affinity must be positive");
        }
        if !self.shapes.is_empty() && self.shapes.len() != self.classes {
            return bad("shapes must list one entry per class");
        }
        for s in &self.class_shapes() {
            if s.size.0 == 0 || s.size.0 > s.size.1 {
                return bad("shape size range must be positive and ordered");
            }
            if 2 * s.size.1 + 3 > self.grid {
                return bad("shape does not fit in the grid");
            }
        }
        Ok(())
    }

    /// Shapes actually used (explicit list or the built-in palette).
    pub fn class_shapes(&self) -> Vec<ClassShape> {
        if !self.shapes.is_empty() {
            return self.shapes.clone();
        }
        let big = self.grid >= 24;
        (0..self.classes)
            .map(|c| {
                let kind = [ShapeKind::Box, ShapeKind::Sphere, ShapeKind::Cylinder][c % 3];
                let size = match (c / 3) % 2 {
                    0 => (2, 2),
                    _ => (2, 3),
                };
                let size = if big { (size.0 + 1, size.1 + 1) } else { size };
                let hue = (c as f64 * 0.618_033_988_75) % 1.0;
                ClassShape {
                    kind,
                    size,
                    color: hsv(hue, 0.85, 0.9),
                }
            })
            .collect()
    }

    /// Home scene type of each class (0-based class index).
    pub fn home_type(&self, class_index: usize) -> u32 {
        (class_index % self.scene_types) as u32
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0) as u32 % 6;
    let f = h * 6.0 - libm::floor(h * 6.0);
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub catalog: ClassCatalog,
}

/// Generate `cfg.scenes` scenes and a catalog with per-class instance counts.
pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let shapes = cfg.class_shapes();
    let entries = (0..cfg.classes)
        .map(|c| ClassEntry {
            id: c as u32 + 1,
            name: format!("class_{:02}", c + 1),
            count: 0,
        })
        .collect();
    let mut catalog = ClassCatalog::new(entries)?;
    let mut scenes = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        scenes.push(generate_scene(cfg, &shapes, i)?);
    }
    catalog.recount(&scenes);
    Ok(Dataset { scenes, catalog })
}

/// Scene `index` of the dataset described by `cfg`.
pub fn generate_scene(cfg: &GenConfig, shapes: &[ClassShape], index: usize) -> Result<Scene> {
    let mut r = rng::stream(cfg.seed, rng::streams::SCENE_BASE + index as u64);
    let scene_type = r.random_range(0..cfg.scene_types) as u32;
    let weights: Vec<f64> = (0..cfg.classes)
        .map(|c| {
            let w = libm::pow((c + 1) as f64, -cfg.tail_exponent);
            if cfg.home_type(c) == scene_type {
                w * cfg.type_affinity
            } else {
                w
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();

    for _ in 0..MAX_LAYOUTS {
        let n_inst = r.random_range(cfg.instances.0..=cfg.instances.1);
        let classes: Vec<usize> = (0..n_inst)
            .map(|_| {
                let mut u = r.random::<f64>() * total;
                for (c, w) in weights.iter().enumerate() {
                    if u < *w {
                        return c;
                    }
                    u -= w;
                }
                cfg.classes - 1
            })
            .collect();
        if let Some(layout) = place(cfg, shapes, &classes, &mut r) {
            return Ok(rasterize(cfg, index, scene_type, &layout, &mut r));
        }
    }
    Err(Error::Config(format!(
        "could not place {}..={} instances in a {}-voxel room",
        cfg.instances.0, cfg.instances.1, cfg.grid
    )))
}

/// Owner grid: 0 empty, 1 background, `2 + k` instance k.
struct Layout {
    owner: Vec<u16>,
    classes: Vec<usize>,
}

fn cell(g: u32, x: u32, y: u32, z: u32) -> usize {
    ((z * g + y) * g + x) as usize
}

fn place(cfg: &GenConfig, shapes: &[ClassShape], classes: &[usize], r: &mut impl Rng) -> Option<Layout> {
    let g = cfg.grid;
    let mut owner = vec![0u16; (g * g * g) as usize];
    for y in 0..g {
        for x in 0..g {
            owner[cell(g, x, y, 0)] = 1;
        }
    }
    let wall = (g / 4).max(2);
    for z in 1..=wall {
        for t in 0..g {
            owner[cell(g, t, 0, z)] = 1;
            owner[cell(g, 0, t, z)] = 1;
        }
    }

    for (k, &c) in classes.iter().enumerate() {
        let shape = &shapes[c];
        let mut placed = false;
        for _ in 0..MAX_RETRIES {
            let s = r.random_range(shape.size.0..=shape.size.1) as i32;
            let (hx, hy, hz) = match shape.kind {
                ShapeKind::Box => (s, s + r.random_range(0..=1), s - 1),
                ShapeKind::Sphere => (s, s, s),
                ShapeKind::Cylinder => (s, s, s + 1),
            };
            let hz = hz.max(1);
            let lo = 2 + hx.max(hy);
            let hi = g as i32 - 1 - hx.max(hy);
            if lo > hi {
                continue;
            }
            let cx = r.random_range(lo..=hi);
            let cy = r.random_range(lo..=hi);
            let cz = 1 + hz;
            if cz + hz >= g as i32 {
                continue;
            }
            let mut cells = Vec::new();
            for z in (cz - hz)..=(cz + hz) {
                for y in (cy - hy)..=(cy + hy) {
                    for x in (cx - hx)..=(cx + hx) {
                        let (dx, dy, dz) = ((x - cx) as f64, (y - cy) as f64, (z - cz) as f64);
                        let inside = match shape.kind {
                            ShapeKind::Box => true,
                            ShapeKind::Sphere => {
                                dx * dx + dy * dy + dz * dz <= (s as f64 + 0.5) * (s as f64 + 0.5)
                            }
                            ShapeKind::Cylinder => dx * dx + dy * dy <= (s as f64 + 0.5) * (s as f64 + 0.5),
                        };
                        if inside {
                            cells.push(cell(g, x as u32, y as u32, z as u32));
                        }
                    }
                }
            }
            // Keep a one-voxel gap to other instances and walls.
            let clear = cells.iter().all(|&i| {
                let z = i as u32 / (g * g);
                let y = (i as u32 / g) % g;
                let x = i as u32 % g;
                neighbors(g, x, y, z).all(|j| {
                    let o = owner[j];
                    o == 0 || (o == 1 && j / (g * g) as usize == 0)
                })
            });
            if clear && cells.len() >= MIN_INSTANCE_VOXELS {
                for &i in &cells {
                    owner[i] = 2 + k as u16;
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(Layout {
        owner,
        classes: classes.to_vec(),
    })
}

fn neighbors(g: u32, x: u32, y: u32, z: u32) -> impl Iterator<Item = usize> {
    let g = g as i64;
    let (x, y, z) = (x as i64, y as i64, z as i64);
    (-1..=1i64).flat_map(move |dz| {
        (-1..=1i64).flat_map(move |dy| {
            (-1..=1i64).filter_map(move |dx| {
                let (a, b, c) = (x + dx, y + dy, z + dz);
                if a < 0 || b < 0 || c < 0 || a >= g || b >= g || c >= g {
                    None
                } else {
                    Some(((c * g + b) * g + a) as usize)
                }
            })
        })
    })
}

fn rasterize(cfg: &GenConfig, index: usize, scene_type: u32, layout: &Layout, r: &mut impl Rng) -> Scene {
    let g = cfg.grid;
    let shapes = cfg.class_shapes();
    let n_inst = layout.classes.len();
    let mut voxels = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_inst];
    for z in 0..g {
        for y in 0..g {
            for x in 0..g {
                let o = layout.owner[cell(g, x, y, z)];
                if o == 0 {
                    continue;
                }
                let base = if o == 1 {
                    if z == 0 {
                        [0.45, 0.42, 0.4]
                    } else {
                        [0.75, 0.75, 0.72]
                    }
                } else {
                    let k = (o - 2) as usize;
                    members[k].push(voxels.len());
                    shapes[layout.classes[k]].color
                };
                let mut rgb = base;
                for ch in &mut rgb {
                    *ch = (*ch + cfg.color_noise * standard_normal(r)).clamp(0.0, 1.0);
                }
                voxels.push(Voxel {
                    pos: [x as i32, y as i32, z as i32],
                    rgb,
                });
            }
        }
    }
    let n = voxels.len();
    let instances = members
        .iter()
        .zip(&layout.classes)
        .map(|(idx, &c)| Instance {
            mask: Mask::from_indices(n, idx).expect("indices come from this scene"),
            label: Label::Class(c as u32 + 1),
        })
        .collect();
    let id: String = format!("scene_{index:05}");
    Scene {
        id,
        voxels,
        instances,
        scene_type: Some(scene_type),
    }
}
