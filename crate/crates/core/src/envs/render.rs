//! Small software rasterizer: pinhole camera, z-buffer, flat Lambert shading.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PerlinField;
use crate::clothsim::{ClothSim, FingerAxis, Hanger};
use crate::math::{ceil, clamp, floor, Vec3};
use crate::{Error, Result};

/// Per-pixel surface ids written alongside the colour buffer.
pub mod surface {
    pub const BACKGROUND: u8 = 0;
    pub const TABLE: u8 = 1;
    pub const CLOTH: u8 = 2;
    pub const HANGER: u8 = 3;
    pub const TAPE: u8 = 4;
    pub const GRIPPER: u8 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub position: Vec3,
    pub color: [f64; 3],
    pub ambient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub table: [f64; 3],
    pub cloth: [f64; 3],
    pub hanger: [f64; 3],
    pub tape: [f64; 3],
    pub gripper: [f64; 3],
    pub background: [f64; 3],
}

pub struct TableTexture<'a> {
    pub field: &'a PerlinField,
    /// Noise cycles per metre.
    pub scale: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major, channel-last, values in `[0, 1]`.
    pub rgb: Vec<f64>,
    pub ids: Vec<u8>,
}

impl Frame {
    pub fn count(&self, id: u8) -> usize {
        self.ids.iter().filter(|&&i| i == id).count()
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb.iter().map(|v| (clamp(*v, 0.0, 1.0) * 255.0 + 0.5) as u8).collect()
    }
}

pub struct Scene<'a> {
    pub sim: &'a ClothSim,
    pub camera: Camera,
    pub light: Light,
    pub palette: Palette,
    pub texture: Option<TableTexture<'a>>,
    /// Half extents of the drawn table rectangle, centred at `table_center`.
    pub table_center: (f64, f64),
    pub table_half: (f64, f64),
}

struct View {
    eye: Vec3,
    right: Vec3,
    down: Vec3,
    forward: Vec3,
    f: f64,
    cx: f64,
    cy: f64,
}

const NEAR: f64 = 1e-3;
const TABLE_OFFSET: f64 = 1e-3;
const TAPE_OFFSET: f64 = 5e-4;
const TAPE_HALF_WIDTH: f64 = 0.0075;

impl View {
    fn new(c: &Camera) -> Result<Self> {
        if !(c.focal > 0.0 && c.focal.is_finite()) || c.width == 0 || c.height == 0 {
            return Err(Error::Parameter("camera needs a positive focal length and image size".into()));
        }
        let forward = (c.target - c.position).normalized();
        let right = forward.cross(c.up);
        if !(forward.norm() > 0.5 && right.norm() > 1e-9) {
            return Err(Error::Parameter("camera orientation is degenerate".into()));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        Ok(Self {
            eye: c.position,
            right,
            down,
            forward,
            f: c.focal,
            cx: c.width as f64 / 2.0,
            cy: c.height as f64 / 2.0,
        })
    }

    /// Screen position and inverse depth; `None` behind the near plane.
    fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let d = p - self.eye;
        let z = d.dot(self.forward);
        if z <= NEAR {
            return None;
        }
        Some((self.cx + self.f * d.dot(self.right) / z, self.cy + self.f * d.dot(self.down) / z, 1.0 / z))
    }

    fn ray(&self, px: f64, py: f64) -> Vec3 {
        self.forward + self.right * ((px - self.cx) / self.f) + self.down * ((py - self.cy) / self.f)
    }
}

struct Raster<'a> {
    view: View,
    w: usize,
    h: usize,
    rgb: Vec<f64>,
    ids: Vec<u8>,
    inv_depth: Vec<f64>,
    light: &'a Light,
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Top-left rule for a clockwise-positive edge in y-down screen space.
fn owns_boundary(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

impl Raster<'_> {
    fn shade(&self, tri: &[Vec3; 3], base: [f64; 3]) -> [f64; 3] {
        let mut n = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        if n.dot(self.view.eye - centroid) < 0.0 {
            n = -n;
        }
        let l = (self.light.position - centroid).normalized();
        let diffuse = n.dot(l).max(0.0);
        let k = self.light.ambient + (1.0 - self.light.ambient) * diffuse;
        [
            base[0] * self.light.color[0] * k,
            base[1] * self.light.color[1] * k,
            base[2] * self.light.color[2] * k,
        ]
    }

    fn triangle(&mut self, tri: [Vec3; 3], id: u8, color: [f64; 3], texture: Option<(&TableTexture, f64)>) {
        let (Some(a), Some(b), Some(c)) = (self.view.project(tri[0]), self.view.project(tri[1]), self.view.project(tri[2])) else {
            return;
        };
        let p0 = (a.0, a.1);
        let (mut p1, mut p2) = ((b.0, b.1), (c.0, c.1));
        let z0 = a.2;
        let (mut z1, mut z2) = (b.2, c.2);
        let mut area = edge(p0, p1, p2);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            core::mem::swap(&mut p1, &mut p2);
            core::mem::swap(&mut z1, &mut z2);
            area = -area;
        }
        let shaded = self.shade(&tri, color);
        let min_x = floor(p0.0.min(p1.0).min(p2.0)).max(0.0) as usize;
        let min_y = floor(p0.1.min(p1.1).min(p2.1)).max(0.0) as usize;
        let max_x = ceil(p0.0.max(p1.0).max(p2.0)).min(self.w as f64) as usize;
        let max_y = ceil(p0.1.max(p1.1).max(p2.1)).min(self.h as f64) as usize;
        let own = [owns_boundary(p1, p2), owns_boundary(p2, p0), owns_boundary(p0, p1)];
        for y in min_y..max_y {
            for x in min_x..max_x {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let w = [edge(p1, p2, p), edge(p2, p0, p), edge(p0, p1, p)];
                if (0..3).any(|k| w[k] < 0.0 || (w[k] == 0.0 && !own[k])) {
                    continue;
                }
                let inv_z = (w[0] * z0 + w[1] * z1 + w[2] * z2) / area;
                let idx = y * self.w + x;
                if inv_z <= self.inv_depth[idx] {
                    continue;
                }
                self.inv_depth[idx] = inv_z;
                self.ids[idx] = id;
                let mut rgb = shaded;
                if let Some((tex, plane_z)) = texture {
                    let ray = self.view.ray(p.0, p.1);
                    if ray.z != 0.0 {
                        let t = (plane_z - self.view.eye.z) / ray.z;
                        let hit = self.view.eye + ray * t;
                        let m = 1.0 + tex.amplitude * tex.field.sample(hit.x * tex.scale, hit.y * tex.scale);
                        rgb = rgb.map(|v| v * m);
                    }
                }
                for (k, v) in rgb.iter().enumerate() {
                    self.rgb[idx * 3 + k] = clamp(*v, 0.0, 1.0);
                }
            }
        }
    }

    fn quad(&mut self, q: [Vec3; 4], id: u8, color: [f64; 3]) {
        self.triangle([q[0], q[1], q[2]], id, color, None);
        self.triangle([q[0], q[2], q[3]], id, color, None);
    }

    fn cuboid(&mut self, center: Vec3, half: Vec3, id: u8, color: [f64; 3]) {
        let c = |sx: f64, sy: f64, sz: f64| center + Vec3::new(sx * half.x, sy * half.y, sz * half.z);
        let faces = [
            [c(-1., -1., 1.), c(1., -1., 1.), c(1., 1., 1.), c(-1., 1., 1.)],
            [c(-1., -1., -1.), c(-1., 1., -1.), c(1., 1., -1.), c(1., -1., -1.)],
            [c(1., -1., -1.), c(1., 1., -1.), c(1., 1., 1.), c(1., -1., 1.)],
            [c(-1., -1., -1.), c(-1., -1., 1.), c(-1., 1., 1.), c(-1., 1., -1.)],
            [c(-1., 1., -1.), c(-1., 1., 1.), c(1., 1., 1.), c(1., 1., -1.)],
            [c(-1., -1., -1.), c(1., -1., -1.), c(1., -1., 1.), c(-1., -1., 1.)],
        ];
        for f in faces {
            self.quad(f, id, color);
        }
    }
}

/// Render the scene into a colour buffer and a surface-id buffer.
pub fn render(scene: &Scene) -> Result<Frame> {
    let cam = &scene.camera;
    let view = View::new(cam)?;
    let (w, h) = (cam.width, cam.height);
    let mut r = Raster {
        view,
        w,
        h,
        rgb: scene.palette.background.iter().copied().cycle().take(w * h * 3).collect(),
        ids: vec![surface::BACKGROUND; w * h],
        inv_depth: vec![0.0; w * h],
        light: &scene.light,
    };
    let sim = scene.sim;
    let table_z = sim.rigid.table_height - TABLE_OFFSET;

    // Table as a grid so that near-plane culling only drops small pieces.
    let n = 12;
    let (tx, ty) = scene.table_center;
    let (hx, hy) = scene.table_half;
    let at = |i: usize, j: usize| {
        Vec3::new(
            tx - hx + 2.0 * hx * i as f64 / n as f64,
            ty - hy + 2.0 * hy * j as f64 / n as f64,
            table_z,
        )
    };
    for j in 0..n {
        for i in 0..n {
            let q = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let tex = scene.texture.as_ref().map(|t| (t, table_z));
            r.triangle([q[0], q[1], q[2]], surface::TABLE, scene.palette.table, tex);
            let tex = scene.texture.as_ref().map(|t| (t, table_z));
            r.triangle([q[0], q[2], q[3]], surface::TABLE, scene.palette.table, tex);
        }
    }

    if let Some(y) = sim.rigid.tape_y {
        let z = sim.rigid.table_height - TAPE_OFFSET;
        let (x0, x1) = (tx - hx, tx + hx);
        let q = [
            Vec3::new(x0, y - TAPE_HALF_WIDTH, z),
            Vec3::new(x1, y - TAPE_HALF_WIDTH, z),
            Vec3::new(x1, y + TAPE_HALF_WIDTH, z),
            Vec3::new(x0, y + TAPE_HALF_WIDTH, z),
        ];
        r.quad(q, surface::TAPE, scene.palette.tape);
    }

    if let Some(Hanger { center, half_extents }) = sim.rigid.hanger {
        r.cuboid(center, half_extents, surface::HANGER, scene.palette.hanger);
    }

    let cloth = &sim.cloth;
    let (nu, nv) = (cloth.params.nodes_u, cloth.params.nodes_v);
    for j in 0..nv - 1 {
        for i in 0..nu - 1 {
            let p = |a: usize, b: usize| cloth.positions[cloth.index(a, b)];
            r.quad([p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)], surface::CLOTH, scene.palette.cloth);
        }
    }

    let g = &sim.gripper;
    let along = 0.5 * g.fingertip_length;
    let half = match g.finger_axis {
        FingerAxis::X => Vec3::new(along, 0.006, 0.015),
        FingerAxis::Y => Vec3::new(0.006, along, 0.015),
    };
    r.cuboid(g.position + Vec3::new(0.0, 0.0, half.z + 0.002), half, surface::GRIPPER, scene.palette.gripper);

    Ok(Frame {
        width: w,
        height: h,
        rgb: r.rgb,
        ids: r.ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clothsim::{Aabb, ClothParams, ClothState, Gripper, RigidSet};

    fn sim() -> ClothSim {
        let cloth = ClothState::flat(ClothParams::default(), Vec3::new(0.4, 0.0, 0.0)).unwrap();
        ClothSim::new(
            cloth,
            Gripper::new(Vec3::new(0.4, 0.3, 0.3), FingerAxis::X),
            RigidSet::table(0.0, 0.8),
            Aabb {
                min: Vec3::new(0.0, -1.0, 0.005),
                max: Vec3::new(1.0, 1.0, 1.0),
            },
        )
    }

    fn palette() -> Palette {
        Palette {
            table: [0.5, 0.4, 0.3],
            cloth: [0.2, 0.4, 0.9],
            hanger: [0.3; 3],
            tape: [0.05; 3],
            gripper: [0.1; 3],
            background: [0.8, 0.85, 0.9],
        }
    }

    fn scene(sim: &ClothSim, camera: Camera) -> Scene<'_> {
        Scene {
            sim,
            camera,
            light: Light {
                position: Vec3::new(0.4, 0.0, 1.0),
                color: [1.0; 3],
                ambient: 0.3,
            },
            palette: palette(),
            texture: None,
            table_center: (0.4, 0.0),
            table_half: (0.5, 0.5),
        }
    }

    fn top_down(height: f64) -> Camera {
        Camera {
            position: Vec3::new(0.4, 0.0, height),
            target: Vec3::new(0.4, 0.0, 0.0),
            up: Vec3::new(1.0, 0.0, 0.0),
            focal: 70.0,
            width: 84,
            height: 84,
        }
    }

    #[test]
    fn looking_away_shows_background_only() {
        let s = sim();
        let cam = Camera {
            target: Vec3::new(0.4, 0.0, 2.0),
            ..top_down(0.6)
        };
        let f = render(&scene(&s, cam)).unwrap();
        assert_eq!(f.count(surface::BACKGROUND), 84 * 84);
        assert!(f.rgb.chunks(3).all(|p| p == [0.8, 0.85, 0.9]));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = sim();
        let field = PerlinField::new(5, 3, 0.5);
        let mut sc = scene(&s, top_down(0.6));
        sc.texture = Some(TableTexture {
            field: &field,
            scale: 10.0,
            amplitude: 0.3,
        });
        assert_eq!(render(&sc).unwrap(), render(&sc).unwrap());
    }

    #[test]
    fn zero_focal_is_rejected() {
        let s = sim();
        let cam = Camera { focal: 0.0, ..top_down(0.6) };
        assert!(matches!(render(&scene(&s, cam)), Err(Error::Parameter(_))));
    }

    #[test]
    fn cloth_footprint_matches_projected_square() {
        let s = sim();
        for height in [0.5, 0.6, 0.8] {
            let cam = top_down(height);
            let f = render(&scene(&s, cam)).unwrap();
            // Corners project to a screen square of side focal * size / depth;
            // pixel-centre coverage can differ from the exact area by at most
            // the boundary band (perimeter times one pixel).
            let side = cam.focal * 0.28 / height;
            let area = side * side;
            let band = 4.0 * side;
            let count = f.count(surface::CLOTH) as f64;
            assert!((count - area).abs() <= band, "h={height}: {count} vs {area}");
            assert!(count > 0.0);
        }
    }

    #[test]
    fn cloth_covers_table_and_shading_stays_in_range() {
        let s = sim();
        let cam = Camera {
            position: Vec3::new(1.0, 0.0, 0.6),
            target: Vec3::new(0.4, 0.0, 0.0),
            up: Vec3::new(0.0, 0.0, 1.0),
            focal: 72.0,
            width: 84,
            height: 84,
        };
        let f = render(&scene(&s, cam)).unwrap();
        assert!(f.count(surface::CLOTH) > 200);
        assert!(f.count(surface::TABLE) > 200);
        assert!(f.rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
