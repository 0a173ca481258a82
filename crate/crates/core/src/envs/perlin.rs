//! Seeded 2-D gradient noise with octave summation, used to texture surfaces.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math::{clamp, cos, floor, sin};
use crate::rng::seeded;

const SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PerlinField {
    perm: Vec<u8>,
    gradients: Vec<(f64, f64)>,
    pub octaves: u32,
    pub persistence: f64,
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn fade_derivative(t: f64) -> f64 {
    30.0 * t * t * (t * (t - 2.0) + 1.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl PerlinField {
    pub fn new(seed: u64, octaves: u32, persistence: f64) -> Self {
        let mut rng = seeded(seed, 0x9e11);
        let mut perm: Vec<u8> = (0..SIZE).map(|i| i as u8).collect();
        perm.shuffle(&mut rng);
        let gradients = (0..SIZE)
            .map(|_| {
                let a = rng.random::<f64>() * core::f64::consts::TAU;
                (cos(a), sin(a))
            })
            .collect();
        Self {
            perm,
            gradients,
            octaves: octaves.max(1),
            persistence,
        }
    }

    #[inline]
    fn gradient(&self, ix: i64, iy: i64) -> (f64, f64) {
        let x = (ix & 0xff) as usize;
        let y = (iy & 0xff) as usize;
        let h = self.perm[(self.perm[x] as usize + y) & 0xff];
        self.gradients[h as usize]
    }

    /// Single-octave noise. Zero on every integer lattice point.
    pub fn noise(&self, x: f64, y: f64) -> f64 {
        let fx = floor(x);
        let fy = floor(y);
        let (ix, iy) = (fx as i64, fy as i64);
        let (dx, dy) = (x - fx, y - fy);
        let dot = |gx: i64, gy: i64, ox: f64, oy: f64| {
            let g = self.gradient(gx, gy);
            g.0 * ox + g.1 * oy
        };
        let n00 = dot(ix, iy, dx, dy);
        let n10 = dot(ix + 1, iy, dx - 1.0, dy);
        let n01 = dot(ix, iy + 1, dx, dy - 1.0);
        let n11 = dot(ix + 1, iy + 1, dx - 1.0, dy - 1.0);
        let u = fade(dx);
        let v = fade(dy);
        lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
    }

    /// Octave sum normalized by total amplitude, in `[-1, 1]`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut amp = 1.0;
        let mut freq = 1.0;
        let mut sum = 0.0;
        let mut norm = 0.0;
        for _ in 0..self.octaves {
            sum += amp * self.noise(x * freq, y * freq);
            norm += amp;
            amp *= self.persistence;
            freq *= 2.0;
        }
        clamp(sum / norm, -1.0, 1.0)
    }

    /// A bound on `|d sample / dx|` and `|d sample / dy|`, used by continuity checks.
    pub fn lipschitz_bound(&self) -> f64 {
        // Each corner term is bounded by |g|·|offset| ≤ sqrt(2), its derivative by
        // 1 + sqrt(2) * max fade' (= 1.875); the octave sum scales by frequency.
        let per_octave = 4.0 * (1.0 + core::f64::consts::SQRT_2 * fade_derivative(0.5));
        let mut amp = 1.0;
        let mut freq = 1.0;
        let mut bound = 0.0;
        let mut norm = 0.0;
        for _ in 0..self.octaves {
            bound += amp * freq * per_octave;
            norm += amp;
            amp *= self.persistence;
            freq *= 2.0;
        }
        bound / norm
    }
}
