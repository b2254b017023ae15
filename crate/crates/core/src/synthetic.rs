//! Seeded procedural textures and translating test sequences.
//!
//! Textures are sums of random plane waves, so they can be evaluated at any
//! real coordinate and translated by arbitrary amounts without resampling
//! error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frame::{FlowField, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub components: usize,
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    /// Mean intensity.
    pub mean: f64,
    /// Peak-to-peak intensity range.
    pub contrast: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        TextureParams {
            components: 32,
            min_wavelength: 6.0,
            max_wavelength: 40.0,
            mean: 0.5,
            contrast: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<Wave>,
    norm: f64,
    mean: f64,
    contrast: f64,
}

impl Texture {
    pub fn random(seed: u64, params: &TextureParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<Wave> = (0..params.components.max(1))
            .map(|_| {
                let wavelength = rng.gen_range(params.min_wavelength..=params.max_wavelength);
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                Wave {
                    kx: k * theta.cos(),
                    ky: k * theta.sin(),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    amplitude: rng.gen_range(0.5..1.0),
                }
            })
            .collect();
        let norm = waves.iter().map(|w| w.amplitude).sum::<f64>();
        Texture {
            waves,
            // sums of many random-phase waves rarely approach the bound
            norm: norm / 3.0,
            mean: params.mean,
            contrast: params.contrast,
        }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin())
            .sum();
        (self.mean + 0.5 * self.contrast * s / self.norm).clamp(0.0, 1.0)
    }

    /// Renders the texture displaced by `(dx, dy)`: `out(x) = T(x - d)`.
    pub fn render(&self, width: usize, height: usize, dx: f64, dy: f64) -> Result<Frame> {
        Frame::from_fn(width, height, |x, y| self.sample(x as f64 - dx, y as f64 - dy) as f32)
    }
}

/// `frames` renders of `texture` moving by `velocity` pixels per frame.
pub fn translating_sequence(
    texture: &Texture,
    width: usize,
    height: usize,
    frames: usize,
    velocity: (f64, f64),
) -> Result<Vec<Frame>> {
    (0..frames)
        .map(|k| texture.render(width, height, k as f64 * velocity.0, k as f64 * velocity.1))
        .collect()
}

/// Flow aligning the frame at `offset` onto the centre of a sequence made by
/// [`translating_sequence`], i.e. `I_{i+offset}(x + f) = I_i(x)`.
pub fn translation_flow(width: usize, height: usize, offset: isize, velocity: (f64, f64)) -> FlowField {
    FlowField::constant(
        width,
        height,
        (offset as f64 * velocity.0) as f32,
        (offset as f64 * velocity.1) as f32,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let p = TextureParams::default();
        let a = Texture::random(7, &p).render(32, 16, 0.0, 0.0).unwrap();
        let b = Texture::random(7, &p).render(32, 16, 0.0, 0.0).unwrap();
        assert_eq!(a, b);
        let c = Texture::random(8, &p).render(32, 16, 0.0, 0.0).unwrap();
        assert_ne!(a, c);
        let lo = a.data().iter().cloned().fold(1.0, f32::min);
        let hi = a.data().iter().cloned().fold(0.0, f32::max);
        assert!(hi - lo > 0.3, "texture too flat: [{lo}, {hi}]");
    }

    #[test]
    fn translation_matches_flow_convention() {
        let t = Texture::random(1, &TextureParams::default());
        let seq = translating_sequence(&t, 20, 10, 3, (2.0, 1.0)).unwrap();
        let f = translation_flow(20, 10, 1, (2.0, 1.0));
        let (u, v) = f.at(0, 0);
        // I_1(x + f) == I_0(x)
        for y in 0..8 {
            for x in 0..17 {
                let a = seq[0].get(x, y, 0);
                let b = seq[1].get(x + u as usize, y + v as usize, 0);
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
