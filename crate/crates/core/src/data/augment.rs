//! Geometric and photometric augmentation of 120×120 crops.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{DataError, Error, Result};
use crate::model::{CHANNELS, FRAME_SIZE};
use crate::tensor::Tensor;

pub const MAX_ROTATION_DEG: f32 = 10.0;
pub const BRIGHTNESS_RANGE: (f32, f32) = (0.8, 1.2);
pub const CROP_SIZE: usize = 108;

/// One augmentation: crop and resize, rotate, flip, then scale brightness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recipe {
    pub flip: bool,
    /// Degrees, counter-clockwise.
    pub rotation: f32,
    pub brightness: f32,
    /// Top-left corner `(y, x)` of a [`CROP_SIZE`] window.
    pub crop: Option<(usize, usize)>,
}

impl Default for Recipe {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Recipe {
    pub const IDENTITY: Recipe = Recipe { flip: false, rotation: 0.0, brightness: 1.0, crop: None };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let flip = rng.gen_bool(0.5);
        let rotation = rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let brightness = rng.gen_range(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1);
        let span = FRAME_SIZE - CROP_SIZE;
        let crop = rng.gen_bool(0.5).then(|| (rng.gen_range(0..=span), rng.gen_range(0..=span)));
        Self { flip, rotation, brightness, crop }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.rotation.abs() <= MAX_ROTATION_DEG) {
            return Err(format!("rotation {} outside ±{MAX_ROTATION_DEG}", self.rotation));
        }
        if !(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1).contains(&self.brightness) {
            return Err(format!("brightness {} outside {:?}", self.brightness, BRIGHTNESS_RANGE));
        }
        if let Some((y, x)) = self.crop {
            if y.max(x) > FRAME_SIZE - CROP_SIZE {
                return Err(format!("crop offset {y}:{x} leaves the frame"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "flip={};rot={};bright={};crop=", self.flip as u8, self.rotation, self.brightness)?;
        match self.crop {
            Some((y, x)) => write!(f, "{y}:{x}"),
            None => f.write_str("none"),
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::from(DataError::Recipe(s.to_string()));
        let mut recipe = Recipe::IDENTITY;
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key {
                "flip" => recipe.flip = matches!(value, "1" | "true"),
                "rot" => recipe.rotation = value.parse().map_err(|_| bad())?,
                "bright" => recipe.brightness = value.parse().map_err(|_| bad())?,
                "crop" if value == "none" => recipe.crop = None,
                "crop" => {
                    let (y, x) = value.split_once(':').ok_or_else(bad)?;
                    recipe.crop = Some((y.parse().map_err(|_| bad())?, x.parse().map_err(|_| bad())?));
                }
                _ => return Err(bad()),
            }
        }
        recipe.check().map_err(|_| bad())?;
        Ok(recipe)
    }
}

/// Bilinear lookup with coordinates clamped to the image edge.
fn bilinear(src: &[f32], side: usize, y: f32, x: f32, c: usize) -> f32 {
    let max = (side - 1) as f32;
    let (y, x) = (y.clamp(0.0, max), x.clamp(0.0, max));
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(side - 1), (x0 + 1).min(side - 1));
    let (fy, fx) = (y - y0 as f32, x - x0 as f32);
    let at = |yy: usize, xx: usize| src[(yy * side + xx) * CHANNELS + c];
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn resample(src: &[f32], mut coord: impl FnMut(usize, usize) -> (f32, f32)) -> Vec<f32> {
    let mut out = vec![0.0; src.len()];
    for y in 0..FRAME_SIZE {
        for x in 0..FRAME_SIZE {
            let (sy, sx) = coord(y, x);
            for c in 0..CHANNELS {
                out[(y * FRAME_SIZE + x) * CHANNELS + c] = bilinear(src, FRAME_SIZE, sy, sx, c);
            }
        }
    }
    out
}

/// Apply `recipe` to a `[120,120,3]` image with values in [0,1].
pub fn augment(image: &Tensor, recipe: &Recipe) -> Result<Tensor> {
    let expected = [FRAME_SIZE, FRAME_SIZE, CHANNELS];
    if image.shape() != expected {
        return Err(Error::Invalid(format!("augment expects {expected:?}, got {:?}", image.shape())));
    }
    recipe.check().map_err(Error::Invalid)?;
    let mut data = image.data().to_vec();
    if let Some((oy, ox)) = recipe.crop {
        let scale = (CROP_SIZE - 1) as f32 / (FRAME_SIZE - 1) as f32;
        data = resample(&data, |y, x| (oy as f32 + y as f32 * scale, ox as f32 + x as f32 * scale));
    }
    if recipe.rotation != 0.0 {
        let (sin, cos) = recipe.rotation.to_radians().sin_cos();
        let center = (FRAME_SIZE - 1) as f32 / 2.0;
        // Inverse map: rotate each output coordinate back onto the source.
        data = resample(&data, |y, x| {
            let (dy, dx) = (y as f32 - center, x as f32 - center);
            (center + cos * dy + sin * dx, center - sin * dy + cos * dx)
        });
    }
    if recipe.flip {
        for row in data.chunks_mut(FRAME_SIZE * CHANNELS) {
            for x in 0..FRAME_SIZE / 2 {
                for c in 0..CHANNELS {
                    row.swap(x * CHANNELS + c, (FRAME_SIZE - 1 - x) * CHANNELS + c);
                }
            }
        }
    }
    if recipe.brightness != 1.0 {
        data.iter_mut().for_each(|v| *v *= recipe.brightness);
    }
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Tensor::new(&expected, data).map_err(Into::into)
}
