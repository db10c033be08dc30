//! Stochastic regularizers: random erasing on glyph images (input space)
//! and wildcard training on embedded sequences (feature space).

use rand::Rng;

use crate::autodiff::{ops, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::glyph::{GlyphImage, GLYPH_PIXELS, GLYPH_SIZE};

/// Random-erasing parameters. Area bounds are fractions of the whole
/// image; aspect is height/width of the erased rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomErasingConfig {
    /// Probability a given image is erased at all.
    pub p: f64,
    pub area_min: f64,
    pub area_max: f64,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl Default for RandomErasingConfig {
    fn default() -> Self {
        RandomErasingConfig { p: 0.3, area_min: 0.02, area_max: 0.4, aspect_min: 0.3, aspect_max: 2.0 }
    }
}

impl RandomErasingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!("erase probability {} outside [0,1]", self.p)));
        }
        if !(self.area_min > 0.0 && self.area_min <= self.area_max && self.area_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "erase area range [{}, {}] invalid",
                self.area_min, self.area_max
            )));
        }
        if !(self.aspect_min > 0.0 && self.aspect_min <= self.aspect_max) {
            return Err(Error::InvalidConfig(format!(
                "erase aspect range [{}, {}] invalid",
                self.aspect_min, self.aspect_max
            )));
        }
        Ok(())
    }
}

/// Rectangle erased by one fired draw, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErasedRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Random erasing over one 36x36 pixel buffer, in place. Returns the
/// erased rectangle, or None when the draw did not fire.
///
/// Draw order is fixed (fire, area, aspect, y, x, then one noise value
/// per erased pixel) so results are reproducible from the rng state
/// alone. All randomness is drawn in f64, so f32 and f64 buffers see
/// identical erase decisions. Dimensions are clamped before placement;
/// the op never rejects and never loops.
pub fn erase_in_place<T: Scalar, R: Rng>(
    pixels: &mut [T],
    cfg: &RandomErasingConfig,
    rng: &mut R,
) -> Option<ErasedRect> {
    debug_assert_eq!(pixels.len(), GLYPH_PIXELS);
    if rng.gen::<f64>() >= cfg.p {
        return None;
    }
    let area = GLYPH_PIXELS as f64 * sample_range(rng, cfg.area_min, cfg.area_max);
    let aspect = sample_range(rng, cfg.aspect_min, cfg.aspect_max);
    let h = ((area * aspect).sqrt().round() as usize).clamp(1, GLYPH_SIZE);
    let w = ((area / aspect).sqrt().round() as usize).clamp(1, GLYPH_SIZE);
    let y = rng.gen_range(0..=GLYPH_SIZE - h);
    let x = rng.gen_range(0..=GLYPH_SIZE - w);
    for row in y..y + h {
        for col in x..x + w {
            pixels[row * GLYPH_SIZE + col] = T::from_f64(rng.gen::<f64>());
        }
    }
    Some(ErasedRect { x, y, w, h })
}

/// gen_range panics when low == high; collapse that case explicitly.
fn sample_range<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        // still consume a draw so the stream shape is range-independent
        let _ = rng.gen::<f64>();
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Random erasing on a glyph image. The input is never mutated; with
/// probability `cfg.p` the copy gets one noise rectangle.
pub fn random_erase<R: Rng>(image: &GlyphImage, cfg: &RandomErasingConfig, rng: &mut R) -> GlyphImage {
    let mut pixels = image.pixels().to_vec();
    erase_in_place(&mut pixels, cfg, rng);
    GlyphImage::from_pixels(pixels).expect("erase preserves size and range")
}

/// Which units wildcard training zeroes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WildcardGranularity {
    /// Each scalar of the embedded sequence drops independently.
    #[default]
    PerElement,
    /// Whole character columns drop, modeling a missing character.
    PerCharacter,
}

/// Wildcard-training parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WildcardConfig {
    /// Drop ratio gamma_w.
    pub gamma_w: f64,
    pub granularity: WildcardGranularity,
    /// Scale survivors by 1/(1-gamma_w), inverted-dropout style. Off by
    /// default: a wildcard stands for a missing character, so surviving
    /// activations keep their magnitudes.
    pub rescale_survivors: bool,
}

impl Default for WildcardConfig {
    fn default() -> Self {
        WildcardConfig {
            gamma_w: 0.1,
            granularity: WildcardGranularity::PerElement,
            rescale_survivors: false,
        }
    }
}

impl WildcardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma_w) {
            return Err(Error::InvalidConfig(format!(
                "wildcard ratio {} outside [0,1)",
                self.gamma_w
            )));
        }
        Ok(())
    }
}

/// Wildcard training on an embedded document [1,d,1,D]. In training
/// mode, drops units with probability gamma_w (granularity decides
/// whether units are scalars or whole character columns); gradients
/// flow only through survivors. Outside training, or at gamma_w = 0,
/// the input passes through untouched.
pub fn wildcard<T: Scalar, R: Rng>(
    embeddings: &Tensor<T>,
    cfg: &WildcardConfig,
    rng: &mut R,
    training: bool,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    let shape = embeddings.shape();
    if shape.len() != 4 || shape[0] != 1 || shape[2] != 1 {
        return Err(Error::Shape {
            op: "wildcard",
            detail: format!("expected [1,d,1,D], got {shape:?}"),
        });
    }
    if !training || cfg.gamma_w == 0.0 {
        return Ok(embeddings.clone());
    }
    let keep = if cfg.rescale_survivors {
        T::from_f64(1.0 / (1.0 - cfg.gamma_w))
    } else {
        T::one()
    };
    let d = shape[1];
    let doc_len = shape[3];
    let mask = match cfg.granularity {
        WildcardGranularity::PerElement => (0..d * doc_len)
            .map(|_| if rng.gen::<f64>() < cfg.gamma_w { T::zero() } else { keep })
            .collect(),
        WildcardGranularity::PerCharacter => {
            // one draw per character position, broadcast down its column
            let col_keep: Vec<T> = (0..doc_len)
                .map(|_| if rng.gen::<f64>() < cfg.gamma_w { T::zero() } else { keep })
                .collect();
            let mut mask = Vec::with_capacity(d * doc_len);
            for _ in 0..d {
                mask.extend_from_slice(&col_keep);
            }
            mask
        }
    };
    ops::mask_mul(embeddings, mask)
}
