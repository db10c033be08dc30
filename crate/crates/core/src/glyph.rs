//! Codepoint to 36x36 grayscale image conversion.
//!
//! Two sources exist: a font-backed renderer for real corpora, and a
//! deterministic synthetic generator whose glyphs compose two "component"
//! halves (left and right), used by the tests that need ground-truth
//! shape structure. Both are pure: same codepoint, same pixels, always.

use std::collections::HashMap;
use std::sync::Mutex;

use ab_glyph::{Font, FontVec, GlyphId, PxScale};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Image edge length in pixels.
pub const GLYPH_SIZE: usize = 36;
/// Pixels per image.
pub const GLYPH_PIXELS: usize = GLYPH_SIZE * GLYPH_SIZE;
/// Reserved padding codepoint; always renders all-zeros.
pub const PAD_CODEPOINT: u32 = 0;

/// Row-major 36x36 grayscale image, intensity 1 = ink, 0 = background.
#[derive(Clone, PartialEq)]
pub struct GlyphImage {
    pixels: Vec<f32>,
}

impl GlyphImage {
    pub fn zeros() -> Self {
        GlyphImage { pixels: vec![0.0; GLYPH_PIXELS] }
    }

    /// Wrap a raw buffer; must be 1296 values in [0,1].
    pub fn from_pixels(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != GLYPH_PIXELS {
            return Err(Error::Shape {
                op: "GlyphImage::from_pixels",
                detail: format!("expected {} pixels, got {}", GLYPH_PIXELS, pixels.len()),
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape {
                op: "GlyphImage::from_pixels",
                detail: format!("pixel {} outside [0,1]", bad),
            });
        }
        Ok(GlyphImage { pixels })
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * GLYPH_SIZE + x]
    }

    /// Fraction of pixels strictly above `threshold`.
    pub fn ink_fraction(&self, threshold: f32) -> f32 {
        let n = self.pixels.iter().filter(|&&v| v > threshold).count();
        n as f32 / GLYPH_PIXELS as f32
    }
}

impl std::fmt::Debug for GlyphImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GlyphImage(ink {:.3})", self.ink_fraction(0.5))
    }
}

/// A rasterization backend: font file or synthetic component compositor.
pub enum GlyphSource {
    Font(FontSource),
    Synthetic(SyntheticSource),
}

impl GlyphSource {
    /// Render a codepoint. Never fails: U+0000 is all-zeros, codepoints the
    /// source cannot draw fall back to its notdef glyph.
    pub fn rasterize(&self, cp: u32) -> GlyphImage {
        if cp == PAD_CODEPOINT {
            return GlyphImage::zeros();
        }
        match self {
            GlyphSource::Font(f) => f.rasterize(cp),
            GlyphSource::Synthetic(s) => s.rasterize(cp),
        }
    }

    pub fn as_synthetic(&self) -> Option<&SyntheticSource> {
        match self {
            GlyphSource::Synthetic(s) => Some(s),
            GlyphSource::Font(_) => None,
        }
    }
}

/// Load an outline font (TTF/OTF) as a glyph source.
pub fn load_font(path: &std::path::Path) -> Result<GlyphSource> {
    let bytes = std::fs::read(path).map_err(|e| Error::FontLoad {
        path: path.display().to_string(),
        detail: format!("font not found or unreadable: {}", e),
    })?;
    let font = FontVec::try_from_vec(bytes).map_err(|e| Error::FontLoad {
        path: path.display().to_string(),
        detail: format!("unparseable font: {}", e),
    })?;
    Ok(GlyphSource::Font(FontSource::new(font)))
}

/// Font-backed rasterizer with a per-source memo cache.
pub struct FontSource {
    font: FontVec,
    scale: PxScale,
    cache: Mutex<HashMap<u32, GlyphImage>>,
}

// Ascender-to-descender span in pixels. 34 leaves >= 1px margin in the
// 36px cell for glyphs that stay inside the font's nominal line box.
const FONT_PX_HEIGHT: f32 = 34.0;

impl FontSource {
    fn new(font: FontVec) -> Self {
        FontSource {
            font,
            scale: PxScale::from(FONT_PX_HEIGHT),
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn rasterize(&self, cp: u32) -> GlyphImage {
        if let Some(hit) = self.cache.lock().unwrap().get(&cp) {
            return hit.clone();
        }
        let img = self.render(cp);
        self.cache.lock().unwrap().insert(cp, img.clone());
        img
    }

    fn render(&self, cp: u32) -> GlyphImage {
        // Missing codepoints (and non-scalar values) use glyph 0, the
        // font's notdef. cmap lookups already return 0 for absent chars.
        let gid = match char::from_u32(cp) {
            Some(c) => self.font.glyph_id(c),
            None => GlyphId(0),
        };
        let glyph = gid.with_scale_and_position(self.scale, ab_glyph::point(0.0, 0.0));
        let mut pixels = vec![0.0f32; GLYPH_PIXELS];
        if let Some(outlined) = self.font.outline_glyph(glyph) {
            // Center the outline bounding box in the cell: translation
            // only, so relative glyph sizes within the font are preserved.
            let b = outlined.px_bounds();
            let w = b.width() as i32;
            let h = b.height() as i32;
            let ox = (GLYPH_SIZE as i32 - w) / 2;
            let oy = (GLYPH_SIZE as i32 - h) / 2;
            outlined.draw(|x, y, c| {
                let tx = x as i32 + ox;
                let ty = y as i32 + oy;
                if (0..GLYPH_SIZE as i32).contains(&tx) && (0..GLYPH_SIZE as i32).contains(&ty) {
                    pixels[ty as usize * GLYPH_SIZE + tx as usize] = c.clamp(0.0, 1.0);
                }
            });
        }
        // blank images stay blank (e.g. space has no outline)
        GlyphImage { pixels }
    }
}

/// Parameters of the synthetic glyph family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticGlyphSpec {
    /// Number of distinct component drawings; each glyph is an ordered
    /// (left, right) pair of them.
    pub component_count: u32,
    /// Seeds the stroke library; same seed, same components, always.
    pub stroke_library_seed: u64,
}

/// First codepoint of the synthetic block (private use area).
pub const SYNTHETIC_BASE: u32 = 0xE000;
// The BMP private use area holds 6400 codepoints, so component_count^2
// must not exceed 6400.
const SYNTHETIC_MAX_COMPONENTS: u32 = 80;

const HALF_W: usize = GLYPH_SIZE / 2;

/// Procedural glyphs: codepoint SYNTHETIC_BASE + left*count + right is the
/// composition of component `left` (columns 0-17) and `right` (18-35).
pub struct SyntheticSource {
    spec: SyntheticGlyphSpec,
    components: Vec<Vec<f32>>, // each HALF_W x GLYPH_SIZE, row-major
}

impl SyntheticSource {
    pub fn new(spec: SyntheticGlyphSpec) -> Result<Self> {
        if spec.component_count < 2 || spec.component_count > SYNTHETIC_MAX_COMPONENTS {
            return Err(Error::InvalidConfig(format!(
                "component_count {} outside [2, {}]",
                spec.component_count, SYNTHETIC_MAX_COMPONENTS
            )));
        }
        let components = (0..spec.component_count)
            .map(|id| render_component(seed::mix(spec.stroke_library_seed, id as u64)))
            .collect();
        Ok(SyntheticSource { spec, components })
    }

    pub fn spec(&self) -> SyntheticGlyphSpec {
        self.spec
    }

    /// Codepoint encoding the ordered component pair.
    pub fn codepoint(&self, left: u32, right: u32) -> Result<u32> {
        let count = self.spec.component_count;
        for id in [left, right] {
            if id >= count {
                return Err(Error::ComponentOutOfRange { component: id, count });
            }
        }
        Ok(SYNTHETIC_BASE + left * count + right)
    }

    /// Inverse of `codepoint`; None for codepoints outside the block.
    pub fn components_of(&self, cp: u32) -> Option<(u32, u32)> {
        let count = self.spec.component_count;
        let end = SYNTHETIC_BASE + count * count;
        if (SYNTHETIC_BASE..end).contains(&cp) {
            let off = cp - SYNTHETIC_BASE;
            Some((off / count, off % count))
        } else {
            None
        }
    }

    /// Compose the glyph for an explicit component pair.
    pub fn synthetic_glyph(&self, left: u32, right: u32) -> Result<GlyphImage> {
        self.codepoint(left, right)?;
        Ok(self.compose(left as usize, right as usize))
    }

    fn compose(&self, left: usize, right: usize) -> GlyphImage {
        let mut pixels = vec![0.0f32; GLYPH_PIXELS];
        let (lc, rc) = (&self.components[left], &self.components[right]);
        for y in 0..GLYPH_SIZE {
            pixels[y * GLYPH_SIZE..][..HALF_W].copy_from_slice(&lc[y * HALF_W..][..HALF_W]);
            pixels[y * GLYPH_SIZE + HALF_W..][..HALF_W].copy_from_slice(&rc[y * HALF_W..][..HALF_W]);
        }
        GlyphImage { pixels }
    }

    fn rasterize(&self, cp: u32) -> GlyphImage {
        match self.components_of(cp) {
            Some((l, r)) => self.compose(l as usize, r as usize),
            None => notdef_box(),
        }
    }
}

/// Hollow rectangle standing in for unknown codepoints.
fn notdef_box() -> GlyphImage {
    let mut pixels = vec![0.0f32; GLYPH_PIXELS];
    let (lo, hi) = (6usize, GLYPH_SIZE - 7);
    for v in lo..=hi {
        for t in 0..2 {
            pixels[(lo + t) * GLYPH_SIZE + v] = 1.0;
            pixels[(hi - t) * GLYPH_SIZE + v] = 1.0;
            pixels[v * GLYPH_SIZE + lo + t] = 1.0;
            pixels[v * GLYPH_SIZE + hi - t] = 1.0;
        }
    }
    GlyphImage { pixels }
}

/// Draw 3-4 thick anti-aliased strokes into an 18x36 half-cell.
/// Coverage = clamp(radius + 0.5 - distance_to_segment), combined by max.
fn render_component(component_seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(component_seed);
    let n_strokes = rng.gen_range(3..=4usize);
    let mut strokes = Vec::with_capacity(n_strokes);
    for _ in 0..n_strokes {
        let x0 = rng.gen_range(1.5..HALF_W as f32 - 1.5);
        let y0 = rng.gen_range(2.0..GLYPH_SIZE as f32 - 2.0);
        let x1 = rng.gen_range(1.5..HALF_W as f32 - 1.5);
        let y1 = rng.gen_range(2.0..GLYPH_SIZE as f32 - 2.0);
        let radius = rng.gen_range(1.0..2.2f32);
        strokes.push((x0, y0, x1, y1, radius));
    }
    let mut pixels = vec![0.0f32; HALF_W * GLYPH_SIZE];
    for y in 0..GLYPH_SIZE {
        for x in 0..HALF_W {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let mut v = 0.0f32;
            for &(x0, y0, x1, y1, r) in &strokes {
                let d = dist_to_segment(px, py, x0, y0, x1, y1);
                v = v.max((r + 0.5 - d).clamp(0.0, 1.0));
            }
            pixels[y * HALF_W + x] = v;
        }
    }
    pixels
}

fn dist_to_segment(px: f32, py: f32, x0: f32, y0: f32, x1: f32, y1: f32) -> f32 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt()
}
