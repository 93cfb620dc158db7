//! Deterministic color-histogram encoder used for tests and demos.
//!
//! Images become an 8-bin hue histogram; the eight color words map onto the
//! matching hue bins, so a solid red image and the word "red" coincide.

use crate::embedding::{EncodeError, EncoderBackend};

pub const TOY_DIM: usize = 16;
pub const TOY_NAME: &str = "toy";

/// Hue bin names with their canonical hue in degrees.
pub const HUE_BINS: [(&str, f32); 8] = [
    ("red", 0.0),
    ("orange", 30.0),
    ("yellow", 60.0),
    ("green", 120.0),
    ("cyan", 180.0),
    ("blue", 240.0),
    ("purple", 270.0),
    ("magenta", 300.0),
];

/// Slot for pixels without hue (black, white, grays). The remaining slots
/// stay zero.
pub const ACHROMATIC_BIN: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyEncoder;

impl ToyEncoder {
    pub fn new() -> Self {
        ToyEncoder
    }
}

/// Index of the hue bin whose canonical hue is circularly nearest to `hue`.
/// Exact midpoints go to the earlier bin.
pub fn hue_bin(hue: f32) -> usize {
    let mut best = 0;
    let mut best_dist = f32::INFINITY;
    for (i, &(_, center)) in HUE_BINS.iter().enumerate() {
        let d = (hue - center).rem_euclid(360.0);
        let d = d.min(360.0 - d);
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

/// HSV hue in degrees, or `None` for achromatic pixels.
pub fn hue_of(r: u8, g: u8, b: u8) -> Option<f32> {
    let (r, g, b) = (f32::from(r), f32::from(g), f32::from(b));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if chroma == 0.0 {
        return None;
    }
    let h = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    Some(h * 60.0)
}

fn color_word(word: &str) -> Option<usize> {
    HUE_BINS
        .iter()
        .position(|(name, _)| word.eq_ignore_ascii_case(name))
}

impl EncoderBackend for ToyEncoder {
    fn name(&self) -> &str {
        TOY_NAME
    }

    fn dimensionality(&self) -> usize {
        TOY_DIM
    }

    fn encode_image(&self, bytes: &[u8]) -> Result<Vec<f32>, EncodeError> {
        let img = image::load_from_memory(bytes).map_err(|e| EncodeError::Input(e.to_string()))?;
        let rgb = img.to_rgb8();
        let mut counts = [0u64; TOY_DIM];
        for p in rgb.pixels() {
            let [r, g, b] = p.0;
            match hue_of(r, g, b) {
                Some(h) => counts[hue_bin(h)] += 1,
                None => counts[ACHROMATIC_BIN] += 1,
            }
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(EncodeError::Input("image has no pixels".into()));
        }
        Ok(counts.iter().map(|&c| c as f32).collect())
    }

    /// Text containing color words (whole words, ASCII case-insensitive)
    /// encodes to the sum of their hue-bin basis vectors, so templated prompts
    /// such as "a photo of red" still land on the red bin. Any other text
    /// encodes to its UTF-8 byte histogram folded into 16 bins.
    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncodeError> {
        if text.is_empty() {
            return Err(EncodeError::Input("empty text".into()));
        }
        let mut v = vec![0f32; TOY_DIM];
        let mut any_color = false;
        for word in text.split(|c: char| !c.is_alphanumeric()) {
            if let Some(bin) = color_word(word) {
                v[bin] += 1.0;
                any_color = true;
            }
        }
        if !any_color {
            for b in text.bytes() {
                v[usize::from(b) % TOY_DIM] += 1.0;
            }
        }
        Ok(v)
    }
}
