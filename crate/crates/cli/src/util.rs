//! Character tokens, charset files, and PGM encoding.

use std::collections::HashSet;
use std::path::Path;

use ceclcnn::glyph::{GlyphImage, GLYPH_SIZE};

use crate::CliError;

/// A character argument: either one literal character or `U+XXXX` hex
/// (the only way to name unprintable codepoints such as U+0000).
pub fn parse_char_token(tok: &str) -> Result<u32, CliError> {
    let mut chars = tok.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        return Ok(c as u32);
    }
    if let Some(hex) = tok.strip_prefix("U+").or_else(|| tok.strip_prefix("u+")) {
        if let Ok(cp) = u32::from_str_radix(hex, 16) {
            return Ok(cp);
        }
    }
    Err(CliError::msg(format!(
        "invalid character token {tok:?}: pass a single character or U+XXXX"
    )))
}

/// Charset file: one entry per line, each a character token as in
/// [`parse_char_token`]. Blank lines and `#` comment lines are skipped
/// (write `#` itself as U+0023). Duplicates keep the first occurrence.
pub fn read_charset(path: &Path) -> Result<Vec<u32>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::msg(format!("charset {}: {e}", path.display())))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cp = parse_char_token(line).map_err(|e| {
            CliError::msg(format!("charset {} line {}: {e}", path.display(), idx + 1))
        })?;
        if seen.insert(cp) {
            out.push(cp);
        }
    }
    if out.is_empty() {
        return Err(CliError::msg(format!("charset {} lists no characters", path.display())));
    }
    Ok(out)
}

/// The character itself when it is safe to print, otherwise `U+XXXX`.
pub fn display_char(cp: u32) -> String {
    match char::from_u32(cp) {
        Some(c) if !c.is_control() => c.to_string(),
        _ => format!("U+{cp:04X}"),
    }
}

/// Binary PGM (P5, maxval 255) of one glyph; 0 is black, ink is white.
pub fn glyph_to_pgm(img: &GlyphImage) -> Vec<u8> {
    let mut out = format!("P5\n{0} {0}\n255\n", GLYPH_SIZE).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_tokens() {
        assert_eq!(parse_char_token("A").unwrap(), 0x41);
        assert_eq!(parse_char_token("愛").unwrap(), 0x611B);
        assert_eq!(parse_char_token("U+0000").unwrap(), 0);
        assert_eq!(parse_char_token("u+e011").unwrap(), 0xE011);
        assert!(parse_char_token("AB").is_err());
        assert!(parse_char_token("U+XYZ").is_err());
        assert!(parse_char_token("").is_err());
    }

    #[test]
    fn charset_dedup_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chars.txt");
        std::fs::write(&path, "# header\nA\nU+0042\nA\n\nz\n").unwrap();
        assert_eq!(read_charset(&path).unwrap(), vec![0x41, 0x42, 0x7A]);
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(read_charset(&path).is_err());
    }

    #[test]
    fn display_forms() {
        assert_eq!(display_char(0x41), "A");
        assert_eq!(display_char(0x0), "U+0000");
        assert_eq!(display_char(0xD800), "U+D800");
    }

    #[test]
    fn pgm_layout() {
        let img = GlyphImage::zeros();
        let bytes = glyph_to_pgm(&img);
        assert!(bytes.starts_with(b"P5\n36 36\n255\n"));
        assert_eq!(bytes.len(), 13 + 36 * 36);
        assert!(bytes[13..].iter().all(|&b| b == 0), "U+0000 previews all black");
    }
}
