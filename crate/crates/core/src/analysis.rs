//! Trained-encoder introspection: charset embeddings, nearest-neighbor
//! tables, and CSV export for external 2-D projection.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::glyph::{GlyphSource, GLYPH_PIXELS, GLYPH_SIZE};
use crate::model::CeClcnn;

/// Per-character embeddings: one row per codepoint, in insertion order.
///
/// Rows produced by [`embed_charset`] are nonnegative (the encoder ends in
/// a ReLU), but the type itself accepts arbitrary values so matrices can be
/// re-imported or constructed directly in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    codepoints: Vec<u32>,
    dim: usize,
    // row-major, codepoints.len() * dim
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(codepoints: Vec<u32>, dim: usize, values: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        if values.len() != codepoints.len() * dim {
            return Err(Error::InvalidConfig(format!(
                "embedding matrix: {} codepoints x dim {} needs {} values, got {}",
                codepoints.len(),
                dim,
                codepoints.len() * dim,
                values.len()
            )));
        }
        Ok(EmbeddingMatrix { codepoints, dim, values })
    }

    pub fn len(&self) -> usize {
        self.codepoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codepoints.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codepoints(&self) -> &[u32] {
        &self.codepoints
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the first row holding `cp`.
    pub fn position(&self, cp: u32) -> Option<usize> {
        self.codepoints.iter().position(|&c| c == cp)
    }
}

/// Euclidean distance between two rows, accumulated in f64 so that the
/// neighbor ordering is identical for f32 and f64 matrices.
fn row_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = Scalar::to_f64(x) - Scalar::to_f64(y);
        acc += d * d;
    }
    acc.sqrt()
}

/// Run the character encoder over `codepoints` and collect one embedding
/// row per input, in the given order. Deterministic; duplicates produce
/// identical rows. Inference only: nothing is recorded for backprop.
pub fn embed_charset<T: Scalar>(
    model: &CeClcnn<T>,
    codepoints: &[u32],
    source: &GlyphSource,
) -> Result<EmbeddingMatrix<T>> {
    let frozen = model.frozen();
    let dim = frozen.config.d_ce;
    let chunk = frozen.config.chunk.max(1);
    let mut values = Vec::with_capacity(codepoints.len() * dim);
    for group in codepoints.chunks(chunk) {
        let mut pixels = Vec::with_capacity(group.len() * GLYPH_PIXELS);
        for &cp in group {
            let img = source.rasterize(cp);
            pixels.extend(img.pixels().iter().map(|&v| T::from_f64(v as f64)));
        }
        let images =
            Tensor::constant(&[group.len(), 1, GLYPH_SIZE, GLYPH_SIZE], pixels)?;
        let rows = frozen.ce_forward(&images)?;
        values.extend_from_slice(&rows.data());
    }
    EmbeddingMatrix::new(codepoints.to_vec(), dim, values)
}

/// The `k` rows closest to `query` by Euclidean distance, ascending, with
/// the query's own row excluded. Ties break toward the smaller codepoint.
pub fn nearest_neighbors<T: Scalar>(
    matrix: &EmbeddingMatrix<T>,
    query: u32,
    k: usize,
) -> Result<Vec<(u32, f64)>> {
    let qi = matrix.position(query).ok_or(Error::QueryNotFound(query))?;
    let rows = matrix.len();
    if k >= rows {
        return Err(Error::BadNeighborCount { k, rows, available: rows - 1 });
    }
    let qrow = matrix.row(qi);
    let mut scored: Vec<(u32, f64)> = (0..rows)
        .filter(|&i| i != qi)
        .map(|i| (matrix.codepoints[i], row_distance(qrow, matrix.row(i))))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Write the matrix as CSV: header `codepoint_hex,v0,...`, then one row per
/// codepoint. Values use the shortest representation that parses back to
/// the identical float, so [`import_embeddings`] is an exact inverse.
pub fn export_embeddings<T: Scalar>(matrix: &EmbeddingMatrix<T>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "codepoint_hex")?;
    for j in 0..matrix.dim {
        write!(out, ",v{j}")?;
    }
    writeln!(out)?;
    for i in 0..matrix.len() {
        write!(out, "{:X}", matrix.codepoints[i])?;
        for &v in matrix.row(i) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a CSV produced by [`export_embeddings`].
pub fn import_embeddings<T: Scalar>(path: &Path) -> Result<EmbeddingMatrix<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or(Error::Parse {
        line: 1,
        detail: "empty embedding CSV".into(),
    })?;
    let mut cols = header.split(',');
    if cols.next() != Some("codepoint_hex") {
        return Err(Error::Parse {
            line: 1,
            detail: "expected header starting with codepoint_hex".into(),
        });
    }
    let dim = cols.count();
    if dim == 0 {
        return Err(Error::Parse { line: 1, detail: "header has no value columns".into() });
    }
    let mut codepoints = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let cp_field = fields.next().unwrap();
        let cp = u32::from_str_radix(cp_field, 16).map_err(|e| Error::Parse {
            line: lineno,
            detail: format!("bad codepoint {cp_field:?}: {e}"),
        })?;
        let before = values.len();
        for field in fields {
            let v: f64 = field.parse().map_err(|e| Error::Parse {
                line: lineno,
                detail: format!("bad value {field:?}: {e}"),
            })?;
            values.push(T::from_f64(v));
        }
        if values.len() - before != dim {
            return Err(Error::Parse {
                line: lineno,
                detail: format!("expected {dim} values, got {}", values.len() - before),
            });
        }
        codepoints.push(cp);
    }
    EmbeddingMatrix::new(codepoints, dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::SyntheticGlyphSpec;
    use crate::model::{init_params, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> CeClcnn<f32> {
        let config = ModelConfig { d_ce: 8, chunk: 3, doc_len: 45, num_classes: 2 };
        init_params(config, 7).unwrap()
    }

    fn synthetic_source() -> GlyphSource {
        GlyphSource::Synthetic(
            crate::glyph::SyntheticSource::new(SyntheticGlyphSpec {
                component_count: 6,
                stroke_library_seed: 11,
            })
            .unwrap(),
        )
    }

    fn random_matrix(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codepoints: Vec<u32> = (0..rows as u32).map(|i| 0x4E00 + i).collect();
        let values: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        EmbeddingMatrix::new(codepoints, dim, values).unwrap()
    }

    #[test]
    fn embed_charset_rows_match_input_order_and_duplicates() {
        let model = small_model();
        let source = synthetic_source();
        let src = match &source {
            GlyphSource::Synthetic(s) => s,
            _ => unreachable!(),
        };
        let a = src.codepoint(0, 1).unwrap();
        let b = src.codepoint(2, 3).unwrap();
        let cps = [a, b, a];
        let m = embed_charset(&model, &cps, &source).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.dim(), 8);
        assert_eq!(m.codepoints(), &cps);
        assert_eq!(m.row(0), m.row(2), "duplicate codepoint must embed identically");
        assert_ne!(m.row(0), m.row(1));
        assert!(m.row(0).iter().chain(m.row(1)).all(|&v| v >= 0.0), "encoder ends in ReLU");
        let again = embed_charset(&model, &cps, &source).unwrap();
        assert_eq!(m, again, "embedding extraction is deterministic");
    }

    #[test]
    fn embed_charset_agrees_across_chunk_sizes() {
        let source = synthetic_source();
        let src = match &source {
            GlyphSource::Synthetic(s) => s,
            _ => unreachable!(),
        };
        let cps: Vec<u32> = (0..5)
            .map(|i| src.codepoint(i % 6, (i + 1) % 6).unwrap())
            .collect();
        let mut narrow = small_model();
        narrow.config.chunk = 1;
        let mut wide = init_params(narrow.config, 7).unwrap();
        wide.config.chunk = 64;
        let a = embed_charset(&narrow, &cps, &source).unwrap();
        let b = embed_charset(&wide, &cps, &source).unwrap();
        for i in 0..cps.len() {
            for (x, y) in a.row(i).iter().zip(b.row(i)) {
                assert!((x - y).abs() <= 1e-5, "chunking is pure batching");
            }
        }
    }

    #[test]
    fn identical_rows_give_zero_distance_neighbor() {
        let values = vec![1.0f64, 2.0, 1.0, 2.0, 5.0, 9.0];
        let m = EmbeddingMatrix::new(vec![0x61, 0x62, 0x63], 2, values).unwrap();
        let got = nearest_neighbors(&m, 0x61, 2).unwrap();
        assert_eq!(got[0].0, 0x62);
        assert_eq!(got[0].1, 0.0);
        assert!(got[1].1 > 0.0);
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_matrix() {
        let m = random_matrix(200, 16, 3);
        // Pairwise oracle: symmetry and zero diagonal.
        for i in (0..m.len()).step_by(17) {
            for j in (0..m.len()).step_by(13) {
                let dij = row_distance(m.row(i), m.row(j));
                let dji = row_distance(m.row(j), m.row(i));
                assert_eq!(dij, dji);
                if i == j {
                    assert_eq!(dij, 0.0);
                }
            }
        }
        for &qi in &[0usize, 57, 199] {
            let query = m.codepoints()[qi];
            for &k in &[1usize, 5, 199] {
                let got = nearest_neighbors(&m, query, k).unwrap();
                // Brute force: score every other row, sort, truncate.
                let mut oracle: Vec<(u32, f64)> = (0..m.len())
                    .filter(|&i| i != qi)
                    .map(|i| (m.codepoints()[i], row_distance(m.row(qi), m.row(i))))
                    .collect();
                oracle.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                oracle.truncate(k);
                assert_eq!(got, oracle);
                for pair in got.windows(2) {
                    assert!(pair[0].1 <= pair[1].1, "distances non-decreasing");
                }
            }
        }
    }

    #[test]
    fn ties_break_toward_smaller_codepoint() {
        // Two candidates at identical distance; query stored last so the
        // result order cannot come from insertion order alone.
        let m =
            EmbeddingMatrix::new(vec![0x31, 0x30, 0x9999], 1, vec![3.0f64, 3.0, 0.0]).unwrap();
        let got = nearest_neighbors(&m, 0x9999, 2).unwrap();
        assert_eq!(got, vec![(0x30, 3.0), (0x31, 3.0)]);
    }

    #[test]
    fn query_and_count_errors() {
        let m = random_matrix(4, 3, 9);
        match nearest_neighbors(&m, 0xFFFF, 1) {
            Err(Error::QueryNotFound(cp)) => assert_eq!(cp, 0xFFFF),
            other => panic!("expected QueryNotFound, got {other:?}"),
        }
        let query = m.codepoints()[0];
        assert!(nearest_neighbors(&m, query, 3).is_ok(), "k = rows-1 is the maximum");
        match nearest_neighbors(&m, query, 4) {
            Err(Error::BadNeighborCount { k, rows, available }) => {
                assert_eq!((k, rows, available), (4, 4, 3));
            }
            other => panic!("expected BadNeighborCount, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");

        // Awkward values: negatives, tiny magnitudes, exact zero.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut values: Vec<f32> = (0..6 * 7).map(|_| rng.gen_range(-2.0..2.0)).collect();
        values[0] = 0.0;
        values[1] = 1e-30;
        values[2] = -0.1;
        let m = EmbeddingMatrix::new((0x100..0x106).collect(), 7, values).unwrap();
        export_embeddings(&m, &path).unwrap();
        let back: EmbeddingMatrix<f32> = import_embeddings(&path).unwrap();
        assert_eq!(m, back);

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 8, "one name column plus dim value columns");
        assert_eq!(header.split(',').next(), Some("codepoint_hex"));
        assert_eq!(text.lines().count(), 7, "header plus one row per codepoint");
    }

    #[test]
    fn csv_header_has_129_columns_at_default_width() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb128.csv");
        let m = EmbeddingMatrix::<f32>::new(vec![0x41], 128, vec![0.5; 128]).unwrap();
        export_embeddings(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 129);
    }

    #[test]
    fn import_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "wrong,v0\n41,1.0\n").unwrap();
        assert!(matches!(
            import_embeddings::<f32>(&path),
            Err(Error::Parse { line: 1, .. })
        ));

        std::fs::write(&path, "codepoint_hex,v0,v1\n41,1.0\n").unwrap();
        assert!(matches!(
            import_embeddings::<f32>(&path),
            Err(Error::Parse { line: 2, .. })
        ));

        std::fs::write(&path, "codepoint_hex,v0\nZZ,1.0\n").unwrap();
        assert!(matches!(
            import_embeddings::<f32>(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
