//! Corpus ingestion, fixed-length normalization, splitting, batching,
//! and a synthetic compositional dataset for desk-scale validation.

use std::collections::HashMap;
use std::io::Write as _;
use std::marker::PhantomData;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::glyph::{
    GlyphSource, SyntheticGlyphSpec, SyntheticSource, GLYPH_PIXELS, GLYPH_SIZE, PAD_CODEPOINT,
};
use crate::seed;

/// One document: its characters and its class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDocument {
    pub codepoints: Vec<u32>,
    pub label: usize,
}

/// A labeled corpus. `class_names[label]` names each document's class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub documents: Vec<LabeledDocument>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// How an epoch is cut into optimizer steps. B counts documents per
/// step; the loss is per-document, so that is the natural unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub drop_last: bool,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec { batch_size: 256, shuffle_seed: 0, drop_last: false }
    }
}

/// Load a `label<TAB>text` corpus. Label indices follow first
/// appearance, recorded in class_names. Empty lines are skipped.
pub fn load_tsv(path: &Path) -> Result<Dataset> {
    let raw = std::fs::read_to_string(path)?;
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut documents = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let (label_str, text) = line.split_once('\t').ok_or(Error::Parse {
            line: line_no,
            detail: "no tab separator".into(),
        })?;
        if label_str.is_empty() {
            return Err(Error::Parse { line: line_no, detail: "empty label".into() });
        }
        if text.is_empty() {
            return Err(Error::Parse { line: line_no, detail: "empty document text".into() });
        }
        let label = *class_index.entry(label_str.to_string()).or_insert_with(|| {
            class_names.push(label_str.to_string());
            class_names.len() - 1
        });
        documents.push(LabeledDocument {
            codepoints: text.chars().map(|c| c as u32).collect(),
            label,
        });
    }
    if documents.is_empty() {
        return Err(Error::EmptyDataset(format!("no records in {}", path.display())));
    }
    Ok(Dataset { documents, class_names })
}

/// Pad with U+0000 or truncate so the document has exactly `d` codepoints.
/// Idempotent: a length-d document passes through unchanged.
pub fn normalize_length(doc: &LabeledDocument, d: usize) -> LabeledDocument {
    let mut codepoints = Vec::with_capacity(d);
    codepoints.extend(doc.codepoints.iter().copied().take(d));
    codepoints.resize(d, PAD_CODEPOINT);
    LabeledDocument { codepoints, label: doc.label }
}

/// Seeded shuffle, then the first floor(n * train_fraction) documents
/// become the training set and the remainder the test set.
pub fn split(dataset: &Dataset, train_fraction: f64, split_seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::EmptyDataset(format!("cannot split {n} document(s)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let pick = |idx: &[usize]| Dataset {
        documents: idx.iter().map(|&i| dataset.documents[i].clone()).collect(),
        class_names: dataset.class_names.clone(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Lazy batch stream over one epoch: shuffles document order from
/// (shuffle_seed, epoch), then rasterizes `batch_size` documents at a
/// time into [N,doc_len,1,36,36] tensors.
pub struct Batches<'a, T: Scalar> {
    dataset: &'a Dataset,
    source: &'a GlyphSource,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    drop_last: bool,
    doc_len: usize,
    _scalar: PhantomData<fn() -> T>,
}

pub fn batches<'a, T: Scalar>(
    dataset: &'a Dataset,
    spec: &BatchSpec,
    source: &'a GlyphSource,
    doc_len: usize,
    epoch: u64,
) -> Result<Batches<'a, T>> {
    if spec.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    if doc_len == 0 {
        return Err(Error::InvalidConfig("doc_len must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.shuffle_seed.wrapping_add(epoch)));
    Ok(Batches {
        dataset,
        source,
        order,
        pos: 0,
        batch_size: spec.batch_size,
        drop_last: spec.drop_last,
        doc_len,
        _scalar: PhantomData,
    })
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = (Tensor<T>, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 || (self.drop_last && remaining < self.batch_size) {
            return None;
        }
        let n = remaining.min(self.batch_size);
        let picked = &self.order[self.pos..self.pos + n];
        self.pos += n;
        let d = self.doc_len;
        let mut pixels = Vec::with_capacity(n * d * GLYPH_PIXELS);
        let mut labels = Vec::with_capacity(n);
        for &i in picked {
            let doc = &self.dataset.documents[i];
            labels.push(doc.label);
            for t in 0..d {
                let cp = doc.codepoints.get(t).copied().unwrap_or(PAD_CODEPOINT);
                let img = self.source.rasterize(cp);
                pixels.extend(img.pixels().iter().map(|&v| T::from_f64(v as f64)));
            }
        }
        let images = Tensor::constant(&[n, d, 1, GLYPH_SIZE, GLYPH_SIZE], pixels)
            .expect("batch buffer sized to shape");
        Some((images, labels))
    }
}

/// Recipe for the compositional dataset: class c's characters all share
/// left component c; right components are drawn without replacement, so
/// holdout characters never collide with training characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticDatasetSpec {
    pub num_classes: usize,
    pub chars_per_class: usize,
    pub docs_per_class: usize,
    pub doc_length: usize,
    /// Size of the component library (also bounds num_classes).
    pub component_count: u32,
    pub holdout_chars_per_class: usize,
    pub seed: u64,
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0
            || self.chars_per_class == 0
            || self.docs_per_class == 0
            || self.doc_length == 0
        {
            return Err(Error::InvalidConfig(
                "num_classes, chars_per_class, docs_per_class, doc_length must be >= 1".into(),
            ));
        }
        if (self.component_count as usize) < self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "component_count {} < num_classes {}: each class needs its own left component",
                self.component_count, self.num_classes
            )));
        }
        if self.chars_per_class + self.holdout_chars_per_class > self.component_count as usize {
            return Err(Error::InvalidConfig(format!(
                "chars_per_class {} + holdout_chars_per_class {} exceeds component_count {}",
                self.chars_per_class, self.holdout_chars_per_class, self.component_count
            )));
        }
        Ok(())
    }

    /// Glyph recipe this spec's corpus renders with. Exposed so a consumer
    /// holding only (component_count, seed) can rebuild the exact source,
    /// e.g. to evaluate a checkpoint against a regenerated corpus.
    pub fn glyph_spec(&self) -> SyntheticGlyphSpec {
        SyntheticGlyphSpec {
            component_count: self.component_count,
            stroke_library_seed: seed::mix(self.seed, STREAM_STROKES),
        }
    }
}

/// A generated corpus plus everything needed to interpret it.
pub struct SyntheticBundle {
    pub dataset: Dataset,
    pub source: GlyphSource,
    /// Training codepoints per class, index = class.
    pub class_chars: Vec<Vec<u32>>,
    /// Reserved codepoints per class; absent from `dataset`.
    pub holdout_chars: Vec<Vec<u32>>,
}

// rng stream tags under the dataset seed
const STREAM_STROKES: u64 = 0;
const STREAM_CHARS: u64 = 1;
const STREAM_DOCS: u64 = 2;

/// Rebuild the glyph source a synthetic corpus was rendered with, from the
/// two values that determine it. Matching `generate_synthetic`'s output
/// needs the same component_count and dataset seed.
pub fn synthetic_glyph_source(component_count: u32, dataset_seed: u64) -> Result<GlyphSource> {
    let spec = SyntheticGlyphSpec {
        component_count,
        stroke_library_seed: seed::mix(dataset_seed, STREAM_STROKES),
    };
    Ok(GlyphSource::Synthetic(SyntheticSource::new(spec)?))
}

/// Build the synthetic corpus. Deterministic in `spec.seed`: the stroke
/// library, the per-class character choices, and the document contents
/// each draw from an independent stream of it.
pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let source = SyntheticSource::new(spec.glyph_spec())?;

    let mut char_rng = ChaCha8Rng::seed_from_u64(seed::mix(spec.seed, STREAM_CHARS));
    let picks = spec.chars_per_class + spec.holdout_chars_per_class;
    let mut class_chars = Vec::with_capacity(spec.num_classes);
    let mut holdout_chars = Vec::with_capacity(spec.num_classes);
    for class in 0..spec.num_classes {
        let rights =
            rand::seq::index::sample(&mut char_rng, spec.component_count as usize, picks);
        let cp_of = |right: usize| {
            source
                .codepoint(class as u32, right as u32)
                .expect("right sampled below component_count")
        };
        let picked: Vec<u32> = rights.iter().map(cp_of).collect();
        class_chars.push(picked[..spec.chars_per_class].to_vec());
        holdout_chars.push(picked[spec.chars_per_class..].to_vec());
    }

    let mut doc_rng = ChaCha8Rng::seed_from_u64(seed::mix(spec.seed, STREAM_DOCS));
    let mut documents = Vec::with_capacity(spec.num_classes * spec.docs_per_class);
    for (class, chars) in class_chars.iter().enumerate() {
        for _ in 0..spec.docs_per_class {
            let codepoints = (0..spec.doc_length)
                .map(|_| chars[doc_rng.gen_range(0..chars.len())])
                .collect();
            documents.push(LabeledDocument { codepoints, label: class });
        }
    }

    Ok(SyntheticBundle {
        dataset: Dataset {
            documents,
            class_names: (0..spec.num_classes).map(|c| format!("class-{c}")).collect(),
        },
        source: GlyphSource::Synthetic(source),
        class_chars,
        holdout_chars,
    })
}

/// Documents drawn purely from the bundle's holdout characters: same
/// label scheme, but every glyph is unseen in training.
pub fn holdout_documents(
    bundle: &SyntheticBundle,
    docs_per_class: usize,
    doc_length: usize,
    gen_seed: u64,
) -> Result<Dataset> {
    if docs_per_class == 0 || doc_length == 0 {
        return Err(Error::InvalidConfig("docs_per_class and doc_length must be >= 1".into()));
    }
    if bundle.holdout_chars.iter().any(|h| h.is_empty()) {
        return Err(Error::EmptyDataset(
            "bundle reserved no holdout characters for some class".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(gen_seed);
    let mut documents = Vec::with_capacity(bundle.holdout_chars.len() * docs_per_class);
    for (class, chars) in bundle.holdout_chars.iter().enumerate() {
        for _ in 0..docs_per_class {
            let codepoints = (0..doc_length).map(|_| chars[rng.gen_range(0..chars.len())]).collect();
            documents.push(LabeledDocument { codepoints, label: class });
        }
    }
    Ok(Dataset { documents, class_names: bundle.dataset.class_names.clone() })
}

/// Write a dataset in the `label<TAB>text` corpus format.
pub fn write_dataset_tsv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for doc in &dataset.documents {
        let text: String = doc
            .codepoints
            .iter()
            .map(|&cp| char::from_u32(cp).unwrap_or(char::REPLACEMENT_CHARACTER))
            .collect();
        writeln!(out, "{}\t{}", dataset.class_names[doc.label], text)?;
    }
    out.flush()?;
    Ok(())
}

/// Side table decoding synthetic codepoints: `codepoint<TAB>left<TAB>right`,
/// codepoint in uppercase hex.
pub fn write_components_tsv(bundle: &SyntheticBundle, path: &Path) -> Result<()> {
    let source = bundle
        .source
        .as_synthetic()
        .ok_or_else(|| Error::InvalidConfig("bundle source is not synthetic".into()))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for chars in bundle.class_chars.iter().chain(bundle.holdout_chars.iter()) {
        for &cp in chars {
            let (left, right) = source.components_of(cp).expect("bundle codepoint in block");
            writeln!(out, "{cp:04X}\t{left}\t{right}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_tsv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    fn small_spec() -> SyntheticDatasetSpec {
        SyntheticDatasetSpec {
            num_classes: 4,
            chars_per_class: 20,
            docs_per_class: 100,
            doc_length: 12,
            component_count: 30,
            holdout_chars_per_class: 5,
            seed: 1,
        }
    }

    #[test]
    fn load_tsv_parses_two_records() {
        let (_d, path) = tmp_tsv("Sports\t東京マラソン\nTech\tRust\n");
        let ds = load_tsv(&path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_names, vec!["Sports", "Tech"]);
        let expected: Vec<u32> = "東京マラソン".chars().map(|c| c as u32).collect();
        assert_eq!(ds.documents[0].codepoints, expected);
        assert_eq!(ds.documents[0].label, 0);
        assert_eq!(ds.documents[1].label, 1);
    }

    #[test]
    fn load_tsv_indexes_labels_by_first_appearance() {
        let (_d, path) = tmp_tsv("B\tx\nA\ty\nB\tz\n");
        let ds = load_tsv(&path).unwrap();
        assert_eq!(ds.class_names, vec!["B", "A"]);
        let labels: Vec<usize> = ds.documents.iter().map(|d| d.label).collect();
        assert_eq!(labels, vec![0, 1, 0]);
    }

    #[test]
    fn load_tsv_skips_empty_lines() {
        let (_d, path) = tmp_tsv("A\tx\n\nB\ty\n");
        let ds = load_tsv(&path).unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn load_tsv_reports_line_numbers() {
        let (_d, path) = tmp_tsv("A\tx\nno-tab-here\n");
        match load_tsv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let (_d2, path2) = tmp_tsv("A\t\n");
        assert!(matches!(load_tsv(&path2), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn load_tsv_rejects_empty_corpora() {
        let (_d, path) = tmp_tsv("");
        assert!(matches!(load_tsv(&path), Err(Error::EmptyDataset(_))));
        let (_d2, path2) = tmp_tsv("\n\n");
        assert!(matches!(load_tsv(&path2), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn normalize_length_pads_truncates_and_is_idempotent() {
        let doc = LabeledDocument { codepoints: vec![65, 66, 67], label: 1 };
        let padded = normalize_length(&doc, 10);
        assert_eq!(padded.codepoints.len(), 10);
        assert_eq!(&padded.codepoints[..3], &[65, 66, 67]);
        assert!(padded.codepoints[3..].iter().all(|&c| c == PAD_CODEPOINT));
        assert_eq!(padded.label, 1);

        let long = LabeledDocument { codepoints: (0..200).collect(), label: 0 };
        let cut = normalize_length(&long, 126);
        assert_eq!(cut.codepoints, (0..126).collect::<Vec<u32>>());

        let exact = normalize_length(&padded, 10);
        assert_eq!(exact, padded);
    }

    fn toy_dataset(n: usize) -> Dataset {
        Dataset {
            documents: (0..n)
                .map(|i| LabeledDocument { codepoints: vec![i as u32 + 100], label: i % 2 })
                .collect(),
            class_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let ds = toy_dataset(10);
        let (tr, te) = split(&ds, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = split(&ds, 0.8, 7).unwrap();
        assert_eq!(tr.documents, tr2.documents);
        assert_eq!(te.documents, te2.documents);

        let mut union: Vec<&LabeledDocument> =
            tr.documents.iter().chain(te.documents.iter()).collect();
        union.sort_by_key(|d| d.codepoints[0]);
        let mut input: Vec<&LabeledDocument> = ds.documents.iter().collect();
        input.sort_by_key(|d| d.codepoints[0]);
        assert_eq!(union, input);
    }

    #[test]
    fn split_rejects_degenerate_requests() {
        assert!(split(&toy_dataset(1), 0.8, 0).is_err());
        assert!(split(&toy_dataset(10), 0.0, 0).is_err());
        assert!(split(&toy_dataset(10), 1.0, 0).is_err());
    }

    fn zeros_source() -> GlyphSource {
        GlyphSource::Synthetic(
            SyntheticSource::new(SyntheticGlyphSpec { component_count: 2, stroke_library_seed: 1 })
                .unwrap(),
        )
    }

    #[test]
    fn batches_cover_every_document_once() {
        let ds = toy_dataset(10);
        let source = zeros_source();
        let spec = BatchSpec { batch_size: 4, shuffle_seed: 3, drop_last: false };
        let sizes: Vec<usize> = batches::<f32>(&ds, &spec, &source, 5, 0)
            .unwrap()
            .map(|(images, labels)| {
                assert_eq!(images.shape()[1..], [5, 1, GLYPH_SIZE, GLYPH_SIZE]);
                assert_eq!(images.shape()[0], labels.len());
                labels.len()
            })
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);

        let mut seen: Vec<usize> = batches::<f32>(&ds, &spec, &source, 5, 0)
            .unwrap()
            .flat_map(|(_, labels)| labels)
            .collect();
        seen.sort_unstable();
        let mut expect: Vec<usize> = ds.documents.iter().map(|d| d.label).collect();
        expect.sort_unstable();
        assert_eq!(seen, expect);
    }

    #[test]
    fn batches_drop_last_and_epoch_reshuffle() {
        let ds = toy_dataset(10);
        let source = zeros_source();
        let spec = BatchSpec { batch_size: 4, shuffle_seed: 3, drop_last: true };
        assert_eq!(batches::<f32>(&ds, &spec, &source, 5, 0).unwrap().count(), 2);

        let labels_at = |epoch: u64| -> Vec<usize> {
            let spec = BatchSpec { batch_size: 10, shuffle_seed: 3, drop_last: false };
            batches::<f32>(&ds, &spec, &source, 1, epoch)
                .unwrap()
                .flat_map(|(_, l)| l)
                .collect()
        };
        assert_eq!(labels_at(0), labels_at(0));
        let differs = (1..5).any(|e| labels_at(e) != labels_at(0));
        assert!(differs, "epoch index never changed the order");
    }

    #[test]
    fn batches_pad_positions_are_blank_images() {
        let ds = Dataset {
            documents: vec![LabeledDocument { codepoints: vec![SYNTH_CP], label: 0 }],
            class_names: vec!["a".into()],
        };
        let spec = small_spec();
        let bundle = generate_synthetic(&spec).unwrap();
        let b = BatchSpec { batch_size: 1, shuffle_seed: 0, drop_last: false };
        let (images, _) = batches::<f32>(&ds, &b, &bundle.source, 3, 0).unwrap().next().unwrap();
        let data = images.data();
        let glyph = &data[..GLYPH_PIXELS];
        assert!(glyph.iter().any(|&v| v > 0.0), "real glyph rendered blank");
        assert!(data[GLYPH_PIXELS..].iter().all(|&v| v == 0.0), "padding not blank");
    }
    const SYNTH_CP: u32 = crate::glyph::SYNTHETIC_BASE;

    #[test]
    fn synthetic_spec_validation() {
        assert!(small_spec().validate().is_ok());
        let too_few = SyntheticDatasetSpec { component_count: 3, ..small_spec() };
        assert!(too_few.validate().is_err());
        let overdrawn = SyntheticDatasetSpec { chars_per_class: 28, ..small_spec() };
        assert!(overdrawn.validate().is_err());
    }

    #[test]
    fn synthetic_dataset_counts_and_left_components() {
        let bundle = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(bundle.dataset.len(), 400);
        assert_eq!(bundle.dataset.num_classes(), 4);
        let source = bundle.source.as_synthetic().unwrap();
        for doc in &bundle.dataset.documents {
            assert_eq!(doc.codepoints.len(), 12);
            for &cp in &doc.codepoints {
                let (left, _) = source.components_of(cp).expect("doc codepoint in block");
                assert_eq!(left as usize, doc.label, "class character built on wrong left");
            }
        }
    }

    #[test]
    fn synthetic_holdouts_never_appear_in_training_docs() {
        let bundle = generate_synthetic(&small_spec()).unwrap();
        let holdout: std::collections::HashSet<u32> =
            bundle.holdout_chars.iter().flatten().copied().collect();
        assert_eq!(holdout.len(), 20);
        for doc in &bundle.dataset.documents {
            assert!(doc.codepoints.iter().all(|cp| !holdout.contains(cp)));
        }
        // training and holdout sets are disjoint per class
        for (train, held) in bundle.class_chars.iter().zip(bundle.holdout_chars.iter()) {
            assert_eq!(train.len(), 20);
            assert_eq!(held.len(), 5);
            assert!(held.iter().all(|cp| !train.contains(cp)));
        }
    }

    #[test]
    fn synthetic_generation_is_deterministic_in_seed() {
        let a = generate_synthetic(&small_spec()).unwrap();
        let b = generate_synthetic(&small_spec()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.class_chars, b.class_chars);
        assert_eq!(a.holdout_chars, b.holdout_chars);
        let c = generate_synthetic(&SyntheticDatasetSpec { seed: 2, ..small_spec() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn holdout_documents_use_only_reserved_chars() {
        let bundle = generate_synthetic(&small_spec()).unwrap();
        let ds = holdout_documents(&bundle, 10, 12, 5).unwrap();
        assert_eq!(ds.len(), 40);
        for doc in &ds.documents {
            let pool = &bundle.holdout_chars[doc.label];
            assert!(doc.codepoints.iter().all(|cp| pool.contains(cp)));
        }
        let none_held = SyntheticDatasetSpec { holdout_chars_per_class: 0, ..small_spec() };
        let empty = generate_synthetic(&none_held).unwrap();
        assert!(holdout_documents(&empty, 10, 12, 5).is_err());
    }

    #[test]
    fn dataset_tsv_round_trips() {
        let bundle = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.tsv");
        write_dataset_tsv(&bundle.dataset, &path).unwrap();
        let back = load_tsv(&path).unwrap();
        assert_eq!(back, bundle.dataset);
    }

    #[test]
    fn components_tsv_decodes_every_character() {
        let bundle = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("components.tsv");
        write_components_tsv(&bundle, &path).unwrap();
        let source = bundle.source.as_synthetic().unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        let mut rows = 0usize;
        for line in raw.lines() {
            let mut cols = line.split('\t');
            let cp = u32::from_str_radix(cols.next().unwrap(), 16).unwrap();
            let left: u32 = cols.next().unwrap().parse().unwrap();
            let right: u32 = cols.next().unwrap().parse().unwrap();
            assert_eq!(source.components_of(cp), Some((left, right)));
            rows += 1;
        }
        assert_eq!(rows, 4 * 25);
    }
}
