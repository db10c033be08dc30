//! Training loop, evaluation, metrics, and checkpoint persistence.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{erase_in_place, wildcard, RandomErasingConfig, WildcardConfig};
use crate::autodiff::adam::{adam_step, clear_grads, AdamState, Parameter};
use crate::autodiff::{ops, Dtype, Scalar, Tensor};
use crate::data::{batches, BatchSpec, Dataset};
use crate::error::{Error, Result};
use crate::glyph::{GlyphSource, GLYPH_PIXELS};
use crate::model::{init_params, CeClcnn, ModelConfig};
use crate::seed;

/// Documents per forward pass during evaluation.
const EVAL_BATCH: usize = 16;

// rng stream tags under the training seed, one per randomness consumer
const STREAM_ERASE: u64 = 0x4552;
const STREAM_WILDCARD: u64 = 0x5743;

/// Everything the training loop needs beyond the model and data.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Adam step size alpha.
    pub learning_rate: f64,
    /// Base seed: augmentation streams derive from it per epoch.
    pub seed: u64,
    pub use_random_erasing: bool,
    pub use_wildcard: bool,
    pub random_erasing: RandomErasingConfig,
    pub wildcard: WildcardConfig,
    pub batch: BatchSpec,
    /// Evaluate on the test set every this many epochs (0 = never); the
    /// final epoch is always evaluated when nonzero.
    pub eval_every: usize,
    /// When set, `last.ckpt` is written after every epoch and `best.ckpt`
    /// after every test-accuracy improvement.
    pub checkpoint_dir: Option<PathBuf>,
    /// Emit one human-readable line per epoch on stderr.
    pub verbose: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, train_seed: u64) -> Self {
        TrainConfig {
            epochs,
            learning_rate: 1e-3,
            seed: train_seed,
            use_random_erasing: false,
            use_wildcard: false,
            random_erasing: RandomErasingConfig::default(),
            wildcard: WildcardConfig::default(),
            batch: BatchSpec { batch_size: 256, shuffle_seed: train_seed, drop_last: false },
            eval_every: 1,
            checkpoint_dir: None,
            verbose: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.random_erasing.validate()?;
        self.wildcard.validate()?;
        Ok(())
    }

    fn adam_state<T: Scalar>(&self) -> AdamState<T> {
        AdamState::new(
            T::from_f64(self.learning_rate),
            T::from_f64(0.9),
            T::from_f64(0.999),
            T::from_f64(1e-8),
        )
    }
}

/// One epoch's summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's documents, measured on the
    /// training stream (augmentations included) as it flows.
    pub train_loss: f64,
    /// Fraction of training documents whose augmented-pass argmax was
    /// right, before that batch's weight update.
    pub train_acc: f64,
    /// Clean test accuracy, when this epoch evaluated.
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

/// Per-epoch records, in epoch order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsHistory {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsHistory {
    /// CSV with header `epoch,train_loss,train_acc,test_acc,seconds`;
    /// test_acc is empty on epochs that did not evaluate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,test_acc,seconds\n");
        for e in &self.epochs {
            let test = e.test_acc.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc, test, e.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Train in place from epoch 0 with a fresh optimizer.
pub fn train<T: Scalar>(
    model: &CeClcnn<T>,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    source: &GlyphSource,
) -> Result<MetricsHistory> {
    let mut adam = cfg.adam_state::<T>();
    train_from(model, &mut adam, 0, train_set, test_set, cfg, source)
}

/// Training loop entry that can resume: `start_epoch` epochs are assumed
/// done (their rng streams are keyed by absolute epoch index, so a
/// resumed run replays the exact remaining stream). Runs until
/// cfg.epochs total epochs are complete.
#[allow(clippy::too_many_arguments)]
pub fn train_from<T: Scalar>(
    model: &CeClcnn<T>,
    adam: &mut AdamState<T>,
    start_epoch: u64,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    source: &GlyphSource,
) -> Result<MetricsHistory> {
    cfg.validate()?;
    let k = model.config.num_classes;
    for (name, ds) in [("train", train_set), ("test", test_set)] {
        if ds.num_classes() != k {
            return Err(Error::InvalidConfig(format!(
                "{name} set has {} classes, model expects {k}",
                ds.num_classes()
            )));
        }
    }
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    if start_epoch as usize >= cfg.epochs {
        return Err(Error::InvalidConfig(format!(
            "start_epoch {start_epoch} >= epochs {}",
            cfg.epochs
        )));
    }

    let params = model.params();
    let doc_len = model.config.doc_len;
    let erase_base = seed::mix(cfg.seed, STREAM_ERASE);
    let wildcard_base = seed::mix(cfg.seed, STREAM_WILDCARD);
    let mut history = MetricsHistory::default();
    let mut best_acc = f64::NEG_INFINITY;

    for epoch in start_epoch as usize..cfg.epochs {
        let clock = Instant::now();
        let mut erase_rng = ChaCha8Rng::seed_from_u64(seed::mix(erase_base, epoch as u64));
        let mut wc_rng = ChaCha8Rng::seed_from_u64(seed::mix(wildcard_base, epoch as u64));
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut seen = 0usize;

        let stream = batches::<T>(train_set, &cfg.batch, source, doc_len, epoch as u64)?;
        for (batch_idx, (images, labels)) in stream.enumerate() {
            let n = labels.len();
            if cfg.use_random_erasing {
                let mut data = images.data_mut();
                for glyph in data.chunks_exact_mut(GLYPH_PIXELS) {
                    erase_in_place(glyph, &cfg.random_erasing, &mut erase_rng);
                }
            }
            let logits = if cfg.use_wildcard {
                let mut hook = |features: Tensor<T>| wildcard(&features, &cfg.wildcard, &mut wc_rng, true);
                model.forward(&images, Some(&mut hook))?
            } else {
                model.forward(&images, None)?
            };
            count_correct(&logits, &labels, &mut correct)?;
            let loss = ops::softmax_cross_entropy(&logits, &labels)?;
            let loss_val = loss.data()[0].to_f64();
            if !loss_val.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx,
                    loss: loss_val,
                });
            }
            loss_sum += loss_val * n as f64;
            seen += n;
            loss.backward()?;
            adam_step(adam, &params)?;
            clear_grads(&params);
        }
        if seen == 0 {
            // drop_last can swallow a set smaller than one batch
            return Err(Error::EmptyDataset(
                "batch spec produced no training batches (drop_last with a short set?)".into(),
            ));
        }

        let evaluated = cfg.eval_every > 0
            && !test_set.is_empty()
            && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
        let test_acc = if evaluated {
            Some(evaluate(model, test_set, source)?)
        } else {
            None
        };

        let row = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            test_acc,
            seconds: clock.elapsed().as_secs_f64(),
        };
        if cfg.verbose {
            let test = row.test_acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
            eprintln!(
                "epoch {:>4}: loss {:.6} train_acc {:.4} test_acc {} ({:.1}s)",
                row.epoch, row.train_loss, row.train_acc, test, row.seconds
            );
        }
        history.epochs.push(row);

        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            let progress = TrainProgress { base_seed: cfg.seed, next_epoch: epoch as u64 + 1 };
            save_checkpoint(model, adam, progress, &dir.join("last.ckpt"))?;
            if let Some(acc) = test_acc {
                if acc > best_acc {
                    best_acc = acc;
                    save_checkpoint(model, adam, progress, &dir.join("best.ckpt"))?;
                }
            }
        }
    }
    Ok(history)
}

/// Argmax with ties broken toward the lowest class index.
fn argmax_row<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn count_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize], correct: &mut usize) -> Result<()> {
    let k = logits.shape()[1];
    let data = logits.data();
    for (row, &label) in data.chunks_exact(k).zip(labels.iter()) {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, num_classes: k });
        }
        if argmax_row(row) == label {
            *correct += 1;
        }
    }
    Ok(())
}

/// Clean accuracy: no augmentation, no gradient tracking, argmax ties
/// to the lowest class index. Deterministic.
pub fn evaluate<T: Scalar>(model: &CeClcnn<T>, dataset: &Dataset, source: &GlyphSource) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluate needs a non-empty dataset".into()));
    }
    let frozen = model.frozen();
    let spec = BatchSpec { batch_size: EVAL_BATCH, shuffle_seed: 0, drop_last: false };
    let mut correct = 0usize;
    for (images, labels) in batches::<T>(dataset, &spec, source, model.config.doc_len, 0)? {
        let logits = frozen.forward(&images, None)?;
        count_correct(&logits, &labels, &mut correct)?;
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Where a resumable run stands: the seed its streams derive from and
/// the first epoch still to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainProgress {
    pub base_seed: u64,
    pub next_epoch: u64,
}

/// A deserialized checkpoint.
pub struct Checkpoint<T: Scalar> {
    pub model: CeClcnn<T>,
    pub adam: AdamState<T>,
    pub progress: TrainProgress,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CECLCNN\0";
pub const CHECKPOINT_VERSION: u32 = 1;
// Corruption guards: no real tensor or name in this model family comes
// near these, so larger declared sizes mean a damaged file.
const MAX_NAME_LEN: usize = 4096;
const MAX_TENSOR_NUMEL: usize = 1 << 27;

/// Serialize model + optimizer + progress. Little-endian throughout,
/// self-describing per tensor (name, dtype, shape), byte-reproducible:
/// saving, loading, and saving again yields an identical file.
pub fn save_checkpoint<T: Scalar>(
    model: &CeClcnn<T>,
    adam: &AdamState<T>,
    progress: TrainProgress,
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let c = model.config;
    for v in [c.d_ce as u64, c.chunk as u64, c.doc_len as u64, c.num_classes as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&progress.base_seed.to_le_bytes())?;
    w.write_all(&progress.next_epoch.to_le_bytes())?;

    let params = model.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in &params {
        write_name(&mut w, &p.name)?;
        w.write_all(&[T::DTYPE.code()])?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &dim in shape {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        write_scalars(&mut w, &p.tensor.data())?;
    }

    for h in [adam.alpha, adam.beta1, adam.beta2, adam.eps] {
        w.write_all(&Scalar::to_f64(h).to_le_bytes())?;
    }
    w.write_all(&adam.step_count().to_le_bytes())?;
    let moments = adam.moments();
    let tracked: Vec<&Parameter<T>> = params.iter().filter(|p| moments.contains_key(&p.name)).collect();
    w.write_all(&(tracked.len() as u32).to_le_bytes())?;
    for p in tracked {
        let (m, v) = &moments[&p.name];
        write_name(&mut w, &p.name)?;
        write_scalars(&mut w, m)?;
        write_scalars(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint saved by `save_checkpoint` with matching precision.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::NotACheckpoint);
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    let d_ce = read_u64(&mut r, "d_ce")? as usize;
    let chunk = read_u64(&mut r, "chunk")? as usize;
    let doc_len = read_u64(&mut r, "doc_len")? as usize;
    let num_classes = read_u64(&mut r, "num_classes")? as usize;
    let config = ModelConfig { d_ce, chunk, doc_len, num_classes };
    let base_seed = read_u64(&mut r, "base_seed")?;
    let next_epoch = read_u64(&mut r, "next_epoch")?;

    // rebuild and overwrite: the file's shapes must match what the
    // stored config reconstructs
    let model: CeClcnn<T> = init_params(config, 0)?;
    let params = model.params();
    let stored = read_u32(&mut r, "parameter count")? as usize;
    if stored != params.len() {
        return Err(Error::CheckpointShape {
            name: "(parameter table)".into(),
            detail: format!("{stored} tensors stored, model has {}", params.len()),
        });
    }
    for p in &params {
        let name = read_name(&mut r)?;
        if name != p.name {
            return Err(Error::CheckpointShape {
                name,
                detail: format!("unexpected parameter order; wanted {:?}", p.name),
            });
        }
        let mut code = [0u8; 1];
        read_exact(&mut r, &mut code, "dtype")?;
        let dtype = Dtype::from_code(code[0]).ok_or_else(|| Error::CheckpointShape {
            name: name.clone(),
            detail: format!("unknown dtype code {}", code[0]),
        })?;
        if dtype != T::DTYPE {
            return Err(Error::CheckpointShape {
                name,
                detail: format!("stored as {dtype:?}, loading as {:?}", T::DTYPE),
            });
        }
        let ndim = read_u32(&mut r, "rank")? as usize;
        if ndim > 8 {
            return Err(Error::CheckpointTruncated(format!("tensor rank {ndim} not plausible")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r, "dim")? as usize);
        }
        if shape != p.tensor.shape() {
            return Err(Error::CheckpointShape {
                name,
                detail: format!("stored shape {:?}, model wants {:?}", shape, p.tensor.shape()),
            });
        }
        let data = read_scalars::<T, _>(&mut r, p.tensor.numel(), &name)?;
        p.tensor.data_mut().copy_from_slice(&data);
    }

    let mut hyper = [0.0f64; 4];
    for h in &mut hyper {
        *h = read_f64(&mut r, "adam hyperparameter")?;
    }
    let mut adam = AdamState::new(
        T::from_f64(hyper[0]),
        T::from_f64(hyper[1]),
        T::from_f64(hyper[2]),
        T::from_f64(hyper[3]),
    );
    let t = read_u64(&mut r, "adam step count")?;
    let entries = read_u32(&mut r, "moment count")? as usize;
    if entries > params.len() {
        return Err(Error::CheckpointTruncated(format!(
            "{entries} moment entries for {} parameters",
            params.len()
        )));
    }
    let mut moments = HashMap::new();
    for _ in 0..entries {
        let name = read_name(&mut r)?;
        let numel = params
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.tensor.numel())
            .ok_or_else(|| Error::CheckpointShape {
                name: name.clone(),
                detail: "moment entry for unknown parameter".into(),
            })?;
        let m = read_scalars::<T, _>(&mut r, numel, &name)?;
        let v = read_scalars::<T, _>(&mut r, numel, &name)?;
        moments.insert(name, (m, v));
    }
    adam.restore(t, moments);

    Ok(Checkpoint { model, adam, progress: TrainProgress { base_seed, next_epoch } })
}

fn write_name<W: Write>(w: &mut W, name: &str) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    Ok(())
}

fn write_scalars<T: Scalar, W: Write>(w: &mut W, values: &[T]) -> Result<()> {
    let width = match T::DTYPE {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut buf = Vec::with_capacity(values.len() * width);
    match T::DTYPE {
        Dtype::F32 => {
            for &v in values {
                buf.extend_from_slice(&(Scalar::to_f64(v) as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in values {
                buf.extend_from_slice(&Scalar::to_f64(v).to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CheckpointTruncated(format!("file ended inside {what}"))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

fn read_name<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r, "name length")? as usize;
    if len > MAX_NAME_LEN {
        return Err(Error::CheckpointTruncated(format!("name length {len} not plausible")));
    }
    let mut bytes = vec![0u8; len];
    read_exact(r, &mut bytes, "name")?;
    String::from_utf8(bytes)
        .map_err(|_| Error::CheckpointTruncated("parameter name is not UTF-8".into()))
}

fn read_scalars<T: Scalar, R: Read>(r: &mut R, numel: usize, name: &str) -> Result<Vec<T>> {
    if numel > MAX_TENSOR_NUMEL {
        return Err(Error::CheckpointTruncated(format!(
            "tensor {name:?} claims {numel} elements"
        )));
    }
    let width = match T::DTYPE {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut bytes = vec![0u8; numel * width];
    read_exact(r, &mut bytes, name)?;
    let mut out = Vec::with_capacity(numel);
    match T::DTYPE {
        Dtype::F32 => {
            for c in bytes.chunks_exact(4) {
                out.push(T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64));
            }
        }
        Dtype::F64 => {
            for c in bytes.chunks_exact(8) {
                out.push(T::from_f64(f64::from_le_bytes(c.try_into().unwrap())));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticDatasetSpec};
    use crate::model::MIN_DOC_LEN;

    fn tiny_setup(dataset_seed: u64) -> (crate::data::SyntheticBundle, ModelConfig) {
        let bundle = generate_synthetic(&SyntheticDatasetSpec {
            num_classes: 2,
            chars_per_class: 4,
            docs_per_class: 4,
            doc_length: 6,
            component_count: 8,
            holdout_chars_per_class: 0,
            seed: dataset_seed,
        })
        .unwrap();
        let config = ModelConfig { num_classes: 2, doc_len: MIN_DOC_LEN, ..ModelConfig::new(2) };
        (bundle, config)
    }

    fn quick_cfg(epochs: usize, train_seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(epochs, train_seed);
        cfg.batch.batch_size = 8;
        cfg.eval_every = 0;
        cfg
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::new(0, 1).validate().is_err());
        let mut bad_lr = TrainConfig::new(1, 1);
        bad_lr.learning_rate = 0.0;
        assert!(bad_lr.validate().is_err());
        assert!(TrainConfig::new(1, 1).validate().is_ok());
    }

    #[test]
    fn metrics_csv_layout() {
        let h = MetricsHistory {
            epochs: vec![
                EpochMetrics { epoch: 1, train_loss: 1.5, train_acc: 0.25, test_acc: None, seconds: 2.0 },
                EpochMetrics { epoch: 2, train_loss: 0.5, train_acc: 1.0, test_acc: Some(0.75), seconds: 2.0 },
            ],
        };
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,train_acc,test_acc,seconds");
        assert_eq!(lines[1], "1,1.5,0.25,,2");
        assert_eq!(lines[2], "2,0.5,1,0.75,2");
    }

    #[test]
    fn evaluate_is_deterministic_and_rejects_empty() {
        let (bundle, config) = tiny_setup(1);
        let model = init_params::<f32>(config, 3).unwrap();
        let a = evaluate(&model, &bundle.dataset, &bundle.source).unwrap();
        let b = evaluate(&model, &bundle.dataset, &bundle.source).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));

        let empty = Dataset { documents: vec![], class_names: bundle.dataset.class_names.clone() };
        assert!(matches!(evaluate(&model, &empty, &bundle.source), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn fresh_model_with_zero_logits_predicts_class_zero() {
        // zero glyphs embed to zero at init (zero biases), so all logits
        // tie at 0 and the tie rule picks class 0 for every document
        let (bundle, config) = tiny_setup(2);
        let model = init_params::<f32>(config, 5).unwrap();
        let mut docs = bundle.dataset.clone();
        for d in &mut docs.documents {
            d.codepoints = vec![crate::glyph::PAD_CODEPOINT; 6];
        }
        let acc = evaluate(&model, &docs, &bundle.source).unwrap();
        let class0 = docs.documents.iter().filter(|d| d.label == 0).count();
        assert_eq!(acc, class0 as f64 / docs.len() as f64);
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let (bundle, config) = tiny_setup(3);
        let model = init_params::<f32>(config, 7).unwrap();
        let cfg = quick_cfg(10, 7);
        let history =
            train(&model, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source).unwrap();
        assert_eq!(history.epochs.len(), 10);
        let first = history.epochs[0].train_loss;
        let last = history.epochs[9].train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        assert!(history.epochs.iter().all(|e| e.train_acc >= 0.0 && e.train_acc <= 1.0));
        assert!((1..=10).eq(history.epochs.iter().map(|e| e.epoch)));
    }

    #[test]
    fn same_seed_same_history() {
        let (bundle, config) = tiny_setup(4);
        let run = || {
            let model = init_params::<f32>(config, 11).unwrap();
            let mut cfg = quick_cfg(3, 13);
            cfg.use_random_erasing = true;
            cfg.use_wildcard = true;
            cfg.eval_every = 2;
            train(&model, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source).unwrap()
        };
        let (a, b) = (run(), run());
        for (ea, eb) in a.epochs.iter().zip(b.epochs.iter()) {
            assert_eq!(ea.train_loss, eb.train_loss);
            assert_eq!(ea.train_acc, eb.train_acc);
            assert_eq!(ea.test_acc, eb.test_acc);
        }
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let (bundle, config) = tiny_setup(5);
        let model = init_params::<f32>(config, 1).unwrap();
        let mut three = bundle.dataset.clone();
        three.class_names.push("ghost".into());
        let cfg = quick_cfg(1, 1);
        assert!(train(&model, &three, &bundle.dataset, &cfg, &bundle.source).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical_and_preserves_eval() {
        let (bundle, config) = tiny_setup(6);
        let model = init_params::<f32>(config, 17).unwrap();
        let mut cfg = quick_cfg(2, 19);
        let dir = tempfile::tempdir().unwrap();
        cfg.checkpoint_dir = Some(dir.path().to_path_buf());
        train(&model, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source).unwrap();

        let saved = dir.path().join("last.ckpt");
        let loaded = load_checkpoint::<f32>(&saved).unwrap();
        assert_eq!(loaded.progress, TrainProgress { base_seed: 19, next_epoch: 2 });
        assert_eq!(loaded.adam.step_count(), 2);

        let resaved = dir.path().join("resaved.ckpt");
        save_checkpoint(&loaded.model, &loaded.adam, loaded.progress, &resaved).unwrap();
        let a = std::fs::read(&saved).unwrap();
        let b = std::fs::read(&resaved).unwrap();
        assert_eq!(a, b, "round trip changed bytes");

        let before = evaluate(&model, &bundle.dataset, &bundle.source).unwrap();
        let after = evaluate(&loaded.model, &bundle.dataset, &bundle.source).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (bundle, config) = tiny_setup(7);
        let mut cfg = quick_cfg(4, 23);
        cfg.use_random_erasing = true;

        let reference = init_params::<f32>(config, 29).unwrap();
        let full = train(&reference, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut first_half = cfg.clone();
        first_half.epochs = 2;
        first_half.checkpoint_dir = Some(dir.path().to_path_buf());
        let interrupted = init_params::<f32>(config, 29).unwrap();
        train(&interrupted, &bundle.dataset, &bundle.dataset, &first_half, &bundle.source).unwrap();

        let mut resumed = load_checkpoint::<f32>(&dir.path().join("last.ckpt")).unwrap();
        assert_eq!(resumed.progress.next_epoch, 2);
        let second_half =
            train_from(&resumed.model, &mut resumed.adam, 2, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source)
                .unwrap();

        assert_eq!(second_half.epochs.len(), 2);
        for (r, f) in second_half.epochs.iter().zip(full.epochs[2..].iter()) {
            assert_eq!(r.epoch, f.epoch);
            assert_eq!(r.train_loss, f.train_loss, "resume diverged at epoch {}", r.epoch);
            assert_eq!(r.train_acc, f.train_acc);
        }
    }

    #[test]
    fn corrupt_checkpoints_fail_distinctly() {
        let (bundle, config) = tiny_setup(8);
        let model = init_params::<f32>(config, 31).unwrap();
        let adam = AdamState::<f32>::with_defaults();
        let progress = TrainProgress { base_seed: 0, next_epoch: 0 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &adam, progress, &path).unwrap();
        let good = std::fs::read(&path).unwrap();
        let _ = &bundle;

        // bad magic
        let mut bad = good.clone();
        bad[0] ^= 0xFF;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::NotACheckpoint)));

        // wrong version
        let mut bad = good.clone();
        bad[8] = 99;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));

        // truncated payload
        std::fs::write(&path, &good[..good.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::CheckpointTruncated(_))));

        // wrong precision
        std::fs::write(&path, &good).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::CheckpointShape { .. })));

        // stored config drives shapes: altering d_ce (first config field)
        // makes every tensor mismatch
        let mut bad = good.clone();
        bad[12] = 64;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::CheckpointShape { .. })));
    }

    #[test]
    fn best_checkpoint_tracks_test_accuracy() {
        let (bundle, config) = tiny_setup(9);
        let model = init_params::<f32>(config, 37).unwrap();
        let mut cfg = quick_cfg(2, 41);
        cfg.eval_every = 1;
        let dir = tempfile::tempdir().unwrap();
        cfg.checkpoint_dir = Some(dir.path().to_path_buf());
        train(&model, &bundle.dataset, &bundle.dataset, &cfg, &bundle.source).unwrap();
        assert!(dir.path().join("last.ckpt").exists());
        assert!(dir.path().join("best.ckpt").exists());
    }
}
