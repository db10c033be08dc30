//! The character encoder (CE), the document classifier (CLCNN), and their
//! end-to-end composition.
//!
//! CE: 36x36 image -> conv3x3(32)+relu -> pool2 -> conv3x3(32)+relu ->
//! pool2 -> conv3x3(32)+relu -> flatten(800) -> fc(800,d)+relu ->
//! fc(d,d)+relu, d = 128 by default.
//!
//! CLCNN over the [d, D] embedding sequence laid out as a [N,d,1,D] map:
//! conv1x3(512,s3)+relu -> conv1x3(512,s3)+relu -> conv1x3(512,s1)+relu ->
//! conv1x3(512,s1) -> flatten -> fc(5120,1024) -> fc(1024,K). The last
//! conv and both fully connected layers carry no activation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::adam::Parameter;
use crate::autodiff::kernels::window_out;
use crate::autodiff::ops;
use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::glyph::{GLYPH_PIXELS, GLYPH_SIZE};

/// CE conv channel width (all three conv layers).
pub const CE_CHANNELS: usize = 32;
/// CE flatten width: the 36->34->17->15->7->5 chain leaves 5*5*32 values.
pub const CE_FLATTEN: usize = 800;
/// CLCNN conv channel width (all four conv layers).
pub const CLCNN_CHANNELS: usize = 512;
/// CLCNN hidden fc width.
pub const CLCNN_HIDDEN: usize = 1024;
/// Smallest document length the CLCNN length recurrence admits.
pub const MIN_DOC_LEN: usize = 45;
/// Flatten width the default document length (126) produces.
pub const CLCNN_FLATTEN_DEFAULT: usize = 5120;

/// Kernel width and stride of each CLCNN conv layer, in order.
const CLCNN_CONVS: [(usize, usize); 4] = [(3, 3), (3, 3), (3, 1), (3, 1)];

/// Hyperparameters fixing every tensor shape in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Character embedding width (CE output).
    pub d_ce: usize,
    /// Characters per CE micro-batch in `encode_document`; no effect on
    /// values, only on how many images go through the CE at once.
    pub chunk: usize,
    /// Fixed document length in characters.
    pub doc_len: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Reference geometry: d_ce 128, chunk 10, doc_len 126.
    pub fn new(num_classes: usize) -> Self {
        ModelConfig { d_ce: 128, chunk: 10, doc_len: 126, num_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes {} < 2",
                self.num_classes
            )));
        }
        if self.d_ce == 0 || self.chunk == 0 {
            return Err(Error::InvalidConfig("d_ce and chunk must be >= 1".into()));
        }
        clcnn_length_chain(self.doc_len)?;
        Ok(())
    }

    /// Flatten width in front of the CLCNN's first fc layer.
    pub fn clcnn_flatten(&self) -> Result<usize> {
        let chain = clcnn_length_chain(self.doc_len)?;
        Ok(CLCNN_CHANNELS * chain[3])
    }
}

/// Sequence lengths after each CLCNN conv for a given document length.
/// Errors when any layer would see fewer positions than its kernel.
pub fn clcnn_length_chain(doc_len: usize) -> Result<[usize; 4]> {
    let mut len = doc_len;
    let mut chain = [0usize; 4];
    for (i, &(k, s)) in CLCNN_CONVS.iter().enumerate() {
        if len < k {
            return Err(Error::InvalidConfig(format!(
                "doc_len {} leaves {} positions at conv{} (kernel {}); minimum doc_len is {}",
                doc_len,
                len,
                i + 1,
                k,
                MIN_DOC_LEN
            )));
        }
        len = window_out(len, k, s);
        chain[i] = len;
    }
    Ok(chain)
}

/// Spatial extents through the CE, ending in the flatten width.
fn ce_spatial_chain() -> ([usize; 5], usize) {
    let c1 = window_out(GLYPH_SIZE, 3, 1); // 34
    let p1 = c1 / 2; // 17
    let c2 = window_out(p1, 3, 1); // 15
    let p2 = c2 / 2; // 7
    let c3 = window_out(p2, 3, 1); // 5
    ([c1, p1, c2, p2, c3], c3 * c3 * CE_CHANNELS)
}

struct ConvLayer<T: Scalar> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

struct FcLayer<T: Scalar> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

/// Character encoder parameters (image -> d_ce vector).
pub struct CeParams<T: Scalar> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
    conv3: ConvLayer<T>,
    fc1: FcLayer<T>,
    fc2: FcLayer<T>,
}

/// Document classifier parameters (embedding sequence -> logits).
pub struct ClcnnParams<T: Scalar> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
    conv3: ConvLayer<T>,
    conv4: ConvLayer<T>,
    fc1: FcLayer<T>,
    fc2: FcLayer<T>,
}

/// The end-to-end model.
pub struct CeClcnn<T: Scalar> {
    pub config: ModelConfig,
    ce: CeParams<T>,
    clcnn: ClcnnParams<T>,
}

/// He-uniform fan-in draw: U(-sqrt(6/fan_in), sqrt(6/fan_in)). Sampling
/// happens in f64 and is cast, so every precision sees identical values.
fn he_uniform<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    requires_grad: bool,
) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::leaf(shape, data, requires_grad).expect("shape matches data")
}

fn zeros_param<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    Tensor::leaf(shape, vec![T::zero(); n], true).expect("shape matches data")
}

fn conv_layer<T: Scalar>(rng: &mut ChaCha8Rng, cout: usize, cin: usize, kh: usize, kw: usize) -> ConvLayer<T> {
    ConvLayer {
        weight: he_uniform(rng, &[cout, cin, kh, kw], cin * kh * kw, true),
        bias: zeros_param(&[cout]),
    }
}

fn fc_layer<T: Scalar>(rng: &mut ChaCha8Rng, fin: usize, fout: usize) -> FcLayer<T> {
    FcLayer {
        weight: he_uniform(rng, &[fin, fout], fin, true),
        bias: zeros_param(&[fout]),
    }
}

/// Build a model with He-uniform weights and zero biases, deterministic in
/// the seed. Layers draw in declaration order (CE convs, CE fcs, CLCNN
/// convs, CLCNN fcs); biases consume no draws.
pub fn init_params<T: Scalar>(config: ModelConfig, init_seed: u64) -> Result<CeClcnn<T>> {
    config.validate()?;
    let (_, ce_flatten) = ce_spatial_chain();
    assert_eq!(ce_flatten, CE_FLATTEN, "CE dimension chain drifted");
    let clcnn_flatten = config.clcnn_flatten()?;
    if config.doc_len == 126 {
        assert_eq!(clcnn_flatten, CLCNN_FLATTEN_DEFAULT, "CLCNN dimension chain drifted");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let d = config.d_ce;
    let ce = CeParams {
        conv1: conv_layer(&mut rng, CE_CHANNELS, 1, 3, 3),
        conv2: conv_layer(&mut rng, CE_CHANNELS, CE_CHANNELS, 3, 3),
        conv3: conv_layer(&mut rng, CE_CHANNELS, CE_CHANNELS, 3, 3),
        fc1: fc_layer(&mut rng, CE_FLATTEN, d),
        fc2: fc_layer(&mut rng, d, d),
    };
    let clcnn = ClcnnParams {
        conv1: conv_layer(&mut rng, CLCNN_CHANNELS, d, 1, 3),
        conv2: conv_layer(&mut rng, CLCNN_CHANNELS, CLCNN_CHANNELS, 1, 3),
        conv3: conv_layer(&mut rng, CLCNN_CHANNELS, CLCNN_CHANNELS, 1, 3),
        conv4: conv_layer(&mut rng, CLCNN_CHANNELS, CLCNN_CHANNELS, 1, 3),
        fc1: fc_layer(&mut rng, clcnn_flatten, CLCNN_HIDDEN),
        fc2: fc_layer(&mut rng, CLCNN_HIDDEN, config.num_classes),
    };
    Ok(CeClcnn { config, ce, clcnn })
}

impl<T: Scalar> CeClcnn<T> {
    /// All trainable tensors in canonical order. The names key optimizer
    /// moments and checkpoint records.
    pub fn params(&self) -> Vec<Parameter<T>> {
        let c = |name: &str, l: &ConvLayer<T>| {
            [
                Parameter::new(format!("{name}.weight"), l.weight.clone()),
                Parameter::new(format!("{name}.bias"), l.bias.clone()),
            ]
        };
        let f = |name: &str, l: &FcLayer<T>| {
            [
                Parameter::new(format!("{name}.weight"), l.weight.clone()),
                Parameter::new(format!("{name}.bias"), l.bias.clone()),
            ]
        };
        let mut out = Vec::with_capacity(22);
        out.extend(c("ce.conv1", &self.ce.conv1));
        out.extend(c("ce.conv2", &self.ce.conv2));
        out.extend(c("ce.conv3", &self.ce.conv3));
        out.extend(f("ce.fc1", &self.ce.fc1));
        out.extend(f("ce.fc2", &self.ce.fc2));
        out.extend(c("clcnn.conv1", &self.clcnn.conv1));
        out.extend(c("clcnn.conv2", &self.clcnn.conv2));
        out.extend(c("clcnn.conv3", &self.clcnn.conv3));
        out.extend(c("clcnn.conv4", &self.clcnn.conv4));
        out.extend(f("clcnn.fc1", &self.clcnn.fc1));
        out.extend(f("clcnn.fc2", &self.clcnn.fc2));
        out
    }

    /// Inference view: same storage, no gradient tracking, so forward
    /// passes free their intermediates eagerly and record nothing.
    pub fn frozen(&self) -> CeClcnn<T> {
        let c = |l: &ConvLayer<T>| ConvLayer {
            weight: l.weight.detached(),
            bias: l.bias.detached(),
        };
        let f = |l: &FcLayer<T>| FcLayer {
            weight: l.weight.detached(),
            bias: l.bias.detached(),
        };
        CeClcnn {
            config: self.config,
            ce: CeParams {
                conv1: c(&self.ce.conv1),
                conv2: c(&self.ce.conv2),
                conv3: c(&self.ce.conv3),
                fc1: f(&self.ce.fc1),
                fc2: f(&self.ce.fc2),
            },
            clcnn: ClcnnParams {
                conv1: c(&self.clcnn.conv1),
                conv2: c(&self.clcnn.conv2),
                conv3: c(&self.clcnn.conv3),
                conv4: c(&self.clcnn.conv4),
                fc1: f(&self.clcnn.fc1),
                fc2: f(&self.clcnn.fc2),
            },
        }
    }

    /// Encode a batch of character images: [M,1,36,36] -> [M,d_ce].
    pub fn ce_forward(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != GLYPH_SIZE || shape[3] != GLYPH_SIZE {
            return Err(Error::Shape {
                op: "ce_forward",
                detail: format!("expected [M,1,{0},{0}], got {1:?}", GLYPH_SIZE, shape),
            });
        }
        let m = shape[0];
        let ce = &self.ce;
        let x = ops::relu(&ops::conv2d(images, &ce.conv1.weight, &ce.conv1.bias, (1, 1))?);
        let x = ops::maxpool2d(&x, (2, 2))?;
        let x = ops::relu(&ops::conv2d(&x, &ce.conv2.weight, &ce.conv2.bias, (1, 1))?);
        let x = ops::maxpool2d(&x, (2, 2))?;
        let x = ops::relu(&ops::conv2d(&x, &ce.conv3.weight, &ce.conv3.bias, (1, 1))?);
        let x = ops::reshape(&x, &[m, CE_FLATTEN])?;
        let x = ops::relu(&ops::linear(&x, &ce.fc1.weight, &ce.fc1.bias)?);
        Ok(ops::relu(&ops::linear(&x, &ce.fc2.weight, &ce.fc2.bias)?))
    }

    /// Encode one document's images [D,1,36,36] into a [1,d_ce,1,D]
    /// feature map, running the CE over windows of `chunk` characters.
    /// The chunking is pure batching: the result does not depend on it.
    pub fn encode_document(&self, doc_images: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        let d = self.config.doc_len;
        let shape = doc_images.shape();
        if shape != [d, 1, GLYPH_SIZE, GLYPH_SIZE] {
            return Err(Error::Shape {
                op: "encode_document",
                detail: format!("expected [{d},1,{0},{0}], got {shape:?}", GLYPH_SIZE),
            });
        }
        if chunk == 0 {
            return Err(Error::InvalidConfig("chunk must be >= 1".into()));
        }
        let data = doc_images.data();
        self.encode_doc_slice(&data, chunk)
    }

    /// `encode_document` over a borrowed pixel slice of D*1296 values.
    fn encode_doc_slice(&self, doc_pixels: &[T], chunk: usize) -> Result<Tensor<T>> {
        let d = self.config.doc_len;
        debug_assert_eq!(doc_pixels.len(), d * GLYPH_PIXELS);
        let mut parts = Vec::with_capacity(d.div_ceil(chunk));
        let mut start = 0;
        while start < d {
            let m = chunk.min(d - start); // last chunk may be short
            let chunk_pixels = doc_pixels[start * GLYPH_PIXELS..(start + m) * GLYPH_PIXELS].to_vec();
            let images = Tensor::constant(&[m, 1, GLYPH_SIZE, GLYPH_SIZE], chunk_pixels)?;
            parts.push(self.ce_forward(&images)?);
            start += m;
        }
        let seq = ops::concat0(&parts)?; // [D, d_ce]
        let seq = ops::transpose2d(&seq)?; // [d_ce, D]
        ops::reshape(&seq, &[1, self.config.d_ce, 1, d])
    }

    /// Classify embedding sequences: [N,d_ce,1,L] -> [N,num_classes] logits.
    pub fn clcnn_forward(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = features.shape();
        if shape.len() != 4 || shape[1] != self.config.d_ce || shape[2] != 1 {
            return Err(Error::Shape {
                op: "clcnn_forward",
                detail: format!("expected [N,{},1,L], got {:?}", self.config.d_ce, shape),
            });
        }
        let n = shape[0];
        let net = &self.clcnn;
        let x = ops::relu(&ops::conv2d(features, &net.conv1.weight, &net.conv1.bias, (1, 3))?);
        let x = ops::relu(&ops::conv2d(&x, &net.conv2.weight, &net.conv2.bias, (1, 3))?);
        let x = ops::relu(&ops::conv2d(&x, &net.conv3.weight, &net.conv3.bias, (1, 1))?);
        // no activation on the last conv or either fc layer
        let x = ops::conv2d(&x, &net.conv4.weight, &net.conv4.bias, (1, 1))?;
        let flat = x.numel() / n;
        let fc1_in = net.fc1.weight.shape()[0];
        if flat != fc1_in {
            return Err(Error::Shape {
                op: "clcnn_forward",
                detail: format!(
                    "sequence length {} flattens to {}, but fc1 expects {}",
                    shape[3], flat, fc1_in
                ),
            });
        }
        let x = ops::reshape(&x, &[n, flat])?;
        let x = ops::linear(&x, &net.fc1.weight, &net.fc1.bias)?;
        ops::linear(&x, &net.fc2.weight, &net.fc2.bias)
    }

    /// End-to-end forward over a batch [N,D,1,36,36] -> [N,num_classes].
    /// `feature_hook`, when given, transforms each document's [1,d_ce,1,D]
    /// map between the CE and the CLCNN (wildcard training plugs in here).
    pub fn forward(
        &self,
        batch_images: &Tensor<T>,
        mut feature_hook: Option<&mut dyn FnMut(Tensor<T>) -> Result<Tensor<T>>>,
    ) -> Result<Tensor<T>> {
        let d = self.config.doc_len;
        let shape = batch_images.shape();
        if shape.len() != 5
            || shape[1] != d
            || shape[2] != 1
            || shape[3] != GLYPH_SIZE
            || shape[4] != GLYPH_SIZE
        {
            return Err(Error::Shape {
                op: "model_forward",
                detail: format!("expected [N,{d},1,{0},{0}], got {shape:?}", GLYPH_SIZE),
            });
        }
        let n = shape[0];
        if n == 0 {
            return Err(Error::Shape {
                op: "model_forward",
                detail: "empty batch".into(),
            });
        }
        let mut feature_maps = Vec::with_capacity(n);
        {
            let data = batch_images.data();
            for doc in 0..n {
                let doc_pixels = &data[doc * d * GLYPH_PIXELS..][..d * GLYPH_PIXELS];
                let mut features = self.encode_doc_slice(doc_pixels, self.config.chunk)?;
                if let Some(hook) = feature_hook.as_mut() {
                    features = hook(features)?;
                }
                feature_maps.push(features);
            }
        }
        let stacked = ops::concat0(&feature_maps)?; // [N,d_ce,1,D]
        self.clcnn_forward(&stacked)
    }
}
