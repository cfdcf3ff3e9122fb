//! Encoder backends: registry lookup, batched text/image embedding, and
//! deterministic preprocessing.
//!
//! A loaded [`EncoderHandle`] is immutable and cheap to clone; encode calls
//! are synchronous batch-in/batch-out and preserve input order regardless of
//! how the batch is split across devices or worker threads internally.

mod mock;
mod preprocess;
mod registry;

#[cfg(feature = "candle")]
mod clip_vit;

pub use mock::{MockImageMode, MockOptions, VocabEntry};
pub use preprocess::ImageTensor;
pub use registry::{BackendKind, ModelSpec, Registry};

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Environment variable pointing at the local weights cache directory.
pub const CACHE_ENV_VAR: &str = "CLIP_REWARD_CACHE";

/// A fixed-dimension real vector produced by an encoder.
///
/// Encoders return embeddings raw (`normalized == false`); normalization is
/// applied exactly once, by the reward model.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wrap a raw vector. Rejects empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("empty embedding vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite embedding component at index {i}"
            )));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Return an L2-normalized copy. Zero-norm input is a numeric error.
    pub fn normalized(&self) -> Result<Embedding> {
        let norm = self.l2_norm();
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::Numeric("cannot normalize zero-norm embedding".into()));
        }
        Ok(Embedding {
            values: self.values.iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// One RGB image, 8 bits per channel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    /// `pixels` must hold exactly `width * height * 3` bytes (RGB).
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::Validation(format!(
                "frame buffer holds {} bytes, expected {expected} for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A single-color frame.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// A batch of same-sized frames with per-frame provenance keys.
#[derive(Debug, Clone)]
pub struct FrameBatch {
    frames: Vec<Frame>,
    source_ids: Vec<String>,
}

impl FrameBatch {
    pub fn new(frames: Vec<Frame>, source_ids: Vec<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Validation("empty frame batch".into()));
        }
        if frames.len() != source_ids.len() {
            return Err(Error::Validation(format!(
                "{} frames but {} source ids",
                frames.len(),
                source_ids.len()
            )));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if let Some(i) = frames.iter().position(|f| f.width() != w || f.height() != h) {
            return Err(Error::Validation(format!(
                "frame {i} is {}x{}, batch is {w}x{h}",
                frames[i].width(),
                frames[i].height()
            )));
        }
        Ok(Self { frames, source_ids })
    }

    /// Build a batch with synthesized `frame-N` source ids.
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self> {
        let ids = (0..frames.len()).map(|i| format!("frame-{i}")).collect();
        Self::new(frames, ids)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }
}

/// What a concrete backend must provide. Batches handed to a backend are
/// already validated; implementations must keep output order aligned with
/// input order.
pub(crate) trait EncoderBackend: Send + Sync {
    fn embed_dim(&self) -> usize;
    /// Maximum prompt length in backend tokens.
    fn token_limit(&self) -> usize;
    fn count_tokens(&self, prompt: &str) -> Result<usize>;
    fn encode_text(&self, prompts: &[String]) -> Result<Vec<Embedding>>;
    fn encode_frames(&self, frames: &[Frame]) -> Result<Vec<Embedding>>;
}

/// Backend for registry entries this build cannot run. Loading still
/// succeeds (metadata is useful on its own); encoding reports why it cannot.
struct UnavailableBackend {
    model_id: String,
    embed_dim: usize,
    reason: String,
}

impl EncoderBackend for UnavailableBackend {
    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn token_limit(&self) -> usize {
        77
    }

    fn count_tokens(&self, _prompt: &str) -> Result<usize> {
        Err(self.unavailable())
    }

    fn encode_text(&self, _prompts: &[String]) -> Result<Vec<Embedding>> {
        Err(self.unavailable())
    }

    fn encode_frames(&self, _frames: &[Frame]) -> Result<Vec<Embedding>> {
        Err(self.unavailable())
    }
}

impl UnavailableBackend {
    fn unavailable(&self) -> Error {
        Error::BackendUnavailable {
            model_id: self.model_id.clone(),
            reason: self.reason.clone(),
        }
    }
}

/// Options for [`load_encoder_with`].
#[derive(Debug, Clone, Default)]
pub struct EncoderOptions {
    /// Registry to resolve model ids against; bundled registry when `None`.
    pub registry: Option<Registry>,
    /// Weights cache directory; falls back to `CLIP_REWARD_CACHE`, then
    /// `$HOME/.cache/clip-reward`, then `./weights`.
    pub cache_dir: Option<PathBuf>,
    /// Mock-encoder configuration (ignored for real models).
    pub mock: MockOptions,
}

/// A loaded encoder: registry metadata plus the backend that does the work.
///
/// Handles are immutable and safe to share across threads; cloning is cheap.
#[derive(Clone)]
pub struct EncoderHandle {
    model_id: String,
    embed_dim: usize,
    input_resolution: u32,
    image_mean: [f64; 3],
    image_std: [f64; 3],
    device_spec: Vec<String>,
    backend: Arc<dyn EncoderBackend>,
}

impl std::fmt::Debug for EncoderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncoderHandle")
            .field("model_id", &self.model_id)
            .field("embed_dim", &self.embed_dim)
            .field("input_resolution", &self.input_resolution)
            .field("device_spec", &self.device_spec)
            .finish()
    }
}

/// Load a model from the bundled registry with default options.
///
/// Loading is idempotent: it resolves metadata and validates devices but
/// defers weight I/O to the first encode call, so repeated loads of the same
/// id produce equivalent handles with no side effects.
pub fn load_encoder(model_id: &str, device_spec: &[String]) -> Result<EncoderHandle> {
    load_encoder_with(model_id, device_spec, &EncoderOptions::default())
}

/// Load a model with an explicit registry, cache directory, or mock options.
pub fn load_encoder_with(
    model_id: &str,
    device_spec: &[String],
    options: &EncoderOptions,
) -> Result<EncoderHandle> {
    let bundled;
    let registry = match &options.registry {
        Some(r) => r,
        None => {
            bundled = Registry::bundled();
            &bundled
        }
    };
    let spec = registry
        .get(model_id)
        .ok_or_else(|| Error::UnknownModel(model_id.to_string()))?;

    let devices: Vec<String> = if device_spec.is_empty() {
        vec!["cpu".to_string()]
    } else {
        device_spec.to_vec()
    };
    for device in &devices {
        validate_device(device)?;
    }

    let backend: Arc<dyn EncoderBackend> = match spec.backend {
        BackendKind::Mock => Arc::new(mock::MockEncoder::new(&options.mock)?),
        BackendKind::ClipVit => clip_vit_backend(model_id, spec, options),
        BackendKind::External => Arc::new(UnavailableBackend {
            model_id: model_id.to_string(),
            embed_dim: spec.embed_dim,
            reason: "registry entry is metadata-only; its checkpoint layout is not \
                     supported by the bundled inference backend"
                .to_string(),
        }),
    };

    let embed_dim = if matches!(spec.backend, BackendKind::Mock) {
        options.mock.embed_dim
    } else {
        spec.embed_dim
    };
    debug_assert_eq!(embed_dim, backend.embed_dim());

    Ok(EncoderHandle {
        model_id: model_id.to_string(),
        embed_dim,
        input_resolution: spec.input_resolution,
        image_mean: spec.image_mean,
        image_std: spec.image_std,
        device_spec: devices,
        backend,
    })
}

#[cfg(feature = "candle")]
fn clip_vit_backend(
    model_id: &str,
    spec: &ModelSpec,
    options: &EncoderOptions,
) -> Arc<dyn EncoderBackend> {
    Arc::new(clip_vit::ClipVitEncoder::new(
        model_id,
        spec,
        resolve_cache_dir(options),
    ))
}

#[cfg(not(feature = "candle"))]
fn clip_vit_backend(
    model_id: &str,
    spec: &ModelSpec,
    _options: &EncoderOptions,
) -> Arc<dyn EncoderBackend> {
    Arc::new(UnavailableBackend {
        model_id: model_id.to_string(),
        embed_dim: spec.embed_dim,
        reason: "this build has no neural inference backend; rebuild with \
                 `--features candle` and place the checkpoint in the weights cache"
            .to_string(),
    })
}

/// Resolve the weights cache directory from options, environment, or defaults.
pub fn resolve_cache_dir(options: &EncoderOptions) -> PathBuf {
    if let Some(dir) = &options.cache_dir {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(CACHE_ENV_VAR) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Ok(home) = std::env::var("HOME") {
        if !home.is_empty() {
            return PathBuf::from(home).join(".cache").join("clip-reward");
        }
    }
    PathBuf::from("weights")
}

fn validate_device(device: &str) -> Result<()> {
    let base = device.split(':').next().unwrap_or(device);
    match base {
        "cpu" => Ok(()),
        "cuda" | "metal" | "gpu" => Err(Error::Device {
            device: device.to_string(),
            reason: "only cpu devices are available in this build".to_string(),
        }),
        _ => Err(Error::Device {
            device: device.to_string(),
            reason: "unrecognized device identifier".to_string(),
        }),
    }
}

impl EncoderHandle {
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Embedding dimension shared by text and image outputs.
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn input_resolution(&self) -> u32 {
        self.input_resolution
    }

    pub fn device_spec(&self) -> &[String] {
        &self.device_spec
    }

    /// Embed a list of prompts, one raw (unnormalized) embedding per prompt.
    ///
    /// Deterministic for a fixed handle: the same prompt always produces the
    /// same vector.
    pub fn encode_text(&self, prompts: &[String]) -> Result<Vec<Embedding>> {
        if prompts.is_empty() {
            return Err(Error::Validation("empty prompt list".into()));
        }
        let limit = self.backend.token_limit();
        for (i, prompt) in prompts.iter().enumerate() {
            let tokens = self.backend.count_tokens(prompt)?;
            if tokens > limit {
                return Err(Error::Validation(format!(
                    "prompt {i} exceeds the encoder token limit ({tokens} > {limit})"
                )));
            }
        }
        let out = self.backend.encode_text(prompts)?;
        debug_assert_eq!(out.len(), prompts.len());
        Ok(out)
    }

    /// Embed a batch of frames, one raw embedding per frame, in input order.
    ///
    /// The batch is split into one contiguous chunk per configured device;
    /// outputs are concatenated back in order, so the result does not depend
    /// on the device count.
    pub fn encode_images(&self, batch: &FrameBatch) -> Result<Vec<Embedding>> {
        if batch.is_empty() {
            return Err(Error::Validation("empty frame batch".into()));
        }
        if batch.frames()[0].width() == 0 || batch.frames()[0].height() == 0 {
            return Err(Error::Validation("malformed image dimensions: zero area".into()));
        }
        let n_chunks = self.device_spec.len().max(1);
        let chunk_size = batch.len().div_ceil(n_chunks);
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.frames().chunks(chunk_size) {
            out.extend(self.backend.encode_frames(chunk)?);
        }
        debug_assert_eq!(out.len(), batch.len());
        Ok(out)
    }

    /// Run the deterministic preprocessing pipeline for this encoder:
    /// bilinear resize of the shorter side to the input resolution, center
    /// crop, then per-channel normalization with the registry constants.
    pub fn preprocess_frame(&self, frame: &Frame) -> Result<ImageTensor> {
        preprocess::preprocess(
            frame,
            self.input_resolution,
            self.image_mean,
            self.image_std,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_registry_loads_mock() {
        let handle = load_encoder("mock", &[]).unwrap();
        assert_eq!(handle.embed_dim(), 16);
        assert_eq!(handle.model_id(), "mock");
        assert_eq!(handle.device_spec(), ["cpu".to_string()]);
    }

    #[test]
    fn mock_embed_dim_is_configurable() {
        let options = EncoderOptions {
            mock: MockOptions {
                embed_dim: 24,
                ..MockOptions::default()
            },
            ..EncoderOptions::default()
        };
        let handle = load_encoder_with("mock", &[], &options).unwrap();
        assert_eq!(handle.embed_dim(), 24);
    }

    #[test]
    fn registry_metadata_round_trips_through_load() {
        // Dimension read from registry metadata at load time must round-trip
        // through the handle.
        let registry = Registry::bundled();
        for id in ["clip-vit-base-patch32", "open-clip-vit-bigg-14"] {
            let spec_dim = registry.get(id).unwrap().embed_dim;
            let handle = load_encoder(id, &[]).unwrap();
            assert_eq!(handle.embed_dim(), spec_dim);
        }
    }

    #[test]
    fn unknown_model_is_a_registry_error() {
        let err = load_encoder("nonexistent-model", &[]).unwrap_err();
        assert!(matches!(err, Error::UnknownModel(_)), "{err}");
    }

    #[test]
    fn unavailable_device_is_a_device_error() {
        let err = load_encoder("mock", &["cuda:0".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Device { .. }), "{err}");
    }

    #[test]
    fn loading_is_idempotent() {
        let a = load_encoder("mock", &[]).unwrap();
        let b = load_encoder("mock", &[]).unwrap();
        assert_eq!(a.embed_dim(), b.embed_dim());
        let prompts = vec!["a humanoid robot".to_string()];
        assert_eq!(a.encode_text(&prompts).unwrap(), b.encode_text(&prompts).unwrap());
    }

    #[test]
    fn empty_prompt_list_is_rejected() {
        let handle = load_encoder("mock", &[]).unwrap();
        let err = handle.encode_text(&[]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn over_length_prompt_names_its_index() {
        let handle = load_encoder("mock", &[]).unwrap();
        let long = vec!["word "; 100].concat();
        let prompts = vec!["fine".to_string(), long];
        let err = handle.encode_text(&prompts).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("prompt 1"), "{msg}");
    }

    #[test]
    fn text_encoding_is_deterministic() {
        let handle = load_encoder("mock", &[]).unwrap();
        let prompts = vec!["pole and cart".to_string(), "pole and cart".to_string()];
        let out = handle.encode_text(&prompts).unwrap();
        assert_eq!(out[0], out[1]);
        assert!(!out[0].is_normalized());
    }

    #[test]
    fn batch_split_matches_single_batch() {
        let handle = load_encoder("mock", &[]).unwrap();
        let frames: Vec<Frame> = (0..7)
            .map(|i| Frame::filled(16, 16, [i as u8 * 30, 100, 200]))
            .collect();
        let joint = handle
            .encode_images(&FrameBatch::from_frames(frames.clone()).unwrap())
            .unwrap();
        let mut split = Vec::new();
        for frame in frames {
            split.extend(
                handle
                    .encode_images(&FrameBatch::from_frames(vec![frame]).unwrap())
                    .unwrap(),
            );
        }
        assert_eq!(joint, split);
    }

    #[test]
    fn device_split_agrees_with_single_device() {
        let one = load_encoder("mock", &["cpu".to_string()]).unwrap();
        let two = load_encoder("mock", &["cpu:0".to_string(), "cpu:1".to_string()]).unwrap();
        let frames: Vec<Frame> = (0..100)
            .map(|i| Frame::filled(8, 8, [i as u8, i as u8 / 2, 255 - i as u8]))
            .collect();
        let batch = FrameBatch::from_frames(frames).unwrap();
        let a = one.encode_images(&batch).unwrap();
        let b = two.encode_images(&batch).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.values().iter().zip(y.values()) {
                assert!((u - v).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_norm_embedding_cannot_normalize() {
        let e = Embedding::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(e.normalized(), Err(Error::Numeric(_))));
    }

    #[test]
    fn non_finite_embedding_is_rejected() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn mismatched_frame_dims_rejected_in_batch() {
        let frames = vec![Frame::filled(8, 8, [0; 3]), Frame::filled(8, 9, [0; 3])];
        assert!(FrameBatch::from_frames(frames).is_err());
    }
}
