//! Training configuration: flat `key=value` files with command-line
//! overrides.

use std::path::{Path, PathBuf};

use crate::corpus::DEFAULT_MAX_LEN;
use crate::encoders::FinalState;
use crate::error::{Error, Result};
use crate::model::ViewConfig;
use crate::numerics::Dtype;
use crate::objective::{AgreementKind, Reduction, TAU_MAX, TAU_MIN};
use crate::wordvec::DEFAULT_DIM;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Sentences per batch.
    pub n: usize,
    /// Hidden units per direction.
    pub d: usize,
    /// Context window.
    pub c: usize,
    pub lr: f64,
    pub max_iters: u64,
    pub grad_clip: f64,
    pub seed: u64,
    pub dtype: Dtype,
    pub agreement: AgreementKind,
    pub views: ViewConfig,
    pub include_self: bool,
    pub reduction: Reduction,
    pub pc_in_training: bool,
    pub max_len: usize,
    /// Word vector dimension.
    pub dim: usize,
    pub log_every: u64,
    pub tau0: f64,
    pub final_state: FinalState,
    pub corpus: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 512,
            d: 1024,
            c: 3,
            lr: 5e-4,
            max_iters: 1000,
            grad_clip: 5.0,
            seed: 0,
            dtype: Dtype::F64,
            agreement: AgreementKind::Cross,
            views: ViewConfig::Fg,
            include_self: true,
            reduction: Reduction::Sum,
            pc_in_training: true,
            max_len: DEFAULT_MAX_LEN,
            dim: DEFAULT_DIM,
            log_every: 10,
            tau0: 1.0,
            final_state: FinalState::PerDirection,
            corpus: None,
            vectors: None,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Usage(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl TrainConfig {
    /// Recognised keys, in the order [`TrainConfig::entries`] lists them.
    pub const KEYS: [&'static str; 22] = [
        "n",
        "d",
        "c",
        "lr",
        "max_iters",
        "grad_clip",
        "seed",
        "dtype",
        "agreement",
        "views",
        "include_self",
        "reduction",
        "pc_in_training",
        "max_len",
        "dim",
        "log_every",
        "tau0",
        "final_state",
        "corpus",
        "vectors",
        "out",
        "batch_size",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "n" | "batch_size" => self.n = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dtype" => self.dtype = value.parse()?,
            "agreement" => self.agreement = value.parse()?,
            "views" | "view_config" => self.views = value.parse()?,
            "include_self" => self.include_self = parse_bool(key, value)?,
            "reduction" => self.reduction = value.parse()?,
            "pc_in_training" => self.pc_in_training = parse_bool(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "dim" | "word_dim" => self.dim = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "tau0" => self.tau0 = parse(key, value)?,
            "final_state" => self.final_state = value.parse()?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "vectors" => self.vectors = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Usage(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, source: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(source, i + 1, "expected key=value"))?;
            self.set(k, v).map_err(|e| match e {
                Error::Usage(m) => Error::format(source, i + 1, m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(path, &text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Usage(m));
        if self.n < 2 {
            return fail(format!("batch size n={} must be at least 2", self.n));
        }
        if self.d < 1 {
            return fail("hidden size d must be at least 1".into());
        }
        if self.c < 1 {
            return fail("context window c must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.grad_clip > 0.0) {
            return fail(format!("grad_clip {} must be positive", self.grad_clip));
        }
        if self.log_every < 1 {
            return fail("log_every must be at least 1".into());
        }
        if self.max_len < 1 || self.dim < 1 {
            return fail("max_len and dim must be positive".into());
        }
        if !(TAU_MIN..=TAU_MAX).contains(&self.tau0) {
            return fail(format!("tau0 {} outside [{TAU_MIN}, {TAU_MAX}]", self.tau0));
        }
        Ok(())
    }

    /// Every setting as `(key, value)` text, paths included when set.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("n", self.n.to_string()),
            ("d", self.d.to_string()),
            ("c", self.c.to_string()),
            ("lr", self.lr.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("seed", self.seed.to_string()),
            ("dtype", self.dtype.name().to_string()),
            ("agreement", self.agreement.name().to_string()),
            ("views", self.views.name().to_string()),
            ("include_self", self.include_self.to_string()),
            ("reduction", self.reduction.name().to_string()),
            ("pc_in_training", self.pc_in_training.to_string()),
            ("max_len", self.max_len.to_string()),
            ("dim", self.dim.to_string()),
            ("log_every", self.log_every.to_string()),
            ("tau0", self.tau0.to_string()),
            ("final_state", self.final_state.name().to_string()),
        ];
        for (k, p) in [("corpus", &self.corpus), ("vectors", &self.vectors), ("out", &self.out)] {
            if let Some(p) = p {
                out.push((k, p.display().to_string()));
            }
        }
        out
    }

    /// The configuration as a config file.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
