//! The training loop and its diagnostics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{self, Checkpoint};
use crate::config::TrainConfig;
use crate::corpus::{Batcher, ContiguousBatch, Corpus};
use crate::encoders::Phase;
use crate::error::{Error, Result};
use crate::model::{has_known_word, Model, ViewConfig};
use crate::numerics::{
    adam_step, clip_global_norm, dot, norm, AdamState, GradState, Graph, Tensor, Var,
};
use crate::objective::{
    agreement_graph, component_diagnostics, context_pairs, loss_graph, single_view_diagnostic,
    AgreementKind, Diagnostics, PairSet, Reduction,
};
use crate::postprocess::{fit_pc, projector, remove_from_vector, PcConfig};
use crate::wordvec::WordTable;

pub const CSV_HEADER: &str = "iter,loss,tau,cos_ff,cos_gg,cos_fg";

/// Consecutive unusable batches tolerated before giving up.
const MAX_SKIPS: usize = 100;

/// One diagnostics CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRow {
    pub iter: u64,
    pub loss: f64,
    pub tau: f64,
    pub ff: f64,
    pub gg: f64,
    pub fg: f64,
}

impl DiagRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iter, self.loss, self.tau, self.ff, self.gg, self.fg
        )
    }

    pub fn parse(line: &str) -> Result<DiagRow> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || Error::Input(format!("bad diagnostics row {line:?}"));
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(DiagRow {
            iter: f[0].parse().map_err(|_| bad())?,
            loss: num(f[1])?,
            tau: num(f[2])?,
            ff: num(f[3])?,
            gg: num(f[4])?,
            fg: num(f[5])?,
        })
    }
}

/// Reads the rows of a diagnostics CSV.
pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<DiagRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Input(format!("{} lacks the diagnostics header", path.display())));
    }
    lines.map(DiagRow::parse).collect()
}

/// Counters and random stream of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunState {
    pub iteration: u64,
    pub epoch: u64,
    pub rng: ChaCha8Rng,
}

/// Result of one optimisation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Temperature the loss was computed with.
    pub tau: f64,
    pub diagnostics: Diagnostics,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Embedded sentences of a batch with their document breaks. Sentences
/// without a known word are dropped and leave a break behind.
pub fn embed_batch(table: &WordTable, batch: &ContiguousBatch) -> Result<(Vec<Tensor>, Vec<bool>)> {
    let mut xs = Vec::with_capacity(batch.len());
    let mut breaks = Vec::with_capacity(batch.len());
    let mut pending = false;
    for (s, &brk) in batch.sentences.iter().zip(&batch.doc_break_before) {
        pending |= brk;
        let x = table.embed_sentence(&s.tokens)?;
        if !has_known_word(&x) {
            pending = true;
            continue;
        }
        breaks.push(pending);
        pending = false;
        xs.push(x);
    }
    Ok((xs, breaks))
}

/// How the top principal direction is removed from each view of a batch.
pub enum Removal<'r> {
    Off,
    /// Fit on the batch with this rng.
    Fit(&'r mut ChaCha8Rng),
    /// Use these directions, one per view.
    Fixed(Vec<Vec<f64>>),
}

/// Nodes of one batch's loss.
#[derive(Clone, Debug)]
pub struct BatchLoss {
    pub loss: Var,
    /// `2d x N` per view, after removal.
    pub views: Vec<Var>,
    /// Directions removed from each view (empty when removal is off).
    pub directions: Vec<Vec<f64>>,
}

/// Records the loss of `model` on the embedded sentences `xs` on `g`. The
/// encoder weights are registered first, in [`Model::named_tensors`] order,
/// followed by τ. A removed direction enters as a constant projection.
pub fn batch_loss(
    g: &mut Graph,
    model: &Model,
    xs: Vec<Tensor>,
    pairs: &PairSet,
    agreement: AgreementKind,
    reduction: Reduction,
    removal: &mut Removal<'_>,
) -> Result<BatchLoss> {
    let encoders = model.register(g);
    let tau = g.param(Tensor::scalar(model.tau.value));
    let inputs: Vec<Var> = xs.into_iter().map(|x| g.constant(x)).collect();
    let mut views = Vec::with_capacity(encoders.len());
    let mut directions = Vec::new();
    for (k, enc) in encoders.iter().enumerate() {
        let mut cols = Vec::with_capacity(inputs.len());
        for &x in &inputs {
            cols.push(enc.encode(g, x, model.final_state)?);
        }
        let mut z = g.hcat(&cols)?;
        let u = match removal {
            Removal::Off => None,
            Removal::Fit(rng) => Some(fit_pc(g.value(z), PcConfig::default(), &mut **rng)?.u),
            Removal::Fixed(dirs) => Some(
                dirs.get(k)
                    .cloned()
                    .ok_or_else(|| Error::Dimension(format!("no direction for view {k}")))?,
            ),
        };
        if let Some(u) = u {
            let p = g.constant(projector(&u));
            z = g.matmul(p, z)?;
            directions.push(u);
        }
        views.push(z);
    }
    let a = agreement_graph(g, &views, agreement)?;
    let loss = loss_graph(g, a, tau, pairs, reduction)?;
    Ok(BatchLoss {
        loss,
        views,
        directions,
    })
}

pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub model: Model,
    pub state: RunState,
    table: &'a WordTable,
    batcher: Batcher<'a>,
    adam: AdamState,
    names: Vec<String>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, corpus: &'a Corpus, table: &'a WordTable) -> Result<Self> {
        cfg.validate()?;
        if table.dim() != cfg.dim {
            return Err(Error::Usage(format!(
                "word vectors have dimension {}, configuration expects {}",
                table.dim(),
                cfg.dim
            )));
        }
        if corpus.sentence_count() == 0 {
            return Err(Error::InsufficientData("corpus is empty".into()));
        }
        let batcher = Batcher::new(corpus, cfg.n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut model = Model::init(cfg.views, cfg.d, cfg.dim, cfg.tau0, cfg.dtype, &mut rng)?;
        model.final_state = cfg.final_state;
        let tau = Tensor::scalar(model.tau.value);
        let adam = AdamState::new(
            model
                .named_tensors()
                .into_iter()
                .map(|(_, t)| t)
                .chain(std::iter::once(&tau)),
        );
        let mut names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
        names.push("tau".into());
        Ok(Trainer {
            cfg,
            model,
            state: RunState {
                iteration: 0,
                epoch: 0,
                rng,
            },
            table,
            batcher,
            adam,
            names,
        })
    }

    /// Forward and backward pass on one batch, then an optimiser update.
    /// `Ok(None)` means the batch could not be used.
    fn try_step(&mut self, batch: &ContiguousBatch) -> Result<Option<StepOutcome>> {
        let (xs, breaks) = embed_batch(self.table, batch)?;
        if xs.len() < 2 {
            return Ok(None);
        }
        let pairs = match context_pairs(xs.len(), self.cfg.c, self.cfg.include_self, &breaks) {
            Ok(p) if !p.is_empty() => p,
            Ok(_) | Err(Error::InsufficientData(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let dtype = self.cfg.dtype;
        let tau = self.model.tau.value;
        let mut g = Graph::new(dtype);
        let mut removal = if self.cfg.pc_in_training {
            Removal::Fit(&mut self.state.rng)
        } else {
            Removal::Off
        };
        let BatchLoss { loss, views, .. } = batch_loss(
            &mut g,
            &self.model,
            xs,
            &pairs,
            self.cfg.agreement,
            self.cfg.reduction,
            &mut removal,
        )?;
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became {loss_value} at iteration {}",
                self.state.iteration + 1
            )));
        }

        let cols: Vec<Vec<Vec<f64>>> = views.iter().map(|&v| g.value(v).columns()).collect();
        let diagnostics = match self.model.views {
            ViewConfig::F => Diagnostics {
                ff: single_view_diagnostic(&cols[0], tau, &breaks)?,
                gg: 0.0,
                fg: 0.0,
            },
            ViewConfig::G => Diagnostics {
                ff: 0.0,
                gg: single_view_diagnostic(&cols[0], tau, &breaks)?,
                fg: 0.0,
            },
            _ => component_diagnostics(&cols[0], &cols[1], tau, &breaks)?,
        };

        let mut grads = GradState::new(self.names.clone(), g.backward(loss)?)?;
        if !self.model.tau.trainable {
            if let Some(t) = grads.grads.last_mut() {
                t.data_mut().fill(0.0);
            }
        }
        let grad_norm = clip_global_norm(&mut grads, self.cfg.grad_clip)?;
        let mut tau_t = Tensor::scalar(tau);
        {
            let mut params = self.model.tensors_mut();
            params.push(&mut tau_t);
            adam_step(&mut params, &grads, &mut self.adam, self.cfg.lr, dtype)?;
        }
        self.model.tau.value = tau_t.data()[0];
        self.model.tau.clamp();
        self.model.tau.value = dtype.round(self.model.tau.value);
        Ok(Some(StepOutcome {
            loss: loss_value,
            tau,
            diagnostics,
            grad_norm,
        }))
    }

    /// One optimisation step on the next usable batch.
    pub fn step(&mut self) -> Result<StepOutcome> {
        for _ in 0..MAX_SKIPS {
            let batch = self.batcher.next_batch(&mut self.state.rng);
            self.state.epoch = self.batcher.epoch();
            let outcome = match self.try_step(&batch) {
                Ok(o) => o,
                Err(Error::DegenerateVector(_) | Error::DegenerateMatrix(_)) => None,
                Err(e) => return Err(e),
            };
            if let Some(o) = outcome {
                self.state.iteration += 1;
                return Ok(o);
            }
        }
        Err(Error::InsufficientData(format!(
            "{MAX_SKIPS} consecutive batches were unusable"
        )))
    }

    /// Runs to `max_iters`, handing every logged row to `sink`. Returns the
    /// loss of every step taken.
    pub fn run(&mut self, sink: &mut dyn FnMut(&DiagRow) -> Result<()>) -> Result<Vec<f64>> {
        let mut losses = Vec::new();
        while self.state.iteration < self.cfg.max_iters {
            let o = self.step()?;
            losses.push(o.loss);
            if self.state.iteration % self.cfg.log_every == 0 {
                sink(&DiagRow {
                    iter: self.state.iteration,
                    loss: o.loss,
                    tau: o.tau,
                    ff: o.diagnostics.ff,
                    gg: o.diagnostics.gg,
                    fg: o.diagnostics.fg,
                })?;
            }
        }
        Ok(losses)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            config: self.cfg.clone(),
            iteration: self.state.iteration,
            epoch: self.state.epoch,
            rng: self.state.rng.clone(),
        }
    }
}

/// What [`train_to_dir`] produced.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: Model,
    pub losses: Vec<f64>,
    pub rows: Vec<DiagRow>,
    pub csv: PathBuf,
    pub checkpoint: PathBuf,
}

/// Trains, streaming `diagnostics.csv` into `out` and saving the final
/// model under `out/checkpoint`. The CSV is flushed even when training
/// aborts.
pub fn train_to_dir(cfg: &TrainConfig, corpus: &Corpus, table: &WordTable, out: &Path) -> Result<TrainReport> {
    let mut trainer = Trainer::new(cfg.clone(), corpus, table)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let csv = out.join("diagnostics.csv");
    let file = File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "{CSV_HEADER}").map_err(|e| Error::io(&csv, e))?;
    let mut rows = Vec::new();
    let result = trainer.run(&mut |row| {
        rows.push(*row);
        writeln!(writer, "{}", row.csv_line()).map_err(|e| Error::io(&csv, e))
    });
    writer.flush().map_err(|e| Error::io(&csv, e))?;
    let losses = result?;
    let ckpt = out.join("checkpoint");
    checkpoint::save(&trainer.checkpoint(), &ckpt)?;
    Ok(TrainReport {
        model: trainer.model,
        losses,
        rows,
        csv,
        checkpoint: ckpt,
    })
}

/// Mean view agreement over adjacent and over random cross-document pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgreementGap {
    pub adjacent: f64,
    pub random: f64,
    pub gap: f64,
}

fn cos_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Agreement of sentence `i` with sentence `j`: `cos(z_i^1, z_j^2) +
/// cos(z_i^2, z_j^1)` for two views, `cos(z_i, z_j)` for one.
fn pair_agreement(reps: &[Vec<Vec<f64>>], i: usize, j: usize) -> f64 {
    match reps.len() {
        1 => cos_or_zero(&reps[0][i], &reps[0][j]),
        _ => cos_or_zero(&reps[0][i], &reps[1][j]) + cos_or_zero(&reps[1][i], &reps[0][j]),
    }
}

/// Compares the trained agreement of adjacent sentences with that of as many
/// randomly drawn sentence pairs from different documents. Representations
/// are the training ones, with one direction per view removed over the
/// corpus when `remove_pc` is set.
pub fn agreement_gap(
    model: &Model,
    corpus: &Corpus,
    table: &WordTable,
    remove_pc: bool,
    seed: u64,
) -> Result<AgreementGap> {
    let mut doc_of = Vec::new();
    let mut reps: Vec<Vec<Vec<f64>>> = vec![Vec::new(); model.views.view_count()];
    let mut adjacent_pairs = Vec::new();
    for (doc, sentences) in corpus.documents.iter().enumerate() {
        let mut prev: Option<usize> = None;
        for s in sentences {
            let x = table.embed_sentence(&s.tokens)?;
            if !has_known_word(&x) {
                prev = None;
                continue;
            }
            let k = doc_of.len();
            for (v, r) in model.represent(&x, Phase::Train)?.into_iter().enumerate() {
                reps[v].push(r);
            }
            doc_of.push(doc);
            if let Some(p) = prev {
                adjacent_pairs.push((p, k));
            }
            prev = Some(k);
        }
    }
    let n = doc_of.len();
    if adjacent_pairs.is_empty() || doc_of.iter().all(|&d| d == doc_of[0]) {
        return Err(Error::InsufficientData(
            "need adjacent sentences and at least two documents".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if remove_pc {
        for view in reps.iter_mut() {
            let z = Tensor::from_columns(view)?;
            let u = fit_pc(&z, PcConfig::default(), &mut rng)?.u;
            for col in view.iter_mut() {
                *col = remove_from_vector(col, &u)?;
            }
        }
    }
    let adjacent = adjacent_pairs
        .iter()
        .map(|&(i, j)| pair_agreement(&reps, i, j))
        .sum::<f64>()
        / adjacent_pairs.len() as f64;
    let mut total = 0.0;
    let mut drawn = 0;
    while drawn < adjacent_pairs.len() {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if doc_of[i] == doc_of[j] {
            continue;
        }
        total += pair_agreement(&reps, i, j);
        drawn += 1;
    }
    let random = total / drawn as f64;
    Ok(AgreementGap {
        adjacent,
        random,
        gap: adjacent - random,
    })
}
