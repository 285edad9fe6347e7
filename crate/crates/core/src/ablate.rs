//! Grids of training runs over view configurations and agreement kinds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::TrainConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::ViewConfig;
use crate::objective::AgreementKind;
use crate::train::{agreement_gap, train_to_dir};
use crate::wordvec::WordTable;

/// Every two-view configuration under every agreement kind, and each
/// single-view configuration once (the kind does not apply to them).
pub fn default_grid() -> Vec<(ViewConfig, AgreementKind)> {
    let mut grid = Vec::new();
    for views in ViewConfig::ALL {
        if views.view_count() == 2 {
            for kind in AgreementKind::ALL {
                grid.push((views, kind));
            }
        } else {
            grid.push((views, AgreementKind::Cross));
        }
    }
    grid
}

/// FNV-1a over the token stream, with separators for sentences and
/// documents.
pub fn corpus_hash(corpus: &Corpus) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for doc in &corpus.documents {
        for s in doc {
            for t in &s.tokens {
                feed(t.as_bytes());
                feed(b" ");
            }
            feed(b"\n");
        }
        feed(b"\x1d");
    }
    format!("{h:016x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub views: ViewConfig,
    pub agreement: AgreementKind,
    /// `None` on success, the error message otherwise.
    pub error: Option<String>,
    pub final_loss: Option<f64>,
    pub ff: Option<f64>,
    pub gg: Option<f64>,
    pub fg: Option<f64>,
    pub gap: Option<f64>,
    pub seed: u64,
    pub corpus_hash: String,
    pub csv: PathBuf,
}

pub const SUMMARY_HEADER: &str =
    "views\tagreement\tstatus\tfinal_loss\tcos_ff\tcos_gg\tcos_fg\tgap\tseed\tcorpus_hash\tcsv";

impl AblationRow {
    pub fn tsv_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let status = match &self.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {}", e.replace(['\t', '\n'], " ")),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.views,
            self.agreement.name(),
            status,
            opt(self.final_loss),
            opt(self.ff),
            opt(self.gg),
            opt(self.fg),
            opt(self.gap),
            self.seed,
            self.corpus_hash,
            self.csv.display()
        )
    }
}

/// Runs every grid point with the shared seed and corpus. Each run writes
/// `<out>/<views>-<kind>/diagnostics.csv` and a checkpoint; failures are
/// recorded in the summary and the remaining runs continue. The summary is
/// written to `<out>/summary.tsv`.
pub fn ablate(
    base: &TrainConfig,
    grid: &[(ViewConfig, AgreementKind)],
    corpus: &Corpus,
    table: &WordTable,
    out: &Path,
) -> Result<Vec<AblationRow>> {
    if grid.is_empty() {
        return Err(Error::Usage("ablation grid is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = corpus_hash(corpus);
    let mut rows = Vec::with_capacity(grid.len());
    for &(views, agreement) in grid {
        let cfg = TrainConfig {
            views,
            agreement,
            ..base.clone()
        };
        let dir = out.join(format!("{}-{}", views, agreement.name()));
        let mut row = AblationRow {
            views,
            agreement,
            error: None,
            final_loss: None,
            ff: None,
            gg: None,
            fg: None,
            gap: None,
            seed: cfg.seed,
            corpus_hash: hash.clone(),
            csv: dir.join("diagnostics.csv"),
        };
        let result = train_to_dir(&cfg, corpus, table, &dir).and_then(|report| {
            let gap = agreement_gap(&report.model, corpus, table, cfg.pc_in_training, cfg.seed)?;
            Ok((report, gap))
        });
        match result {
            Ok((report, gap)) => {
                row.final_loss = report.losses.last().copied();
                if let Some(last) = report.rows.last() {
                    row.ff = Some(last.ff);
                    row.gg = Some(last.gg);
                    row.fg = Some(last.fg);
                }
                row.gap = Some(gap.gap);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let mut text = String::new();
    writeln!(text, "{SUMMARY_HEADER}").expect("string write");
    for r in &rows {
        writeln!(text, "{}", r.tsv_line()).expect("string write");
    }
    let path = out.join("summary.tsv");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
