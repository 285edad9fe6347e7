//! Similarity evaluation: correlations, STS scoring and nearest neighbours.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Tensor};
use crate::postprocess::{fit_pc, remove_from_vector, PcConfig};

/// Produces the unsupervised representation of every view of a sentence.
pub trait SentenceEncoder: Sync {
    /// One vector per view, or `None` when no token of the sentence is known.
    fn encode_views(&self, tokens: &[String]) -> Result<Option<Vec<Vec<f64>>>>;
}

/// Worker count for encoding, from `MVEMBED_THREADS` (default 1).
pub fn worker_threads() -> Result<usize> {
    match std::env::var("MVEMBED_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!("MVEMBED_THREADS must be a positive integer, got {s:?}"))),
        },
    }
}

/// Encodes every token list, fanning out over [`worker_threads`] workers.
pub fn encode_all<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    sentences: &[Vec<String>],
) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    let threads = worker_threads()?;
    if threads == 1 {
        return sentences.iter().map(|s| encoder.encode_views(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    pool.install(|| sentences.par_iter().map(|s| encoder.encode_views(s)).collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} against {} scores", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("correlation needs two points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    if !(sxy.is_finite() && sxx.is_finite() && syy.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their ranks.
pub fn average_ranks(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} against {} scores", x.len(), y.len())));
    }
    pearson(&average_ranks(x)?, &average_ranks(y)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StsDataset {
    pub name: String,
    pub pairs: Vec<StsPair>,
}

impl StsDataset {
    /// Parses `a<TAB>b<TAB>gold` lines; blank lines are ignored.
    pub fn parse(name: &str, text: &str) -> Result<StsDataset> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    name,
                    lineno,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let gold: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(name, lineno, format!("bad gold score {:?}", fields[2])))?;
            if !(0.0..=5.0).contains(&gold) {
                return Err(Error::format(name, lineno, format!("gold score {gold} outside [0, 5]")));
            }
            pairs.push(StsPair {
                sentence_a: fields[0].to_string(),
                sentence_b: fields[1].to_string(),
                gold,
            });
        }
        Ok(StsDataset {
            name: name.to_string(),
            pairs,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StsDataset> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Input(format!("{} is not valid UTF-8", path.display())))?;
        let mut ds = StsDataset::parse(&path.display().to_string(), &text)?;
        ds.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(ds)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub pearson_x100: f64,
    pub spearman_x100: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

impl EvalReport {
    /// One-line `key=value` record.
    pub fn record(&self) -> String {
        format!(
            "dataset={} pearson_x100={:.4} spearman_x100={:.4} pairs_used={} pairs_skipped={}",
            self.dataset, self.pearson_x100, self.spearman_x100, self.pairs_used, self.pairs_skipped
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset:  {}", self.dataset)?;
        writeln!(f, "pearson:  {:.2}", self.pearson_x100)?;
        writeln!(f, "spearman: {:.2}", self.spearman_x100)?;
        write!(f, "pairs:    {} used, {} skipped", self.pairs_used, self.pairs_skipped)
    }
}

/// Per-view directions fitted on a population of encoded sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewDirections {
    pub u: Vec<Vec<f64>>,
}

impl ViewDirections {
    /// Fits one direction per view over `encoded` (each entry holds all views).
    pub fn fit(encoded: &[&Vec<Vec<f64>>], seed: u64, cfg: PcConfig) -> Result<ViewDirections> {
        if encoded.len() < 2 {
            return Err(Error::InsufficientData(
                "principal component needs at least two sentences".into(),
            ));
        }
        let views = encoded[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Vec::with_capacity(views);
        for v in 0..views {
            let cols: Vec<Vec<f64>> = encoded.iter().map(|e| e[v].clone()).collect();
            let z = Tensor::from_columns(&cols)?;
            u.push(fit_pc(&z, cfg, &mut rng)?.u);
        }
        Ok(ViewDirections { u })
    }

    /// Removes each view's direction and adds the normalized views. A view
    /// that vanishes after removal contributes nothing.
    pub fn ensemble(&self, views: &[Vec<f64>]) -> Result<Vec<f64>> {
        if views.len() != self.u.len() {
            return Err(Error::Dimension(format!(
                "{} views against {} fitted directions",
                views.len(),
                self.u.len()
            )));
        }
        let mut out = vec![0.0; views[0].len()];
        for (z, u) in views.iter().zip(&self.u) {
            let r = remove_from_vector(z, u)?;
            let n = norm(&r);
            if n > 0.0 {
                for (o, x) in out.iter_mut().zip(&r) {
                    *o += x / n;
                }
            }
        }
        Ok(out)
    }
}

fn similarity(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Scores every pair by the cosine of the ensembled, PC-removed
/// representations and correlates with the gold scores.
pub fn eval_sts<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    dataset: &StsDataset,
    seed: u64,
) -> Result<EvalReport> {
    if dataset.pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let sentences: Vec<Vec<String>> = dataset
        .pairs
        .iter()
        .flat_map(|p| [tokenize(&p.sentence_a), tokenize(&p.sentence_b)])
        .collect();
    let encoded = encode_all(encoder, &sentences)?;
    let mut used = Vec::new();
    for (i, pair) in encoded.chunks(2).enumerate() {
        if let [Some(a), Some(b)] = pair {
            used.push((i, a, b));
        }
    }
    if used.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let population: Vec<&Vec<Vec<f64>>> = used.iter().flat_map(|(_, a, b)| [*a, *b]).collect();
    let dirs = ViewDirections::fit(&population, seed, PcConfig::default())?;
    let mut system = Vec::with_capacity(used.len());
    let mut gold = Vec::with_capacity(used.len());
    for (i, a, b) in &used {
        system.push(similarity(&dirs.ensemble(a)?, &dirs.ensemble(b)?));
        gold.push(dataset.pairs[*i].gold);
    }
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        pearson_x100: 100.0 * pearson(&system, &gold)?,
        spearman_x100: 100.0 * spearman(&system, &gold)?,
        pairs_used: used.len(),
        pairs_skipped: dataset.pairs.len() - used.len(),
    })
}

/// Sentences with unit-norm representations for cosine retrieval.
#[derive(Clone, Debug)]
pub struct NnIndex {
    texts: Vec<String>,
    vectors: Vec<Vec<f64>>,
    directions: ViewDirections,
    skipped: usize,
}

impl NnIndex {
    /// Encodes `texts`; sentences with no known token are left out.
    pub fn build<E: SentenceEncoder + ?Sized>(encoder: &E, texts: &[String], seed: u64) -> Result<NnIndex> {
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        let encoded = encode_all(encoder, &tokens)?;
        let kept: Vec<(usize, &Vec<Vec<f64>>)> = encoded
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|v| (i, v)))
            .collect();
        let population: Vec<&Vec<Vec<f64>>> = kept.iter().map(|(_, v)| *v).collect();
        let directions = ViewDirections::fit(&population, seed, PcConfig::default())?;
        let mut index = NnIndex {
            texts: Vec::new(),
            vectors: Vec::new(),
            directions,
            skipped: 0,
        };
        for (i, views) in kept {
            let z = index.directions.ensemble(views)?;
            let n = norm(&z);
            if n == 0.0 {
                index.skipped += 1;
                continue;
            }
            index.texts.push(texts[i].clone());
            index.vectors.push(z.iter().map(|x| x / n).collect());
        }
        index.skipped += texts.len() - population.len();
        if index.texts.is_empty() {
            return Err(Error::InsufficientData("no sentence could be indexed".into()));
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Top `k` by cosine, descending; ties keep insertion order.
    pub fn query<E: SentenceEncoder + ?Sized>(
        &self,
        encoder: &E,
        query: &str,
        k: usize,
    ) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::Usage("k must be at least 1".into()));
        }
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let views = encoder
            .encode_views(&tokens)?
            .ok_or_else(|| Error::DegenerateVector("query has no known word".into()))?;
        let q = self.directions.ensemble(&views)?;
        let qn = norm(&q);
        if qn == 0.0 {
            return Err(Error::DegenerateVector("query vanished after removal".into()));
        }
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (dot(v, &q) / qn).clamp(-1.0, 1.0)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, c)| (self.texts[i].clone(), c))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashMap;

    /// Looks whole sentences up in a table.
    struct TableEncoder(HashMap<String, Vec<Vec<f64>>>);

    impl SentenceEncoder for TableEncoder {
        fn encode_views(&self, tokens: &[String]) -> Result<Option<Vec<Vec<f64>>>> {
            Ok(self.0.get(&tokens.join(" ")).cloned())
        }
    }

    /// Hashes tokens into a fixed random vector per word, summed per view.
    struct BagEncoder {
        dim: usize,
    }

    impl SentenceEncoder for BagEncoder {
        fn encode_views(&self, tokens: &[String]) -> Result<Option<Vec<Vec<f64>>>> {
            let mut f = vec![0.0; self.dim];
            let mut g = vec![0.0; self.dim];
            for t in tokens {
                let seed = t.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                for i in 0..self.dim {
                    f[i] += r.random_range(-1.0..1.0);
                    g[i] += r.random_range(-1.0..1.0);
                }
            }
            Ok(Some(vec![f, g]))
        }
    }

    fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x.map(|v| 2.0 * v)).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &x.map(|v| -v)).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&x, &[1.0; 3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 9.0, 10.0, 100.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(spearman(&x, &[3.0; 5]), Err(Error::UndefinedCorrelation(_))));
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]).unwrap(), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_with_tie_matches_rank_oracle() {
        let x = [0.3, 1.2, 0.3, 2.5, -1.0, 0.9];
        let y = [1.0, 2.0, 3.0, 2.0, 0.5, 4.0];
        // hand-ranked
        let rx = [2.5, 5.0, 2.5, 6.0, 1.0, 4.0];
        let ry = [2.0, 3.5, 5.0, 3.5, 1.0, 6.0];
        assert!((spearman(&x, &y).unwrap() - naive_pearson(&rx, &ry)).abs() < 1e-12);
    }

    #[test]
    fn parse_sts_format() {
        let ds = StsDataset::parse("t", "a b\tc d\t4.5\n\nx\ty\t0\n").unwrap();
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[0].gold, 4.5);
        match StsDataset::parse("t", "a\tb\t1\nonly\ttwo\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(StsDataset::parse("t", "a\tb\t7\n"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(StsDataset::parse("t", "a\tb\tx\n"), Err(Error::Format { line: 1, .. })));
    }

    fn hand_built() -> (TableEncoder, StsDataset) {
        // a common offset along e0 that removal strips away
        let base = |w: [f64; 3]| vec![10.0, w[0], w[1], w[2]];
        let mut t = HashMap::new();
        let mut put = |s: &str, w: [f64; 3]| {
            t.insert(s.to_string(), vec![base(w), base(w)]);
        };
        put("a", [-0.5, -0.5, 0.0]);
        put("a2", [-0.5, -0.5, 0.0]);
        put("b", [1.0, 0.0, 0.0]);
        put("c", [0.0, 1.0, 0.0]);
        put("d", [0.0, 0.0, 1.0]);
        put("e", [0.0, 0.0, -1.0]);
        let ds = StsDataset::parse("hand", "a\ta2\t5\nb\tc\t2.5\nd\te\t0\n").unwrap();
        (TableEncoder(t), ds)
    }

    #[test]
    fn perfect_mock_scores_one_hundred() {
        let (enc, ds) = hand_built();
        let r = eval_sts(&enc, &ds, 0).unwrap();
        assert!((r.pearson_x100 - 100.0).abs() < 1e-9, "{r:?}");
        assert!((r.spearman_x100 - 100.0).abs() < 1e-9);
        assert_eq!((r.pairs_used, r.pairs_skipped), (3, 0));
        assert!(r.record().starts_with("dataset=hand pearson_x100=100.0000"));
    }

    #[test]
    fn identical_vectors_are_undefined() {
        let mut t = HashMap::new();
        for s in ["a", "b", "c", "d"] {
            t.insert(s.to_string(), vec![vec![1.0, 2.0], vec![3.0, 1.0]]);
        }
        let ds = StsDataset::parse("same", "a\tb\t1\nc\td\t4\n").unwrap();
        assert!(matches!(
            eval_sts(&TableEncoder(t), &ds, 0),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn skipped_pairs_are_counted() {
        let (enc, mut ds) = hand_built();
        ds.pairs.push(StsPair {
            sentence_a: "unknown".into(),
            sentence_b: "a".into(),
            gold: 1.0,
        });
        let r = eval_sts(&enc, &ds, 0).unwrap();
        assert_eq!((r.pairs_used, r.pairs_skipped), (3, 1));
        let none = StsDataset::parse("none", "zz\tyy\t1\n").unwrap();
        assert!(matches!(eval_sts(&enc, &none, 0), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn eval_is_deterministic() {
        let enc = BagEncoder { dim: 6 };
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let words = ["cat", "dog", "sat", "mat", "ran", "far", "big", "red"];
        let mut text = String::new();
        for _ in 0..20 {
            let s = |r: &mut ChaCha8Rng| {
                (0..3).map(|_| words[r.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
            };
            let (a, b) = (s(&mut r), s(&mut r));
            text.push_str(&format!("{a}\t{b}\t{}\n", r.random_range(0.0..5.0)));
        }
        let ds = StsDataset::parse("rand", &text).unwrap();
        assert_eq!(eval_sts(&enc, &ds, 9).unwrap(), eval_sts(&enc, &ds, 9).unwrap());
    }

    #[test]
    fn nn_self_retrieval_and_clamping() {
        let enc = BagEncoder { dim: 8 };
        let texts: Vec<String> = ["the cat sat", "a dog ran", "red big mat", "far far away"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let index = NnIndex::build(&enc, &texts, 1).unwrap();
        for v in index.vectors() {
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        let hits = index.query(&enc, "a dog ran", 10).unwrap();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[0].0, "a dog ran");
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
        assert!(matches!(index.query(&enc, "  ", 1), Err(Error::EmptySentence)));
        assert!(matches!(index.query(&enc, "cat", 0), Err(Error::Usage(_))));
    }

    #[test]
    fn nn_ties_keep_insertion_order() {
        let mut t = HashMap::new();
        t.insert("p".to_string(), vec![vec![1.0, 1.0, 0.0]]);
        t.insert("q".to_string(), vec![vec![1.0, 1.0, 0.0]]);
        t.insert("r".to_string(), vec![vec![1.0, 0.0, 1.0]]);
        let texts: Vec<String> = ["q", "p", "r"].iter().map(|s| s.to_string()).collect();
        let enc = TableEncoder(t);
        let index = NnIndex::build(&enc, &texts, 0).unwrap();
        let hits = index.query(&enc, "p", 3).unwrap();
        assert_eq!(hits[0].0, "q");
        assert_eq!(hits[1].0, "p");
    }

    #[test]
    fn nn_matches_full_scan() {
        let enc = BagEncoder { dim: 5 };
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let texts: Vec<String> = (0..100)
            .map(|_| (0..4).map(|_| format!("w{}", r.random_range(0..30))).collect::<Vec<_>>().join(" "))
            .collect();
        let index = NnIndex::build(&enc, &texts, 2).unwrap();
        let hits = index.query(&enc, "w1 w2 w3", 100).unwrap();
        let q = index
            .directions
            .ensemble(&enc.encode_views(&tokenize("w1 w2 w3")).unwrap().unwrap())
            .unwrap();
        let mut oracle: Vec<(usize, f64)> = index
            .vectors()
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(v, &q) / norm(&q)))
            .collect();
        // insertion sort keeps equal keys in place
        for i in 1..oracle.len() {
            let mut j = i;
            while j > 0 && oracle[j - 1].1 < oracle[j].1 {
                oracle.swap(j - 1, j);
                j -= 1;
            }
        }
        let texts_oracle: Vec<&String> = oracle.iter().map(|(i, _)| &index.texts()[*i]).collect();
        let texts_hits: Vec<&String> = hits.iter().map(|(t, _)| t).collect();
        assert_eq!(texts_hits, texts_oracle);
    }

    proptest! {
        #[test]
        fn pearson_of_affine_is_sign(xs in prop::collection::vec(-10.0f64..10.0, 3..30), a in -5.0f64..5.0, b in 0.1f64..5.0, neg: bool) {
            prop_assume!(xs.iter().any(|v| (v - xs[0]).abs() > 1e-3));
            let b = if neg { -b } else { b };
            let ys: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
            let r = pearson(&xs, &ys).unwrap();
            prop_assert!((r - b.signum()).abs() < 1e-9);
        }

        #[test]
        fn spearman_ignores_monotone_maps(xs in prop::collection::vec(-3.0f64..3.0, 3..30), ys in prop::collection::vec(-3.0f64..3.0, 3..30)) {
            let n = xs.len().min(ys.len());
            let (xs, ys) = (&xs[..n], &ys[..n]);
            prop_assume!(xs.iter().any(|v| *v != xs[0]) && ys.iter().any(|v| *v != ys[0]));
            let tx: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            let ty: Vec<f64> = ys.iter().map(|y| y * y * y + 2.0 * y).collect();
            prop_assert!((spearman(xs, ys).unwrap() - spearman(&tx, &ty).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_and_spearman_match_oracle_on_random_scores() {
        let mut r = ChaCha8Rng::seed_from_u64(50);
        let x: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..50).map(|_| r.random_range(0.0..5.0)).collect();
        assert!((pearson(&x, &y).unwrap() - naive_pearson(&x, &y)).abs() < 1e-12);
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect()
        };
        assert!((spearman(&x, &y).unwrap() - naive_pearson(&rank(&x), &rank(&y))).abs() < 1e-12);
    }
}
