//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use mvembed::checkpoint::{self, Checkpoint};
use mvembed::config::TrainConfig;
use mvembed::encoders::{parameter_count, Phase, ViewKind};
use mvembed::evalkit::{eval_sts, pearson, spearman, SentenceEncoder, StsDataset};
use mvembed::model::{encode_sentences, EncodeMode, Model, ViewConfig};
use mvembed::numerics::{dot, finite_diff_grad, norm, Dtype, Graph, Tensor};
use mvembed::objective::{
    agreement_matrix, context_pairs, contrastive_loss, pair_probabilities, AgreementKind, Reduction,
};
use mvembed::postprocess::{postprocess_batch, power_iteration, remove_pc, top_pc_via_gram, PcConfig};
use mvembed::synthetic::{corpus, SyntheticSpec};
use mvembed::train::{agreement_gap, batch_loss, read_diagnostics, train_to_dir, Removal, Trainer};
use mvembed::wordvec::WordTable;
use mvembed::Result;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let diff = a.sub(b).unwrap().sum_squares().sqrt();
    diff / a.sum_squares().sqrt().max(b.sum_squares().sqrt()).max(1e-12)
}

fn artifacts() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn desk_config() -> TrainConfig {
    TrainConfig {
        n: 8,
        c: 1,
        d: 8,
        dim: 16,
        lr: 5e-4,
        max_iters: 500,
        log_every: 10,
        ..TrainConfig::default()
    }
}

// ---------------------------------------------------------------------------

fn toy_loss(model: &Model, xs: &[Tensor], removal: &mut Removal<'_>) -> Result<(f64, Vec<Tensor>, Vec<Vec<f64>>)> {
    let pairs = context_pairs(xs.len(), 2, true, &vec![false; xs.len()])?;
    let mut g = Graph::new(Dtype::F64);
    let out = batch_loss(
        &mut g,
        model,
        xs.to_vec(),
        &pairs,
        AgreementKind::Cross,
        Reduction::Sum,
        removal,
    )?;
    let grads = g.backward(out.loss)?;
    Ok((g.scalar(out.loss), grads, out.directions))
}

fn gradient_fidelity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::init(ViewConfig::Fg, 4, 8, 1.0, Dtype::F64, &mut rng).unwrap();
        model.tau.value = rng.random_range(0.5..1.5);
        let xs: Vec<Tensor> = (0..6)
            .map(|_| {
                let m = rng.random_range(1..=5);
                gaussian(&mut rng, 8, m)
            })
            .collect();
        let mut pc_rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (_, _, dirs) = toy_loss(&model, &xs, &mut Removal::Fit(&mut pc_rng)).unwrap();
        for fixed in [Some(dirs), None] {
            let removal = || match &fixed {
                Some(d) => Removal::Fixed(d.clone()),
                None => Removal::Off,
            };
            let (_, analytic, _) = toy_loss(&model, &xs, &mut removal()).unwrap();
            let names = model.named_tensors().len();
            for k in 0..names {
                let base = model.named_tensors()[k].1.clone();
                let numeric = finite_diff_grad(
                    |t| {
                        let mut m = model.clone();
                        *m.tensors_mut()[k] = t.clone();
                        Ok(toy_loss(&m, &xs, &mut removal())?.0)
                    },
                    &base,
                    1e-6,
                )
                .unwrap();
                worst = worst.max(rel_err(&analytic[k], &numeric));
                checked += 1;
            }
            let numeric_tau = finite_diff_grad(
                |t| {
                    let mut m = model.clone();
                    m.tau.value = t.data()[0];
                    Ok(toy_loss(&m, &xs, &mut removal())?.0)
                },
                &Tensor::scalar(model.tau.value),
                1e-6,
            )
            .unwrap();
            worst = worst.max(rel_err(&analytic[names], &numeric_tau));
            checked += 1;
        }
    }
    verdict(
        worst < 1e-5,
        format!("{checked} tensors over 10 seeds, with and without removal; max relative error {worst:.2e} (< 1e-5)"),
    )
}

fn power_iteration_accuracy() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut accepted = 0;
    while accepted < 100 {
        let a = gaussian(&mut rng, 8, 8);
        let c = a.matmul_t(&a).unwrap();
        let eig = DMatrix::from_row_slice(8, 8, c.data()).symmetric_eigen();
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
        let lmin = eig.eigenvalues[order[7]];
        if lmin <= 0.0 || l1 / l2 < 1.1 {
            continue;
        }
        accepted += 1;
        min_ratio = min_ratio.min(l1 / l2);
        let truth: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
        let u = power_iteration(&c, 50, &mut rng).unwrap();
        let gap = 1.0 - dot(&u, &truth).abs();
        worst = worst.max(gap);
        if gap > 1e-6 {
            failures += 1;
        }
    }

    let mut gram_worst: f64 = 0.0;
    let cfg = PcConfig {
        max_iters: 2000,
        tol: None,
    };
    for _ in 0..100 {
        let z = gaussian(&mut rng, 6, 3);
        let via = top_pc_via_gram(&z, cfg.max_iters, &mut rng).unwrap().u;
        let direct = power_iteration(&z.matmul_t(&z).unwrap(), cfg.max_iters, &mut rng).unwrap();
        let s = dot(&via, &direct).signum();
        let diff = via.iter().zip(&direct).map(|(a, b)| (a - s * b).abs()).fold(0.0, f64::max);
        gram_worst = gram_worst.max(diff);
    }
    verdict(
        failures == 0 && gram_worst <= 1e-8,
        format!(
            "{failures}/100 matrices below 1 - 1e-6 (worst 1 - |cos| = {worst:.2e}, smallest eigenratio {min_ratio:.4}); \
             Gram vs direct on 6x3 max deviation {gram_worst:.2e} (<= 1e-8)"
        ),
    )
}

fn pc_removal() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut idempotent = true;
    for _ in 0..100 {
        let rows = 2 * rng.random_range(1..=8);
        let n = rng.random_range(2..=12);
        let offset: Vec<f64> = (0..rows).map(|_| { let s: f64 = StandardNormal.sample(&mut rng); 3.0 * s }).collect();
        let mut z = gaussian(&mut rng, rows, n);
        for j in 0..n {
            for i in 0..rows {
                z.set(i, j, z.at(i, j) + offset[i]);
            }
        }
        let (out, est) = postprocess_batch(&z, PcConfig::default(), &mut rng).unwrap();
        let max_norm = z.columns().iter().map(|c| norm(c)).fold(0.0, f64::max);
        for col in out.columns() {
            worst = worst.max(dot(&est.u, &col).abs() / max_norm);
        }
        idempotent &= remove_pc(&out, &est.u).unwrap() == out;
    }
    verdict(
        worst <= 1e-8 && idempotent,
        format!("max |u'z'| / max |z| = {worst:.2e} (<= 1e-8); second removal bit-identical: {idempotent}"),
    )
}

fn parameter_accounting() -> Verdict {
    let formula = parameter_count(1024);
    let model = Model::zeros(ViewConfig::Fg, 1024, 300);
    let ckpt = Checkpoint {
        config: TrainConfig::default(),
        model,
        iteration: 0,
        epoch: 0,
        rng: ChaCha8Rng::seed_from_u64(0),
    };
    let text = checkpoint::inspect(&ckpt);
    let exact = ckpt.model.parameter_count();
    let shows_formula = text.contains("13,197,312");
    let shows_exact = text.contains(&checkpoint::group_thousands(exact));
    verdict(
        formula == 13_197_312 && shows_formula && shows_exact,
        format!(
            "formula count {formula} (= 13,197,312); inspect shows formula: {shows_formula}, exact built count {exact}: {shows_exact}"
        ),
    )
}

fn training_signal() -> Verdict {
    let (c, t) = corpus(&SyntheticSpec::default()).unwrap();
    let start = Instant::now();
    let cfg = desk_config();
    let mut trainer = Trainer::new(cfg.clone(), &c, &t).unwrap();
    let losses = trainer.run(&mut |_| Ok(())).unwrap();
    let elapsed = start.elapsed();
    let first = losses[..50].iter().sum::<f64>() / 50.0;
    let last = losses[losses.len() - 50..].iter().sum::<f64>() / 50.0;
    let gap = agreement_gap(&trainer.model, &c, &t, cfg.pc_in_training, cfg.seed).unwrap();
    let a = last < 0.7 * first;
    let b = gap.gap >= 0.2;
    let fast = elapsed < Duration::from_secs(300);
    println!(
        "    note: temperature after the synthetic run is {:.4} (started at 1.0)",
        trainer.model.tau.value
    );
    verdict(
        a && b && fast,
        format!(
            "(a) last-50 mean loss {last:.3} vs first-50 {first:.3}, ratio {:.3} (< 0.7): {}; \
             (b) adjacent {:.3} vs random cross-document {:.3}, gap {:.3} (>= 0.2): {}; {:.1} s",
            last / first,
            if a { "pass" } else { "FAIL" },
            gap.adjacent,
            gap.random,
            gap.gap,
            if b { "pass" } else { "FAIL" },
            elapsed.as_secs_f64()
        ),
    )
}

fn within_view_dominance() -> Verdict {
    let (c, t) = corpus(&SyntheticSpec::default()).unwrap();
    let mut last = Vec::new();
    let mut paths = Vec::new();
    for kind in [AgreementKind::Full, AgreementKind::Cross] {
        let cfg = TrainConfig {
            agreement: kind,
            ..desk_config()
        };
        let dir = artifacts().join(format!("diagnostics-{}", kind.name()));
        let report = train_to_dir(&cfg, &c, &t, &dir).unwrap();
        let rows = read_diagnostics(&report.csv).unwrap();
        last.push(*rows.last().unwrap());
        paths.push(report.csv);
    }
    let (full, cross) = (last[0], last[1]);
    let within_dominates = (full.ff + full.gg) / 2.0 >= full.fg;
    let cross_higher = cross.fg > full.fg;
    verdict(
        within_dominates && cross_higher && paths.iter().all(|p| p.exists()),
        format!(
            "full: (ff+gg)/2 = {:.4} vs fg = {:.4}; cross fg = {:.4} vs full fg = {:.4}; CSVs in {}",
            (full.ff + full.gg) / 2.0,
            full.fg,
            cross.fg,
            full.fg,
            artifacts().display()
        ),
    )
}

fn composition_shapes() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 5;
    let mut table = WordTable::new(dim);
    for w in ["a", "b", "c", "d"] {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        table.insert(w, &v).unwrap();
    }
    let sentences: Vec<Vec<String>> = ["a b c", "d a", "c c b d"]
        .iter()
        .map(|s| s.split(' ').map(String::from).collect())
        .collect();
    let mut ok = true;
    let mut seen = Vec::new();
    for d in [1usize, 8, 32] {
        let model = Model::init(ViewConfig::Fg, d, dim, 1.0, Dtype::F64, &mut rng).unwrap();
        let x = table.embed_sentence(&sentences[0]).unwrap();
        let states = model.view_states(&x).unwrap();
        let f = states.iter().find(|s| s.kind() == ViewKind::F).unwrap().represent(Phase::Supervised).unwrap();
        let g = states.iter().find(|s| s.kind() == ViewKind::G).unwrap().represent(Phase::Supervised).unwrap();
        let sup = encode_sentences(&model, &table, &sentences, EncodeMode::Supervised, 0).unwrap();
        let un = encode_sentences(&model, &table, &sentences, EncodeMode::Unsupervised, 0).unwrap();
        ok &= f.len() == 8 * d
            && g.len() == 6 * d
            && sup.iter().all(|r| r.len() == 14 * d)
            && un.iter().all(|r| r.len() == 2 * d);
        seen.push(format!("d={d}: {}/{}/{}/{}", f.len(), g.len(), sup[0].len(), un[0].len()));
    }
    verdict(ok, format!("f/g/supervised/unsupervised lengths {}", seen.join(", ")))
}

struct Mock;

impl SentenceEncoder for Mock {
    fn encode_views(&self, tokens: &[String]) -> Result<Option<Vec<Vec<f64>>>> {
        let w = match tokens.join(" ").as_str() {
            "a man plays" | "a man is playing" => [-0.5, -0.5, 0.0],
            "the sky" => [1.0, 0.0, 0.0],
            "the sea" => [0.0, 1.0, 0.0],
            "up" => [0.0, 0.0, 1.0],
            "down" => [0.0, 0.0, -1.0],
            _ => return Ok(None),
        };
        let v = vec![10.0, w[0], w[1], w[2]];
        Ok(Some(vec![v.clone(), v]))
    }
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn evaluator_parity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..5.0)).collect();
    let rank = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect() };
    let dp = (pearson(&x, &y).unwrap() - naive_pearson(&x, &y)).abs();
    let ds = (spearman(&x, &y).unwrap() - naive_pearson(&rank(&x), &rank(&y))).abs();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hand.tsv");
    std::fs::write(&path, "a man plays\ta man is playing\t5\nthe sky\tthe sea\t2.5\nup\tdown\t0\n").unwrap();
    let ds_file = StsDataset::load(&path).unwrap();
    let report = eval_sts(&Mock, &ds_file, 0).unwrap();
    let shown = format!("{:.1}", report.pearson_x100);
    verdict(
        dp < 1e-12 && ds < 1e-12 && shown == "100.0",
        format!("pearson diff {dp:.1e}, spearman diff {ds:.1e} (< 1e-12); hand-built TSV pearson x100 = {shown}"),
    )
}

fn determinism() -> Verdict {
    std::env::set_var("MVEMBED_THREADS", "1");
    let (c, t) = corpus(&SyntheticSpec::default()).unwrap();
    let cfg = TrainConfig {
        max_iters: 100,
        ..desk_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let a = train_to_dir(&cfg, &c, &t, &dir.path().join("a")).unwrap();
    let b = train_to_dir(&cfg, &c, &t, &dir.path().join("b")).unwrap();
    let same = |p: &PathBuf, q: &PathBuf| std::fs::read(p).unwrap() == std::fs::read(q).unwrap();
    let csv = same(&a.csv, &b.csv);
    let manifest = same(&a.checkpoint.join(checkpoint::MANIFEST), &b.checkpoint.join(checkpoint::MANIFEST));
    let payload = same(&a.checkpoint.join(checkpoint::PAYLOAD), &b.checkpoint.join(checkpoint::PAYLOAD));
    verdict(
        csv && manifest && payload,
        format!("diagnostics identical: {csv}; manifest identical: {manifest}; payload identical: {payload}"),
    )
}

fn loss_symmetry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut exact = true;
    let mut worst_rel: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let dim = 2 * rng.random_range(1..=6);
        let zf: Vec<Vec<f64>> = gaussian(&mut rng, dim, n).columns();
        let zg: Vec<Vec<f64>> = gaussian(&mut rng, dim, n).columns();
        let c = rng.random_range(1..=3);
        let pairs = context_pairs(n, c, true, &vec![false; n]).unwrap();
        let tau = rng.random_range(0.05..2.0);
        for kind in AgreementKind::ALL {
            let base = contrastive_loss(&zf, &zg, &pairs, tau, kind, Reduction::Sum).unwrap();
            let scaled = |s: f64| -> f64 {
                let sc = |z: &Vec<Vec<f64>>| z.iter().map(|v| v.iter().map(|x| x * s).collect()).collect::<Vec<Vec<f64>>>();
                contrastive_loss(&sc(&zf), &sc(&zg), &pairs, tau, kind, Reduction::Sum).unwrap()
            };
            for s in [0.25, 2.0, 1024.0] {
                exact &= scaled(s) == base;
            }
            for s in [0.37, 3.3, 1e3 * std::f64::consts::PI] {
                worst_rel = worst_rel.max((scaled(s) - base).abs() / base.abs());
            }
            let p = pair_probabilities(&agreement_matrix(&[&zf, &zg], kind).unwrap(), tau);
            for i in 0..n {
                let s: f64 = (0..n).map(|j| p.at(i, j)).sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        }
    }
    verdict(
        exact && worst_rel <= 1e-12 && worst_sum <= 1e-12,
        format!(
            "bit-identical under power-of-two scales: {exact}; max relative change under other scales {worst_rel:.1e} (<= 1e-12); \
             max |sum p - 1| {worst_sum:.1e} (<= 1e-12)"
        ),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, Option<Duration>, fn() -> Verdict)> = vec![
        (1, "gradient fidelity", Some(Duration::from_secs(60)), gradient_fidelity),
        (2, "power iteration", Some(Duration::from_secs(10)), power_iteration_accuracy),
        (3, "pc removal", None, pc_removal),
        (4, "parameter accounting", None, parameter_accounting),
        (5, "desk-scale training signal", Some(Duration::from_secs(300)), training_signal),
        (6, "within-view dominance under full agreement", None, within_view_dominance),
        (7, "composition shapes", None, composition_shapes),
        (8, "evaluator oracle parity", None, evaluator_parity),
        (9, "determinism", None, determinism),
        (10, "loss scale invariance and normalisation", None, loss_symmetry),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let pass = v.pass && in_time;
        let budget_note = budget.map(|b| format!(", budget {} s", b.as_secs())).unwrap_or_default();
        println!(
            "criterion {id:>2} {name}: {} [{:.2} s{budget_note}] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
