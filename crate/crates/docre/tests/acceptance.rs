//! End-to-end acceptance suite. Each criterion prints one pass/fail line;
//! the test panics at the end if any criterion failed. Run with
//! `cargo test --test acceptance -- --nocapture` to watch the lines appear.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use docre::corpus::{
    emit_docred_json, generate_synthetic, make_view, to_raw, CorpusSplit, Document,
    Entity, Mention, RawDocument, RawLabel, RawMention, RelationFact, Sentence,
    SynthConfig, Token,
};
use docre::eval::{
    beta_sweep, compare_methods, f1_from, relation_metrics, robustness_probe,
    tune_threshold, write_beta_sweep_csv, write_compare_csv, write_scatter_csv,
    write_scatter_svg, CompareTable, Counts, Method,
};
use docre::model::{forward, predict_pair, EncoderKind, ModelConfig, ModelState};
use docre::sief::{
    build_importance_table, focusing_loss_exact, focusing_loss_linearized,
    focusing_loss_mc, importance_score, nonevidence_sets, NonEvidenceSet, SiefConfig,
    TargetGradient,
};
use docre::model::GradientAccumulator;
use docre::train::{gradcheck, train, LossKind, TrainConfig};

type Check = std::result::Result<(), String>;

fn run_check(
    number: usize,
    name: &str,
    failures: &mut Vec<String>,
    f: impl FnOnce() -> Check,
) {
    match f() {
        Ok(()) => println!("criterion {number:02} {name}: pass"),
        Err(msg) => {
            println!("criterion {number:02} {name}: FAIL ({msg})");
            failures.push(format!("{number:02} {name}: {msg}"));
        }
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn out_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("create acceptance output dir");
    dir
}

/// Builds a document from raw vocab ids. `mentions[e]` lists
/// (sentence, start, end) spans for entity `e`.
fn build_doc(
    doc_id: &str,
    sents: Vec<Vec<usize>>,
    mentions: Vec<Vec<(usize, usize, usize)>>,
    facts: Vec<(usize, usize, usize, Vec<usize>)>,
) -> Document {
    let sentences = sents
        .into_iter()
        .enumerate()
        .map(|(index, ids)| Sentence {
            index,
            tokens: ids
                .into_iter()
                .map(|vocab_id| Token {
                    surface: format!("t{vocab_id}"),
                    vocab_id,
                })
                .collect(),
        })
        .collect();
    let entities = mentions
        .into_iter()
        .enumerate()
        .map(|(id, spans)| Entity {
            id,
            mentions: spans
                .into_iter()
                .map(|(sentence_index, start, end)| Mention {
                    entity_id: id,
                    sentence_index,
                    start,
                    end,
                    entity_type: "PER".into(),
                })
                .collect(),
            entity_type: "PER".into(),
        })
        .collect();
    let facts = facts
        .into_iter()
        .map(|(head_entity, tail_entity, relation_id, ev)| RelationFact {
            head_entity,
            tail_entity,
            relation_id,
            evidence: ev.into_iter().collect(),
        })
        .collect();
    Document {
        doc_id: doc_id.into(),
        sentences,
        entities,
        facts,
    }
}

/// A 4-sentence, 3-entity document with one intra and one inter fact and
/// one mention-free sentence; safe under any single-sentence removal.
fn fixture_doc(doc_id: &str) -> Document {
    build_doc(
        doc_id,
        vec![vec![1, 2, 3], vec![4, 1, 5], vec![6, 7], vec![2, 5, 3, 6]],
        vec![
            vec![(0, 0, 1), (1, 1, 2)],
            vec![(1, 0, 1), (3, 1, 2)],
            vec![(3, 0, 1)],
        ],
        vec![(0, 1, 0, vec![1]), (1, 2, 1, vec![1, 3])],
    )
}

fn small_synth_corpus(seed: u64) -> CorpusSplit {
    generate_synthetic(&SynthConfig {
        seed,
        train_docs: 20,
        dev_docs: 8,
        test_docs: 4,
        sentences_min: 4,
        sentences_max: 6,
        entities_min: 2,
        entities_max: 3,
        relation_count: 4,
        entity_pool: 12,
        ..SynthConfig::default()
    })
    .expect("small synthetic corpus")
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Criterion 1: importance formula unit values.
// ---------------------------------------------------------------------------

fn check_importance_formula() -> Check {
    let cases = [
        ((0.5, 0.5), 0.0),
        ((0.8, 0.4), 0.8 * 2.0_f64.ln()),
        ((0.4, 0.8), 0.4 * 0.5_f64.ln()),
    ];
    for ((p, p_hat), want) in cases {
        let got = importance_score(p, p_hat);
        ensure(
            (got - want).abs() <= 1e-12,
            format!("importance_score({p}, {p_hat}) = {got}, want {want}"),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients vs central finite differences, both
// encoders, all five loss kinds, three fixture documents.
// ---------------------------------------------------------------------------

fn check_gradients() -> Check {
    // A second fixture with a longer mention-free stretch and a third with
    // denser mentions, so the check covers different view geometries.
    let docs = [
        fixture_doc("grad-a"),
        build_doc(
            "grad-b",
            vec![vec![1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![2, 9]],
            vec![vec![(0, 0, 1), (3, 0, 1)], vec![(1, 0, 1), (3, 1, 2)]],
            vec![(0, 1, 1, vec![1])],
        ),
        build_doc(
            "grad-c",
            vec![vec![1, 2, 3, 4], vec![5, 6], vec![1, 7, 3]],
            vec![
                vec![(0, 0, 1), (2, 0, 1)],
                vec![(0, 2, 3), (2, 2, 3)],
                vec![(0, 3, 4)],
            ],
            vec![(0, 1, 0, vec![0]), (2, 0, 1, vec![0])],
        ),
    ];
    // A generous threshold keeps every candidate sentence inside the
    // non-evidence sets so no loss degenerates to zero.
    let sief_cfg = SiefConfig {
        beta: 10.0,
        ..SiefConfig::default()
    };
    let kinds = [
        LossKind::Rel,
        LossKind::SfMc,
        LossKind::SfLinearized,
        LossKind::SfExact,
        LossKind::Total,
    ];
    for encoder in [EncoderKind::MeanPool, EncoderKind::SimpleBirnn] {
        // The enlarged init scale keeps every gradient component well above
        // the finite-difference noise floor (eps * |loss| / 2h).
        let cfg = ModelConfig {
            embedding_dim: 4,
            hidden_dim: 3,
            encoder_kind: encoder,
            seed: 1,
            init_scale: 0.5,
            ..ModelConfig::defaults(2, 10)
        };
        for doc in &docs {
            for kind in kinds {
                let report = gradcheck(&cfg, kind, doc, &sief_cfg).map_err(err_str)?;
                ensure(
                    report.params_checked > 0 && report.max_rel_err < 1e-4,
                    format!(
                        "{encoder:?}/{kind:?}/{}: max rel err {}",
                        doc.doc_id, report.max_rel_err
                    ),
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 3: the sampled one-sentence loss averaged over every sentence
// equals the full linearized loss divided by the sentence count.
// ---------------------------------------------------------------------------

fn check_estimator_consistency() -> Check {
    let corpus = small_synth_corpus(3);
    let model_cfg = ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        seed: 3,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    };
    let state = ModelState::new(model_cfg).map_err(err_str)?;
    for doc in corpus.train.iter().take(10) {
        let pairs = doc.ordered_pairs();
        let table = build_importance_table(&state, doc, &pairs).map_err(err_str)?;
        let sets = nonevidence_sets(&table, 0.8);
        let mut acc = GradientAccumulator::zeros_like(&state);
        let linearized =
            focusing_loss_linearized(&state, doc, &pairs, &sets, TargetGradient::Both, &mut acc)
                .map_err(err_str)?;
        let n = doc.sentence_count() as f64;
        let mut mc_sum = 0.0;
        for sentence in 0..doc.sentence_count() {
            let mut acc = GradientAccumulator::zeros_like(&state);
            mc_sum += focusing_loss_mc(
                &state,
                doc,
                &pairs,
                sentence,
                &sets,
                TargetGradient::Both,
                &mut acc,
            )
            .map_err(err_str)?;
        }
        let mean = mc_sum / n;
        let want = linearized / n;
        let tol = 1e-10 * want.abs().max(1.0);
        ensure(
            (mean - want).abs() <= tol,
            format!(
                "doc {}: mean sampled loss {mean} vs linearized/N {want}",
                doc.doc_id
            ),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 4: the exact subset loss matches a brute force that physically
// rebuilds every removed view, on sets of size <= 3.
// ---------------------------------------------------------------------------

fn check_exact_subset_oracle() -> Check {
    // Five fixtures with at least one mention-free sentence each; removing
    // mention-free sentences can never orphan a pair entity, so every
    // subset is a valid view.
    let docs = [
        fixture_doc("exact-a"),
        build_doc(
            "exact-b",
            vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8], vec![1, 5]],
            vec![vec![(0, 0, 1), (4, 0, 1)], vec![(0, 1, 2), (4, 1, 2)]],
            vec![(0, 1, 0, vec![0])],
        ),
        build_doc(
            "exact-c",
            vec![vec![1, 2, 3], vec![4, 5], vec![6, 7], vec![8, 9], vec![2, 3]],
            vec![vec![(0, 0, 1)], vec![(0, 2, 3)]],
            vec![(1, 0, 1, vec![0])],
        ),
        build_doc(
            "exact-d",
            vec![vec![1, 2], vec![3, 1], vec![4, 5, 6], vec![7, 8]],
            vec![vec![(0, 0, 1), (1, 1, 2)], vec![(0, 1, 2), (1, 0, 1)]],
            vec![(0, 1, 0, vec![0]), (1, 0, 1, vec![1])],
        ),
        build_doc(
            "exact-e",
            vec![vec![1, 2, 3], vec![4, 5], vec![6, 7], vec![8, 9]],
            vec![vec![(0, 0, 1)], vec![(0, 1, 2)], vec![(0, 2, 3)]],
            vec![(0, 1, 0, vec![0]), (1, 2, 1, vec![0])],
        ),
    ];
    let cfg = ModelConfig {
        embedding_dim: 6,
        hidden_dim: 5,
        seed: 9,
        ..ModelConfig::defaults(2, 12)
    };
    let state = ModelState::new(cfg).map_err(err_str)?;
    for doc in &docs {
        let pairs = doc.ordered_pairs();
        let mentioned: BTreeSet<usize> = doc
            .entities
            .iter()
            .flat_map(|e| e.mentions.iter().map(|m| m.sentence_index))
            .collect();
        let mention_free: BTreeSet<usize> = (0..doc.sentence_count())
            .filter(|s| !mentioned.contains(s))
            .take(3)
            .collect();
        ensure(
            !mention_free.is_empty(),
            format!("doc {} has no mention-free sentence", doc.doc_id),
        )?;
        let sets =
            NonEvidenceSet::uniform(doc, &pairs, state.config.relation_count, |_| {
                mention_free.clone()
            });

        let mut acc = GradientAccumulator::zeros_like(&state);
        let got = focusing_loss_exact(&state, doc, &pairs, &sets, TargetGradient::Both, &mut acc)
            .map_err(err_str)?;

        // Independent brute force: enumerate every subset (including the
        // empty one) and forward the physically rebuilt view.
        let mut want = 0.0;
        for &pair in &pairs {
            let full = predict_pair(&state, doc, pair).map_err(err_str)?;
            for j in 0..state.config.relation_count {
                let k: Vec<usize> = sets
                    .get(pair, j)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                ensure(k.len() <= 3, "oracle fixture set larger than 3")?;
                for mask in 0u32..(1 << k.len()) {
                    let removed: BTreeSet<usize> = k
                        .iter()
                        .enumerate()
                        .filter(|(bit, _)| mask & (1 << bit) != 0)
                        .map(|(_, &s)| s)
                        .collect();
                    let view = make_view(doc, removed).map_err(err_str)?;
                    let (pred, _) = forward(&state, &view, pair).map_err(err_str)?;
                    let (p, p_hat) = (full.probs[j], pred.probs[j]);
                    want -= p * p_hat.ln() + (1.0 - p) * (1.0 - p_hat).ln();
                }
            }
        }
        ensure(
            (got - want).abs() <= 1e-10 * want.abs().max(1.0),
            format!("doc {}: exact loss {got} vs brute force {want}", doc.doc_id),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 5: relation metrics on a hand-counted 10-prediction fixture,
// and the threshold tuner against a 1000-point grid brute force.
// ---------------------------------------------------------------------------

fn hand_fixture_corpus() -> CorpusSplit {
    let mention = |name: &str, sent_id: usize, pos: usize| RawMention {
        name: name.into(),
        sent_id,
        pos: [pos, pos + 1],
        entity_type: "PER".into(),
    };
    let label = |h: usize, t: usize, r: &str, ev: Vec<usize>| RawLabel {
        h,
        t,
        r: r.into(),
        evidence: ev,
    };
    // Train doc 1 plants (alice, bob, rel00) so the Ign variant has one
    // known-fact triple to exclude on dev.
    let train1 = RawDocument {
        title: "t1".into(),
        sents: vec![vec!["alice".into(), "met".into(), "bob".into()]],
        vertex_set: vec![vec![mention("alice", 0, 0)], vec![mention("bob", 0, 2)]],
        labels: vec![label(0, 1, "rel00", vec![0])],
    };
    // Train doc 2 registers the remaining relation names under entities
    // that never appear on dev.
    let train2 = RawDocument {
        title: "t2".into(),
        sents: vec![vec!["carol".into(), "knows".into(), "dave".into()]],
        vertex_set: vec![vec![mention("carol", 0, 0)], vec![mention("dave", 0, 2)]],
        labels: vec![
            label(0, 1, "rel01", vec![0]),
            label(0, 1, "rel02", vec![0]),
            label(0, 1, "rel03", vec![0]),
            label(0, 1, "rel04", vec![0]),
        ],
    };
    // Dev: 2 entities => 2 ordered pairs; 5 relations => 10 decisions.
    let dev = RawDocument {
        title: "d1".into(),
        sents: vec![
            vec!["alice".into(), "met".into(), "bob".into()],
            vec!["alice".into(), "left".into()],
        ],
        vertex_set: vec![
            vec![mention("alice", 0, 0), mention("alice", 1, 0)],
            vec![mention("bob", 0, 2)],
        ],
        labels: vec![label(0, 1, "rel00", vec![0]), label(1, 0, "rel01", vec![0])],
    };
    CorpusSplit::assemble(vec![train1, train2], vec![dev], Vec::new())
        .expect("hand fixture corpus")
}

fn check_metric_oracle() -> Check {
    let corpus = hand_fixture_corpus();
    ensure(corpus.relation_set.len() == 5, "fixture should have 5 relations")?;
    // Zero-initialized weights give probability 0.5 everywhere, so the
    // decision at any threshold is hand-countable.
    let zero = ModelState::new(ModelConfig {
        embedding_dim: 4,
        hidden_dim: 3,
        init_scale: 0.0,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    })
    .map_err(err_str)?;
    let train_facts = corpus.train_fact_names();

    // Threshold 0.4: all 10 decisions positive. Gold holds 2 of them, both
    // on intra pairs, and (alice, bob, rel00) is also a train fact.
    let low = relation_metrics(&zero, &corpus.dev, 0.4, &train_facts).map_err(err_str)?;
    let want_overall = Counts { tp: 2, fp: 8, fn_: 0 };
    let want_ign = Counts { tp: 1, fp: 8, fn_: 0 };
    ensure(low.overall == want_overall, format!("overall {:?}", low.overall))?;
    ensure(low.ign == want_ign, format!("ign {:?}", low.ign))?;
    ensure(low.intra == want_overall, format!("intra {:?}", low.intra))?;
    ensure(low.inter == Counts::default(), format!("inter {:?}", low.inter))?;
    ensure(
        low.micro_f1 == f1_from(2.0 / 10.0, 1.0),
        format!("micro_f1 {}", low.micro_f1),
    )?;
    ensure(
        low.ign_f1 == f1_from(1.0 / 9.0, 1.0),
        format!("ign_f1 {}", low.ign_f1),
    )?;
    ensure(low.inter_f1 == 0.0, format!("inter_f1 {}", low.inter_f1))?;

    // Threshold 0.6: nothing predicted; both gold facts become misses.
    let high = relation_metrics(&zero, &corpus.dev, 0.6, &train_facts).map_err(err_str)?;
    ensure(
        high.overall == Counts { tp: 0, fp: 0, fn_: 2 } && high.micro_f1 == 0.0,
        format!("high-threshold overall {:?}", high.overall),
    )?;

    // Threshold tuner vs a 1000-point grid on a randomly initialized model.
    let corpus = small_synth_corpus(5);
    let state = ModelState::new(ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        seed: 5,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    })
    .map_err(err_str)?;
    let mut samples: Vec<(f64, bool)> = Vec::new();
    for doc in &corpus.dev {
        for pair in doc.ordered_pairs() {
            let pred = predict_pair(&state, doc, pair).map_err(err_str)?;
            let gold = doc.gold_labels(pair, state.config.relation_count);
            for j in 0..state.config.relation_count {
                samples.push((pred.probs[j], gold[j] == 1.0));
            }
        }
    }
    let micro_f1_at = |t: f64| -> f64 {
        let mut c = Counts::default();
        for &(p, gold) in &samples {
            match (p >= t, gold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c.f1()
    };
    let grid_best = (0..1000)
        .map(|k| micro_f1_at(k as f64 / 999.0))
        .fold(0.0_f64, f64::max);
    let tuned = tune_threshold(&state, &corpus.dev).map_err(err_str)?;
    let tuned_f1 = micro_f1_at(tuned.value);
    ensure(
        tuned_f1 + 1e-12 >= grid_best,
        format!("tuned threshold F1 {tuned_f1} below grid best {grid_best}"),
    )
}

// ---------------------------------------------------------------------------
// Criteria 6-8: directional experiments on the 200/50/50 corpus.
// ---------------------------------------------------------------------------

struct Directional {
    table: CompareTable,
}

fn directional_corpus() -> docre::Result<CorpusSplit> {
    generate_synthetic(&SynthConfig {
        seed: 1,
        entities_min: 3,
        entities_max: 4,
        ..SynthConfig::default()
    })
}

fn directional_model_cfg(corpus: &CorpusSplit) -> ModelConfig {
    ModelConfig {
        encoder_kind: EncoderKind::SimpleBirnn,
        init_scale: 0.3,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    }
}

fn directional_train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}

fn run_directional() -> std::result::Result<Directional, String> {
    let corpus = directional_corpus().map_err(err_str)?;
    let table = compare_methods(
        &corpus,
        &directional_model_cfg(&corpus),
        &directional_train_cfg(),
        &[Method::Base, Method::Sief],
        &[1, 2, 3, 4, 5],
    )
    .map_err(err_str)?;
    Ok(Directional { table })
}

fn summary_mean(table: &CompareTable, method: &str, get: fn(&docre::eval::CompareSummary) -> f64) -> f64 {
    table
        .summaries
        .iter()
        .find(|s| s.method == method)
        .map(get)
        .expect("method summary present")
}

fn check_relation_gain(dir: &Directional) -> Check {
    let base = summary_mean(&dir.table, "base", |s| s.dev_micro_f1.mean);
    let sief = summary_mean(&dir.table, "sief", |s| s.dev_micro_f1.mean);
    ensure(
        sief > base,
        format!("mean dev micro-F1: sief {sief:.4} vs base {base:.4}"),
    )
}

fn check_evidence_gain(dir: &Directional) -> Check {
    let base = summary_mean(&dir.table, "base", |s| s.evidence_f1.mean);
    let sief = summary_mean(&dir.table, "sief", |s| s.evidence_f1.mean);
    ensure(
        sief > base,
        format!("mean evidence-F1: sief {sief:.4} vs base {base:.4}"),
    )
}

fn check_robustness_gain(dir: &Directional) -> Check {
    let per_seed = |method: &str| -> BTreeMap<u64, f64> {
        dir.table
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.seed, r.robustness_mean_dev))
            .collect()
    };
    let base = per_seed("base");
    let sief = per_seed("sief");
    let wins = base
        .iter()
        .filter(|(seed, &b)| sief.get(seed).is_some_and(|&s| s < b))
        .count();
    ensure(
        wins >= 4,
        format!("sief robustness lower in only {wins}/5 seeds"),
    )?;

    // Emit the removal scatter for one trained-with-sief model.
    let corpus = directional_corpus().map_err(err_str)?;
    let cfg = TrainConfig {
        epochs: 30,
        seed: 1,
        ..directional_train_cfg()
    };
    let (state, _) =
        train(&corpus, &directional_model_cfg(&corpus), &cfg, None).map_err(err_str)?;
    let robustness = robustness_probe(&state, &corpus.dev).map_err(err_str)?;
    ensure(!robustness.samples.is_empty(), "no scatter samples")?;
    let dir_path = out_dir();
    let mut csv = Vec::new();
    write_scatter_csv(&robustness.samples, &mut csv).map_err(err_str)?;
    std::fs::write(dir_path.join("scatter.csv"), &csv).map_err(err_str)?;
    let mut svg = Vec::new();
    write_scatter_svg(&robustness.samples, &mut svg).map_err(err_str)?;
    std::fs::write(dir_path.join("scatter.svg"), &svg).map_err(err_str)?;
    let csv_text = String::from_utf8(csv).map_err(err_str)?;
    ensure(
        csv_text.starts_with("p_full,p_removed\n") && csv_text.lines().count() > 1,
        "scatter CSV malformed",
    )?;
    let svg_text = String::from_utf8(svg).map_err(err_str)?;
    ensure(
        svg_text.contains("<svg") && svg_text.trim_end().ends_with("</svg>"),
        "scatter SVG malformed",
    )
}

// ---------------------------------------------------------------------------
// Criterion 9: the full method-comparison pipeline completes and produces
// a strictly well-formed CSV.
// ---------------------------------------------------------------------------

fn check_compare_pipeline() -> Check {
    let corpus = small_synth_corpus(7);
    let model_cfg = ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    };
    let train_cfg = TrainConfig {
        epochs: 6,
        ..TrainConfig::default()
    };
    let seeds = [1, 2, 3, 4, 5];
    let table = compare_methods(&corpus, &model_cfg, &train_cfg, &Method::ALL, &seeds)
        .map_err(err_str)?;
    ensure(
        table.rows.len() == Method::ALL.len() * seeds.len(),
        format!("{} rows", table.rows.len()),
    )?;
    let mut csv = Vec::new();
    write_compare_csv(&table, &mut csv).map_err(err_str)?;
    std::fs::write(out_dir().join("compare.csv"), &csv).map_err(err_str)?;
    let text = String::from_utf8(csv).map_err(err_str)?;
    let blocks: Vec<&str> = text.trim_end().split("\n\n").collect();
    ensure(blocks.len() == 2, format!("{} CSV blocks", blocks.len()))?;
    for (block, columns, rows) in [(blocks[0], 6, 26), (blocks[1], 9, 6)] {
        let lines: Vec<&str> = block.lines().collect();
        ensure(
            lines.len() == rows,
            format!("block has {} lines, want {rows}", lines.len()),
        )?;
        for line in &lines {
            ensure(
                line.split(',').count() == columns,
                format!("row {line:?} does not have {columns} columns"),
            )?;
        }
    }
    for row in &table.rows {
        ensure(
            row.dev_micro_f1.is_finite() && row.robustness_mean_dev.is_finite(),
            format!("non-finite entry for {}/{}", row.method, row.seed),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 10: the beta sweep emits one row per beta plus a base row, and
// 0.8 is the documented default threshold.
// ---------------------------------------------------------------------------

fn check_beta_sweep() -> Check {
    ensure(
        SiefConfig::default().beta == 0.8,
        format!("default beta {}", SiefConfig::default().beta),
    )?;
    let corpus = small_synth_corpus(11);
    let model_cfg = ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    };
    let train_cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    let betas: Vec<f64> = (0..10).map(|k| k as f64 * 0.2).collect();
    let rows = beta_sweep(&corpus, &model_cfg, &train_cfg, &betas).map_err(err_str)?;
    ensure(
        rows.len() == betas.len() + 1,
        format!("{} sweep rows", rows.len()),
    )?;
    ensure(
        rows[0].label == "base" && rows[0].beta.is_none(),
        "first row is not the base row",
    )?;
    for (row, &beta) in rows[1..].iter().zip(&betas) {
        ensure(
            row.beta == Some(beta) && row.dev_micro_f1.is_finite(),
            format!("row {} malformed", row.label),
        )?;
    }
    let mut csv = Vec::new();
    write_beta_sweep_csv(&rows, &mut csv).map_err(err_str)?;
    std::fs::write(out_dir().join("beta-sweep.csv"), &csv).map_err(err_str)?;
    let text = String::from_utf8(csv).map_err(err_str)?;
    ensure(
        text.lines().count() == rows.len() + 1,
        "sweep CSV line count",
    )
}

// ---------------------------------------------------------------------------
// Criterion 11: identical configurations reproduce byte-identical corpora,
// checkpoints, and reports.
// ---------------------------------------------------------------------------

fn check_reproducibility() -> Check {
    let dir = out_dir().join("repro");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(err_str)?;

    // Corpus files.
    let synth = SynthConfig {
        seed: 13,
        train_docs: 12,
        dev_docs: 6,
        test_docs: 3,
        relation_count: 4,
        entity_pool: 12,
        ..SynthConfig::default()
    };
    for run in ["a", "b"] {
        let corpus = generate_synthetic(&synth).map_err(err_str)?;
        for (name, docs) in [
            ("train", &corpus.train),
            ("dev", &corpus.dev),
            ("test", &corpus.test),
        ] {
            let raws: Vec<_> = docs.iter().map(|d| to_raw(d, &corpus.relation_set)).collect();
            emit_docred_json(&dir.join(format!("{name}-{run}.json")), &raws)
                .map_err(err_str)?;
        }
    }
    for name in ["train", "dev", "test"] {
        let a = std::fs::read(dir.join(format!("{name}-a.json"))).map_err(err_str)?;
        let b = std::fs::read(dir.join(format!("{name}-b.json"))).map_err(err_str)?;
        ensure(a == b, format!("{name} corpus files differ between runs"))?;
    }

    // Checkpoints and reports from two identical training runs.
    let corpus = generate_synthetic(&synth).map_err(err_str)?;
    let model_cfg = ModelConfig {
        embedding_dim: 8,
        hidden_dim: 6,
        ..ModelConfig::defaults(corpus.relation_set.len(), corpus.vocabulary.size())
    };
    let train_cfg = TrainConfig {
        epochs: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    for run in ["a", "b"] {
        let run_dir = dir.join(run);
        std::fs::create_dir_all(&run_dir).map_err(err_str)?;
        let (_, report) =
            train(&corpus, &model_cfg, &train_cfg, Some(&run_dir)).map_err(err_str)?;
        report.write_jsonl(&run_dir.join("train.jsonl")).map_err(err_str)?;
    }
    for name in ["model.ckpt", "trainstate.json", "train.jsonl"] {
        let a = std::fs::read(dir.join("a").join(name)).map_err(err_str)?;
        let b = std::fs::read(dir.join("b").join(name)).map_err(err_str)?;
        ensure(!a.is_empty(), format!("{name} is empty"))?;
        ensure(a == b, format!("{name} differs between identical runs"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    run_check(1, "importance-formula", &mut failures, check_importance_formula);
    run_check(2, "gradient-check", &mut failures, check_gradients);
    run_check(3, "estimator-consistency", &mut failures, check_estimator_consistency);
    run_check(4, "exact-subset-oracle", &mut failures, check_exact_subset_oracle);
    run_check(5, "metric-oracle", &mut failures, check_metric_oracle);

    match run_directional() {
        Ok(dir) => {
            run_check(6, "relation-f1-gain", &mut failures, || check_relation_gain(&dir));
            run_check(7, "evidence-f1-gain", &mut failures, || check_evidence_gain(&dir));
            run_check(8, "robustness-gain", &mut failures, || check_robustness_gain(&dir));
        }
        Err(msg) => {
            for (number, name) in [
                (6, "relation-f1-gain"),
                (7, "evidence-f1-gain"),
                (8, "robustness-gain"),
            ] {
                run_check(number, name, &mut failures, || {
                    Err(format!("directional experiment failed: {msg}"))
                });
            }
        }
    }

    run_check(9, "compare-pipeline", &mut failures, check_compare_pipeline);
    run_check(10, "beta-sweep", &mut failures, check_beta_sweep);
    run_check(11, "reproducibility", &mut failures, check_reproducibility);

    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
