use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use noun2verb::data::{self, Dataset, SupervisedExample, Utterance};
use noun2verb::diachronic;
use noun2verb::eval::{
    grouped_report, kl_against_gold, mean_with_se, production_cases,
    production_gold_distribution, roc_auc, subset_kl_protocol, topk_accuracy, FrequencyBaseline,
    LemmaMap, MetricReport, RocCurve, KL_EPSILON,
};
use noun2verb::harvest::{harvest_paraphrases, TokenizedCorpus};
use noun2verb::infer::{
    comprehend, comprehension_verb_marginal, produce, production_marginals, FrameSampleConfig,
};
use noun2verb::lexicon::load_embeddings;
use noun2verb::model::{HeadSpec, ModelKind, NetworkDims, Noun2VerbModel};
use noun2verb::relations::RelationType;
use noun2verb::train::train_with_hook;
use noun2verb::{Error, Result};

use crate::config::{self, ResolvedConfig};
use crate::manifest::RunManifest;
use crate::{Cli, Command};

pub fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let out = cli.out;
    match cli.command {
        Command::Harvest {
            corpus,
            verb,
            context,
            relation,
            top,
        } => cmd_harvest(&out, seed, &corpus, &verb, &context, &relation, top),
        Command::Train {
            model,
            config,
            supervised,
            unsupervised,
            embeddings,
            exclude_targets,
        } => cmd_train(
            &out,
            seed,
            &model,
            config.as_deref(),
            &supervised,
            unsupervised.as_deref(),
            &embeddings,
            &exclude_targets,
        ),
        Command::Eval {
            model,
            frequency_from,
            embeddings,
            test,
            lemmas,
            group_by,
            k_max,
            subsets,
            subset_size,
            model_name,
            language,
        } => cmd_eval(EvalArgs {
            out,
            seed,
            model,
            frequency_from,
            embeddings,
            test,
            lemmas,
            group_by,
            k_max,
            subsets,
            subset_size,
            model_name,
            language,
        }),
        Command::Comprehend {
            model,
            embeddings,
            verb,
            context,
            top,
            frame_samples,
        } => cmd_comprehend(&out, seed, &model, &embeddings, &verb, &context, top, frame_samples),
        Command::Produce {
            model,
            embeddings,
            verb,
            relation,
            top,
            candidates,
            frame_samples,
        } => cmd_produce(
            &out,
            seed,
            &model,
            &embeddings,
            &verb,
            &relation,
            top,
            candidates.as_deref(),
            frame_samples,
        ),
        Command::Changepoint {
            counts,
            alpha,
            permutations,
            min_segment,
            theta_f,
        } => cmd_changepoint(&out, seed, &counts, alpha, permutations, min_segment, theta_f),
        Command::Report { input } => cmd_report(&out, seed, &input),
    }
}

fn parse_relation(symbol: &str) -> Result<RelationType> {
    symbol.parse()
}

fn frame_config(frame_samples: Option<usize>, seed: u64, k: usize) -> FrameSampleConfig {
    match frame_samples {
        Some(n) => FrameSampleConfig::sampled(n, seed),
        None => {
            let mut cfg = FrameSampleConfig::default_for(k);
            cfg.seed = seed;
            cfg
        }
    }
}

// ── harvest ─────────────────────────────────────────────────────────

fn cmd_harvest(
    out: &Path,
    seed: u64,
    corpus_path: &Path,
    verb: &str,
    context: &str,
    relation: &str,
    top: usize,
) -> Result<()> {
    let relation = parse_relation(relation)?;
    let mut manifest = RunManifest::new("harvest", seed);
    manifest.add_input(corpus_path)?;
    manifest.set("verb", verb);
    manifest.set("context", context);
    manifest.set("relation", relation);
    manifest.set("top", top);
    let out_file = out.join("harvest.tsv");
    manifest.add_output(&out_file);
    manifest.write(out)?;

    let corpus = TokenizedCorpus::load(corpus_path)?;
    let utterance = Utterance::new(verb, context)?;
    let ranked = harvest_paraphrases(&corpus, &utterance, relation, top)?;
    let mut text = String::new();
    for (v, count) in &ranked {
        writeln!(text, "{v}\t{count}").unwrap();
        println!("{v}\t{count}");
    }
    fs::write(&out_file, text)?;
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────

fn load_merged_dataset(supervised: &Path, unsupervised: Option<&Path>) -> Result<Dataset> {
    let mut dataset = data::load_dataset(supervised)?;
    if let Some(unsup_path) = unsupervised {
        let extra = data::load_dataset(unsup_path)?;
        let seen: HashSet<Utterance> = dataset.unsupervised.iter().cloned().collect();
        for u in extra.unsupervised {
            if seen.contains(&u) {
                return Err(Error::format(format!(
                    "duplicate unsupervised pair ({}, {}) across files",
                    u.denominal, u.context
                )));
            }
            dataset.unsupervised.push(u);
        }
        let sup_seen: HashSet<Utterance> =
            dataset.supervised.iter().map(|e| e.utterance.clone()).collect();
        for ex in extra.supervised {
            if sup_seen.contains(&ex.utterance) {
                return Err(Error::format(format!(
                    "duplicate supervised pair ({}, {}) across files",
                    ex.utterance.denominal, ex.utterance.context
                )));
            }
            dataset.supervised.push(ex);
        }
    }
    Ok(dataset)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    out: &Path,
    seed: u64,
    model_kind: &str,
    config_path: Option<&Path>,
    supervised: &Path,
    unsupervised: Option<&Path>,
    embeddings_path: &Path,
    exclude_targets: &[String],
) -> Result<()> {
    let kind = ModelKind::parse(model_kind)?;
    let ResolvedConfig {
        train: train_config,
        model: model_settings,
        resolved,
    } = match config_path {
        Some(path) => config::parse_file(path, seed)?,
        None => config::resolve(BTreeMap::new(), seed)?,
    };

    let mut manifest = RunManifest::new("train", seed);
    manifest.add_input(supervised)?;
    if let Some(p) = unsupervised {
        manifest.add_input(p)?;
    }
    manifest.add_input(embeddings_path)?;
    if let Some(p) = config_path {
        manifest.add_input(p)?;
    }
    for (k, v) in &resolved {
        manifest.set(k, v);
    }
    manifest.set("model", model_kind);
    if !exclude_targets.is_empty() {
        manifest.set("exclude_targets", exclude_targets.join(","));
    }
    let ckpt_path = out.join("model.ckpt");
    let log_path = out.join("training_log.tsv");
    manifest.add_output(&ckpt_path);
    manifest.add_output(&log_path);
    manifest.write(out)?;

    let mut dataset = load_merged_dataset(supervised, unsupervised)?;
    for target in exclude_targets {
        let removed = dataset.exclude_denominal_target(target);
        eprintln!("excluded target {target:?}: {removed} records removed");
    }
    let emb = load_embeddings(embeddings_path, None)?;
    let heads = HeadSpec::from_dataset(&dataset, model_settings.frame_cardinality);
    let dims = NetworkDims {
        embed_dim: emb.dimension(),
        hidden: model_settings.hidden,
    };
    let mut model = Noun2VerbModel::new(kind, heads, dims, seed)?;

    let out_dir = out.to_path_buf();
    let report = train_with_hook(&mut model, &emb, &dataset, &train_config, &mut |epoch, m| {
        let path = out_dir.join(format!("checkpoint_epoch{epoch}.ckpt"));
        m.save(&path)?;
        Ok(Some(path))
    })?;
    model.save(&ckpt_path)?;
    fs::write(&log_path, report.metrics_log())?;
    if let Some(last) = report.epochs.last() {
        println!(
            "trained {} model: {} epochs, final loss {:.6} ({} supervised, {} unsupervised records)",
            model_kind,
            report.epochs.len(),
            last.total,
            dataset.supervised.len(),
            dataset.unsupervised.len()
        );
    }
    println!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────

pub struct EvalArgs {
    pub out: PathBuf,
    pub seed: u64,
    pub model: Option<PathBuf>,
    pub frequency_from: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub test: PathBuf,
    pub lemmas: Option<PathBuf>,
    pub group_by: Option<String>,
    pub k_max: usize,
    pub subsets: Option<usize>,
    pub subset_size: usize,
    pub model_name: Option<String>,
    pub language: String,
}

/// Per-example comprehension rankings and divergences, plus production
/// rankings over the closed candidate pool of test utterances.
struct EvalOutcome {
    comprehension_cases: Vec<(Vec<String>, HashSet<String>)>,
    comprehension_kl: Vec<f64>,
    production_cases_ranked: Vec<(Vec<String>, HashSet<String>)>,
    production_kl: Vec<f64>,
}

fn evaluate_model(
    model: &Noun2VerbModel,
    emb: &noun2verb::lexicon::EmbeddingTable,
    test: &[SupervisedExample],
    k_max: usize,
    lemmas: &LemmaMap,
    seed: u64,
) -> Result<EvalOutcome> {
    let frames = frame_config(None, seed, model.heads.frame_cardinality);
    let mut comprehension_cases = Vec::new();
    let mut comprehension_kl = Vec::new();
    for ex in test {
        let marginal = comprehension_verb_marginal(model, emb, &ex.utterance, frames)?;
        let mut scored: Vec<(String, f64)> = model
            .heads
            .verb_candidates
            .iter()
            .cloned()
            .zip(marginal.iter().copied())
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let predictions: Vec<String> = scored
            .iter()
            .take(k_max)
            .map(|(v, _)| lemmas.normalize(v).to_string())
            .collect();
        let gold = lemmas.normalize_set(&ex.gold_verbs());
        comprehension_cases.push((predictions, gold));

        let gold_dist = data::empirical_distribution(ex)?;
        comprehension_kl.push(kl_against_gold(
            &gold_dist,
            |token| model.verb_index(token).map(|i| marginal[i]).unwrap_or(0.0),
            KL_EPSILON,
        )?);
    }

    let candidates: Vec<Utterance> = test.iter().map(|e| e.utterance.clone()).collect();
    let groups = production_cases(test);
    let mut production_cases_ranked = Vec::new();
    let mut production_kl = Vec::new();
    for (interp, members) in &groups {
        let ranking = produce(model, emb, interp, k_max, frames, Some(&candidates))?;
        let predictions: Vec<String> = ranking
            .iter_items()
            .map(|u| format!("{} {}", u.denominal, u.context))
            .collect();
        let gold: HashSet<String> = members
            .iter()
            .map(|(u, _)| format!("{} {}", u.denominal, u.context))
            .collect();
        production_cases_ranked.push((predictions, gold));

        let gold_dist = production_gold_distribution(members)?;
        let (p_denominal, _) = production_marginals(model, emb, interp, frames)?;
        production_kl.push(kl_against_gold(
            &gold_dist,
            |token| {
                model
                    .denominal_index(token)
                    .map(|i| p_denominal[i])
                    .unwrap_or(0.0)
            },
            KL_EPSILON,
        )?);
    }
    Ok(EvalOutcome {
        comprehension_cases,
        comprehension_kl,
        production_cases_ranked,
        production_kl,
    })
}

fn evaluate_frequency_baseline(
    baseline: &FrequencyBaseline,
    test: &[SupervisedExample],
    k_max: usize,
    lemmas: &LemmaMap,
) -> Result<EvalOutcome> {
    let ranked_verbs: Vec<String> = baseline
        .rank_verbs(k_max)
        .iter_items()
        .map(|v| lemmas.normalize(v).to_string())
        .collect();
    let mut comprehension_cases = Vec::new();
    let mut comprehension_kl = Vec::new();
    for ex in test {
        comprehension_cases.push((ranked_verbs.clone(), lemmas.normalize_set(&ex.gold_verbs())));
        let gold_dist = data::empirical_distribution(ex)?;
        comprehension_kl.push(kl_against_gold(
            &gold_dist,
            |token| baseline.verb_probability(token),
            KL_EPSILON,
        )?);
    }

    let candidates: Vec<Utterance> = test.iter().map(|e| e.utterance.clone()).collect();
    let groups = production_cases(test);
    let ranked_utterances: Vec<String> = baseline
        .rank_candidate_utterances(&candidates, k_max)
        .iter_items()
        .map(|u| format!("{} {}", u.denominal, u.context))
        .collect();
    let mut production_cases_ranked = Vec::new();
    let mut production_kl = Vec::new();
    for members in groups.values() {
        let gold: HashSet<String> = members
            .iter()
            .map(|(u, _)| format!("{} {}", u.denominal, u.context))
            .collect();
        production_cases_ranked.push((ranked_utterances.clone(), gold));
        let gold_dist = production_gold_distribution(members)?;
        production_kl.push(kl_against_gold(
            &gold_dist,
            |token| baseline.denominal_probability(token),
            KL_EPSILON,
        )?);
    }
    Ok(EvalOutcome {
        comprehension_cases,
        comprehension_kl,
        production_cases_ranked,
        production_kl,
    })
}

fn metric_rows(
    task: &str,
    cases: &[(Vec<String>, HashSet<String>)],
    kls: &[f64],
    k_max: usize,
) -> Result<(Vec<MetricReport>, RocCurve)> {
    let mut rows = Vec::new();
    for k in 1..=k_max {
        rows.push(topk_accuracy(cases, k)?);
    }
    let roc = roc_auc(cases, k_max)?;
    rows.push(MetricReport::new("auc", roc.auc, 0.0, cases.len()));
    let (kl_mean, kl_se) = mean_with_se(kls);
    rows.push(MetricReport {
        metric: "kl".into(),
        value: kl_mean,
        std_error: kl_se,
        group: None,
        sample_size: kls.len(),
    });
    let _ = task;
    Ok((rows, roc))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let test_set = data::load_dataset(&args.test)?.supervised;
    if test_set.is_empty() {
        return Err(Error::format("evaluation file has no supervised records"));
    }
    let lemmas = match &args.lemmas {
        Some(path) => LemmaMap::load(path)?,
        None => LemmaMap::default(),
    };

    let mut manifest = RunManifest::new("eval", args.seed);
    manifest.add_input(&args.test)?;
    if let Some(p) = &args.lemmas {
        manifest.add_input(p)?;
    }

    let (model_name, outcome) = match (&args.model, &args.frequency_from) {
        (Some(ckpt), None) => {
            let embeddings_path = args.embeddings.as_ref().ok_or_else(|| {
                Error::contract("--embeddings is required when evaluating a checkpoint")
            })?;
            manifest.add_input(ckpt)?;
            manifest.add_input(embeddings_path)?;
            let model = Noun2VerbModel::load(ckpt)?;
            let emb = load_embeddings(embeddings_path, None)?;
            let name = args
                .model_name
                .clone()
                .unwrap_or_else(|| model.kind.as_str().to_string());
            let outcome =
                evaluate_model(&model, &emb, &test_set, args.k_max, &lemmas, args.seed)?;
            (name, outcome)
        }
        (None, Some(train_path)) => {
            manifest.add_input(train_path)?;
            let train_set = data::load_dataset(train_path)?;
            let baseline = FrequencyBaseline::fit(&train_set)?;
            let name = args.model_name.clone().unwrap_or_else(|| "frequency".into());
            let outcome =
                evaluate_frequency_baseline(&baseline, &test_set, args.k_max, &lemmas)?;
            (name, outcome)
        }
        _ => {
            return Err(Error::contract(
                "exactly one of --model or --frequency-from is required",
            ))
        }
    };

    let metrics_path = args
        .out
        .join(format!("metrics_{model_name}_{}.csv", args.language));
    let roc_path = args
        .out
        .join(format!("roc_{model_name}_{}.csv", args.language));
    manifest.set("model_name", &model_name);
    manifest.set("language", &args.language);
    manifest.set("k_max", args.k_max);
    if let Some(g) = &args.group_by {
        manifest.set("group_by", g);
    }
    manifest.add_output(&metrics_path);
    manifest.add_output(&roc_path);
    manifest.write(&args.out)?;

    let mut rows: Vec<(String, MetricReport)> = Vec::new();
    let (comp_rows, comp_roc) = metric_rows(
        "comprehension",
        &outcome.comprehension_cases,
        &outcome.comprehension_kl,
        args.k_max,
    )?;
    rows.extend(comp_rows.into_iter().map(|r| ("comprehension".to_string(), r)));
    let (prod_rows, prod_roc) = metric_rows(
        "production",
        &outcome.production_cases_ranked,
        &outcome.production_kl,
        args.k_max,
    )?;
    rows.extend(prod_rows.into_iter().map(|r| ("production".to_string(), r)));

    if let Some(n_subsets) = args.subsets {
        let size = args.subset_size.min(outcome.comprehension_kl.len());
        let subset = subset_kl_protocol(&outcome.comprehension_kl, size, n_subsets, args.seed)?;
        rows.push(("comprehension".to_string(), subset));
    }

    if let Some(group_key) = &args.group_by {
        let observations: Vec<(String, f64)> = test_set
            .iter()
            .zip(&outcome.comprehension_kl)
            .map(|(ex, kl)| {
                let group = match group_key.as_str() {
                    "adult_child" => ex.source.as_str().to_string(),
                    _ => ex
                        .decade
                        .map(|d| d.to_string())
                        .unwrap_or_else(|| "none".into()),
                };
                (group, *kl)
            })
            .collect();
        for report in grouped_report("kl", &observations) {
            rows.push(("comprehension".to_string(), report));
        }
    }

    let mut csv = String::from("model,language,task,metric,group,value,std_error,sample_size\n");
    for (task, r) in &rows {
        writeln!(
            csv,
            "{model_name},{language},{task},{metric},{group},{value},{se},{n}",
            language = args.language,
            metric = r.metric,
            group = r.group.as_deref().unwrap_or(""),
            value = r.value,
            se = r.std_error,
            n = r.sample_size
        )
        .unwrap();
    }
    fs::write(&metrics_path, &csv)?;

    let mut roc_csv = String::from("model,language,task,k,accuracy\n");
    for (task, roc) in [("comprehension", &comp_roc), ("production", &prod_roc)] {
        for (k, acc) in &roc.points {
            writeln!(roc_csv, "{model_name},{},{task},{k},{acc}", args.language).unwrap();
        }
    }
    fs::write(&roc_path, &roc_csv)?;
    println!("metrics written to {}", metrics_path.display());
    Ok(())
}

// ── comprehend / produce ────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
fn cmd_comprehend(
    out: &Path,
    seed: u64,
    ckpt: &Path,
    embeddings_path: &Path,
    verb: &str,
    context: &str,
    top: usize,
    frame_samples: Option<usize>,
) -> Result<()> {
    let mut manifest = RunManifest::new("comprehend", seed);
    manifest.add_input(ckpt)?;
    manifest.add_input(embeddings_path)?;
    manifest.set("verb", verb);
    manifest.set("context", context);
    manifest.set("top", top);
    let out_file = out.join("comprehend.tsv");
    manifest.add_output(&out_file);
    manifest.write(out)?;

    let model = Noun2VerbModel::load(ckpt)?;
    let emb = load_embeddings(embeddings_path, None)?;
    let utterance = Utterance::new(verb, context)?;
    let frames = frame_config(frame_samples, seed, model.heads.frame_cardinality);
    let ranking = comprehend(&model, &emb, &utterance, top, frames)?;
    let mut text = String::new();
    for (interp, score) in &ranking.items {
        writeln!(text, "{}\t{}\t{score}", interp.verb, interp.relation).unwrap();
        println!("{}\t{}\t{score}", interp.verb, interp.relation);
    }
    fs::write(&out_file, text)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_produce(
    out: &Path,
    seed: u64,
    ckpt: &Path,
    embeddings_path: &Path,
    verb: &str,
    relation: &str,
    top: usize,
    candidates_path: Option<&Path>,
    frame_samples: Option<usize>,
) -> Result<()> {
    let relation = parse_relation(relation)?;
    let mut manifest = RunManifest::new("produce", seed);
    manifest.add_input(ckpt)?;
    manifest.add_input(embeddings_path)?;
    if let Some(p) = candidates_path {
        manifest.add_input(p)?;
    }
    manifest.set("verb", verb);
    manifest.set("relation", relation);
    manifest.set("top", top);
    let out_file = out.join("produce.tsv");
    manifest.add_output(&out_file);
    manifest.write(out)?;

    let model = Noun2VerbModel::load(ckpt)?;
    let emb = load_embeddings(embeddings_path, None)?;
    let candidates = match candidates_path {
        Some(path) => Some(data::load_dataset(path)?.unsupervised),
        None => None,
    };
    let interp = data::Interpretation::new(verb, relation);
    let frames = frame_config(frame_samples, seed, model.heads.frame_cardinality);
    let ranking = produce(&model, &emb, &interp, top, frames, candidates.as_deref())?;
    let mut text = String::new();
    for (u, score) in &ranking.items {
        writeln!(text, "{}\t{}\t{score}", u.denominal, u.context).unwrap();
        println!("{}\t{}\t{score}", u.denominal, u.context);
    }
    fs::write(&out_file, text)?;
    Ok(())
}

// ── changepoint ─────────────────────────────────────────────────────

fn cmd_changepoint(
    out: &Path,
    seed: u64,
    counts_path: &Path,
    alpha: f64,
    permutations: usize,
    min_segment: usize,
    theta_f: u64,
) -> Result<()> {
    let mut manifest = RunManifest::new("changepoint", seed);
    manifest.add_input(counts_path)?;
    manifest.set("alpha", alpha);
    manifest.set("permutations", permutations);
    manifest.set("min_segment", min_segment);
    manifest.set("theta_f", theta_f);
    let cp_path = out.join("changepoints.csv");
    let z_path = out.join("zseries.csv");
    manifest.add_output(&cp_path);
    manifest.add_output(&z_path);
    manifest.write(out)?;

    let series = diachronic::load_counts(counts_path)?;
    let kept = diachronic::frequency_filter(series, theta_f);
    let mut cp_csv = String::from("word,year,index,p_value,mean_shift\n");
    let mut z_csv = String::from("word,year,q,z\n");
    let mut found = 0usize;
    for s in &kept {
        let (years, ratios) = diachronic::noun_ratio(s)?;
        let z = diachronic::normalize_zscore(&ratios)?;
        for ((year, q), zv) in years.iter().zip(&ratios).zip(&z) {
            writeln!(z_csv, "{},{year},{q},{zv}", s.word).unwrap();
        }
        if z.len() < 2 * min_segment {
            eprintln!(
                "skipping {:?}: {} usable years is shorter than 2*min_segment",
                s.word,
                z.len()
            );
            continue;
        }
        if let Some(cp) =
            diachronic::detect_change_point(&s.word, &years, &z, permutations, alpha, min_segment, seed)?
        {
            writeln!(
                cp_csv,
                "{},{},{},{},{}",
                cp.word, cp.year, cp.index, cp.p_value, cp.mean_shift
            )
            .unwrap();
            println!("{}: change point at {} (p = {})", cp.word, cp.year, cp.p_value);
            found += 1;
        } else {
            println!("{}: no significant change point", s.word);
        }
    }
    fs::write(&cp_path, cp_csv)?;
    fs::write(&z_path, z_csv)?;
    println!("{found} change points over {} words", kept.len());
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────

fn cmd_report(out: &Path, seed: u64, input: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("report", seed);
    let mut rows: Vec<(String, String, String, f64, f64)> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("metrics") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    for path in &entries {
        manifest.add_input(path)?;
        let text = fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::format_at(
                    path,
                    lineno + 1,
                    format!("expected 8 columns, got {}", fields.len()),
                ));
            }
            // model,language,task,metric,group,value,std_error,sample_size
            if fields[3] == "kl" && fields[4].is_empty() {
                let value: f64 = fields[5].parse().map_err(|_| {
                    Error::format_at(path, lineno + 1, format!("bad value {:?}", fields[5]))
                })?;
                let se: f64 = fields[6].parse().map_err(|_| {
                    Error::format_at(path, lineno + 1, format!("bad std error {:?}", fields[6]))
                })?;
                rows.push((
                    fields[0].to_string(),
                    fields[1].to_string(),
                    fields[2].to_string(),
                    value,
                    se,
                ));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::format(format!(
            "no KL metric rows found under {}",
            input.display()
        )));
    }
    rows.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));

    let summary_csv_path = out.join("summary.csv");
    let summary_json_path = out.join("summary.json");
    manifest.add_output(&summary_csv_path);
    manifest.add_output(&summary_json_path);
    manifest.write(out)?;

    let mut csv = String::from("model,language,task,kl,std_error\n");
    let mut json_rows = Vec::new();
    for (model, language, task, value, se) in &rows {
        writeln!(csv, "{model},{language},{task},{value},{se}").unwrap();
        let mut obj = BTreeMap::new();
        obj.insert("model".to_string(), serde_json::Value::from(model.clone()));
        obj.insert("language".to_string(), serde_json::Value::from(language.clone()));
        obj.insert("task".to_string(), serde_json::Value::from(task.clone()));
        obj.insert("kl".to_string(), serde_json::Value::from(*value));
        obj.insert("std_error".to_string(), serde_json::Value::from(*se));
        json_rows.push(serde_json::Value::Object(obj.into_iter().collect()));
    }
    fs::write(&summary_csv_path, &csv)?;
    fs::write(
        &summary_json_path,
        serde_json::to_string_pretty(&serde_json::Value::Array(json_rows))?,
    )?;
    println!("{} summary rows written to {}", rows.len(), summary_csv_path.display());
    Ok(())
}
