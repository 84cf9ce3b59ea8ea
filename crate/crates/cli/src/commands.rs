use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use misswrite_core::classifier::io::{load_context_model, save_context_model};
use misswrite_core::classifier::{ContextModel, WindowEncoder};
use misswrite_core::corpus::{load_corpus, load_corpus_lenient, read_jsonl, write_corpus, write_jsonl};
use misswrite_core::drg::{cost_delta_report, levels_from_findings, CostReport, DrgGroupTable};
use misswrite_core::eval::{gen_synthetic_corpus, run_ablation, score, scores_csv, GoldMention, Paraphrases, SynthResources, SyntheticCorpus, Templates};
use misswrite_core::features::{FeatureExtractor, LabeledContext};
use misswrite_core::icd::IcdIndex;
use misswrite_core::lexicon::{Lexicon, LexiconKind};
use misswrite_core::pipeline::{batch_detect, read_findings, BatchReport, ModelContextJudge, Models, RelationJudge};
use misswrite_core::recall::DiseaseMatcher;
use misswrite_core::relation::finetune::{identity_pairs, RelationModel};
use misswrite_core::relation::pairs::{gen_pretraining_pairs, load_back_translation, load_coded_records, parse_coded_records, read_pairs, write_pairs};
use misswrite_core::relation::io::{load_relation_model, save_relation_model};
use misswrite_core::workflow::{train_context_model, train_relation_model};
use misswrite_core::{data, Error};

use crate::config::RunConfig;
use crate::{CliError, Command};

pub const CONTEXT_MODEL: &str = "context.bin";
pub const RELATION_MODEL: &str = "relation.bin";

type Outcome = Result<String, CliError>;

fn lexicon(kind: LexiconKind, path: &Option<PathBuf>, builtin: fn() -> misswrite_core::Result<Lexicon>) -> misswrite_core::Result<Lexicon> {
    match path {
        Some(p) => Lexicon::load(kind, p),
        None => builtin(),
    }
}

/// Data tables, from the configured paths or the built-in copies.
struct Resources {
    diseases: Lexicon,
    exclusion: Lexicon,
    extractor: FeatureExtractor,
    matcher: DiseaseMatcher,
    icd: IcdIndex,
    paraphrases: Paraphrases,
}

impl Resources {
    fn load(cfg: &RunConfig) -> misswrite_core::Result<Self> {
        let d = &cfg.data;
        let diseases = lexicon(LexiconKind::DiseaseNames, &d.diseases, data::disease_names)?;
        let negation = lexicon(LexiconKind::NegationWords, &d.negation, data::negation_words)?;
        let enumerators = lexicon(LexiconKind::EnumeratorPatterns, &d.enumerators, data::enumerator_patterns)?;
        let exclusion = lexicon(LexiconKind::ChronicExclusion, &d.exclusion, data::chronic_exclusion)?;
        let icd = match &d.icd {
            Some(p) => IcdIndex::load(p)?,
            None => data::icd_table()?,
        };
        let paraphrases = match &d.paraphrases {
            Some(p) => Paraphrases::new(read_pairs(p)?),
            None => Paraphrases::builtin()?,
        };
        let extractor = FeatureExtractor::new(&negation, &enumerators)?.with_scope(cfg.context.scope);
        let matcher = DiseaseMatcher::new(&diseases)?;
        Ok(Resources { diseases, exclusion, extractor, matcher, icd, paraphrases })
    }

    fn drg(cfg: &RunConfig) -> misswrite_core::Result<DrgGroupTable> {
        match &cfg.data.drg_groups {
            Some(p) => DrgGroupTable::load(p),
            None => DrgGroupTable::builtin(),
        }
    }
}

fn create(path: &Path) -> misswrite_core::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> misswrite_core::Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_report(path: &Path, value: &CostReport) -> misswrite_core::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn load_context(dir: &Path) -> misswrite_core::Result<ContextModel<WindowEncoder>> {
    load_context_model(dir.join(CONTEXT_MODEL))
}

fn load_relation(dir: &Path) -> misswrite_core::Result<RelationModel> {
    load_relation_model(dir.join(RELATION_MODEL))
}

fn load_gold(path: &Path) -> misswrite_core::Result<BTreeSet<(String, String)>> {
    let mentions: Vec<GoldMention> = read_jsonl(path)?;
    Ok(SyntheticCorpus { records: Vec::new(), mentions }.gold())
}

pub fn run(command: Command, cfg: &RunConfig) -> Outcome {
    match command {
        Command::GenSynthetic { out } => gen_synthetic(cfg, &out),
        Command::GenPairs { corpus, out, coded, back_translation } => gen_pairs(cfg, &corpus, &out, coded, back_translation),
        Command::TrainContext { contexts, out } => train_context(cfg, &contexts, &out),
        Command::TrainRelation { pairs, pretrain, out } => train_relation(cfg, &pairs, pretrain.as_deref(), &out),
        Command::Detect { corpus, models, out } => detect(cfg, &corpus, &models, &out),
        Command::Evaluate { findings, gold } => evaluate(&findings, &gold),
        Command::Ablate { corpus, gold, models, out } => ablate(cfg, &corpus, &gold, &models, &out),
        Command::DrgImpact { corpus, findings, models, precision, out } => drg_impact(cfg, &corpus, &findings, models.as_deref(), precision, &out),
    }
}

fn gen_synthetic(cfg: &RunConfig, out: &Path) -> Outcome {
    let res = Resources::load(cfg)?;
    let templates = match &cfg.data.templates {
        Some(p) => Templates::load(p)?,
        None => Templates::builtin()?,
    };
    let drg = Resources::drg(cfg)?;
    let synth = SynthResources {
        diseases: &res.diseases,
        templates: &templates,
        paraphrases: &res.paraphrases,
        matcher: &res.matcher,
        icd: &res.icd,
        drg: &drg,
    };
    let corpus = gen_synthetic_corpus(&cfg.synth, &synth)?;
    fs::create_dir_all(out).map_err(Error::from)?;
    write_corpus(out.join("corpus.jsonl"), &corpus.records)?;

    let mut w = create(&out.join("gold.jsonl"))?;
    write_jsonl(&mut w, &corpus.mentions)?;
    w.flush().map_err(Error::from)?;

    let contexts = corpus.labeled_contexts(&res.matcher, cfg.context.train.max_context)?;
    let mut w = create(&out.join("contexts.jsonl"))?;
    write_jsonl(&mut w, &contexts)?;
    w.flush().map_err(Error::from)?;

    let mut relations = corpus.relation_pairs(&res.paraphrases)?;
    relations.extend(res.paraphrases.pairs.iter().cloned());
    let mut w = create(&out.join("relations.tsv"))?;
    write_pairs(&mut w, &relations)?;
    w.flush().map_err(Error::from)?;

    Ok(format!(
        "gen-synthetic: {} records, {} gold missing, {} contexts, {} relation pairs -> {}",
        corpus.records.len(),
        corpus.gold().len(),
        contexts.len(),
        relations.len(),
        out.display()
    ))
}

fn gen_pairs(cfg: &RunConfig, corpus: &Path, out: &Path, coded: Option<PathBuf>, back_translation: Option<PathBuf>) -> Outcome {
    let res = Resources::load(cfg)?;
    let records = load_corpus(corpus)?;
    let coded = match coded.as_ref().or(cfg.data.coded.as_ref()) {
        Some(p) => load_coded_records(p)?,
        None => parse_coded_records(data::CODED_DIAGNOSES)?,
    };
    let mut pairs = gen_pretraining_pairs(&coded, &records, &res.icd, cfg.pairs_n_random, cfg.pairs_sibling_scope, cfg.seed)?;
    if let Some(p) = back_translation {
        let known: BTreeSet<_> = pairs.iter().map(|p| p.key()).collect();
        pairs.extend(load_back_translation(p)?.into_iter().filter(|p| !known.contains(&p.key())));
    }
    let mut w = create(out)?;
    write_pairs(&mut w, &pairs)?;
    w.flush().map_err(Error::from)?;
    Ok(format!("gen-pairs: {} pairs -> {}", pairs.len(), out.display()))
}

fn train_context(cfg: &RunConfig, contexts: &Path, out: &Path) -> Outcome {
    let res = Resources::load(cfg)?;
    let samples: Vec<LabeledContext> = read_jsonl(contexts)?;
    if samples.is_empty() {
        return Err(Error::Invalid(format!("{}: no labeled contexts", contexts.display())).into());
    }
    let (model, history) = train_context_model(&samples, &res.extractor, &cfg.context, &res.diseases, &res.exclusion)?;
    fs::create_dir_all(out).map_err(Error::from)?;
    let path = out.join(CONTEXT_MODEL);
    save_context_model(&path, &model)?;
    let last = history.last().map_or(f64::NAN, |m| m.train_loss);
    Ok(format!("train-context: {} contexts, {} epochs, final loss {last:.6} -> {}", samples.len(), history.len(), path.display()))
}

fn train_relation(cfg: &RunConfig, pairs: &Path, pretrain: Option<&Path>, out: &Path) -> Outcome {
    let mut labeled = read_pairs(pairs)?;
    if labeled.iter().any(|p| p.relation.is_none()) {
        return Err(Error::Invalid(format!("{}: every labeled pair needs a relation", pairs.display())).into());
    }
    if cfg.relation_identity_pairs {
        let res = Resources::load(cfg)?;
        labeled.extend(identity_pairs(res.diseases.iter())?);
    }
    let pretrain = match pretrain {
        Some(p) => read_pairs(p)?,
        None => Vec::new(),
    };
    let (model, history) = train_relation_model(&labeled, &pretrain, &cfg.relation)?;
    fs::create_dir_all(out).map_err(Error::from)?;
    let path = out.join(RELATION_MODEL);
    save_relation_model(&path, &model)?;
    let acc = history.finetune.last().map_or(f64::NAN, |m| m.accuracy);
    Ok(format!(
        "train-relation: {} labeled, {} pretraining pairs, train accuracy {acc:.4} -> {}",
        labeled.len(),
        pretrain.len(),
        path.display()
    ))
}

fn run_detect(cfg: &RunConfig, res: &Resources, corpus: &Path, models: &Path) -> Result<BatchReport, CliError> {
    let (records, errors) = load_corpus_lenient(corpus)?;
    let context = if cfg.pipeline.use_context { Some(load_context(models)?) } else { None };
    let relation = if cfg.pipeline.use_relation { Some(load_relation(models)?) } else { None };
    let judge = context.as_ref().map(|m| ModelContextJudge::new(m, res.extractor.clone()));
    let models = Models {
        context: judge.as_ref().map(|j| j as _),
        relation: relation.as_ref().map(|r| r as &dyn RelationJudge),
    };
    let mut report = batch_detect(&records, &models, &res.matcher, &cfg.pipeline, cfg.parallelism)?;
    report.add_load_errors(&errors);
    Ok(report)
}

fn detect(cfg: &RunConfig, corpus: &Path, models: &Path, out: &Path) -> Outcome {
    let res = Resources::load(cfg)?;
    let report = run_detect(cfg, &res, corpus, models)?;
    write_text(out, &report.to_jsonl()?)?;
    let s = &report.summary;
    let line = format!("detect: {} records, {} findings, {} failed -> {}", s.records, s.findings, s.failed, out.display());
    if report.has_errors() {
        for e in &s.errors {
            let at = match (&e.record_id, e.line) {
                (Some(id), _) => format!("record {id}"),
                (None, Some(l)) => format!("line {l}"),
                (None, None) => "input".to_string(),
            };
            eprintln!("{at}: {}", e.message);
        }
        return Err(CliError::Partial(line));
    }
    Ok(line)
}

fn evaluate(findings: &Path, gold: &Path) -> Outcome {
    let predicted: BTreeSet<(String, String)> = read_findings(findings)?
        .into_iter()
        .flat_map(|r| {
            let id = r.record_id;
            r.findings.into_iter().map(move |f| (id.clone(), f.disease))
        })
        .collect();
    let s = score(&predicted, &load_gold(gold)?);
    Ok(format!(
        "evaluate: precision {:.4} recall {:.4} f1 {:.4} (tp {} fp {} fn {})",
        s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_
    ))
}

fn ablate(cfg: &RunConfig, corpus: &Path, gold: &Path, models: &Path, out: &Path) -> Outcome {
    let res = Resources::load(cfg)?;
    let records = load_corpus(corpus)?;
    let context = load_context(models)?;
    let relation = load_relation(models)?;
    let rows = run_ablation(&records, &load_gold(gold)?, &context, &res.extractor, &relation, &res.matcher, &cfg.pipeline, cfg.parallelism)?;
    write_text(out, &scores_csv(&rows))?;
    let full = rows.iter().find(|r| r.configuration == "full").map_or(f64::NAN, |r| r.scores.f1);
    Ok(format!("ablate: {} configurations, full f1 {full:.4} -> {}", rows.len(), out.display()))
}

fn drg_impact(cfg: &RunConfig, corpus: &Path, findings: &Path, models: Option<&Path>, precision: Option<f64>, out: &Path) -> Outcome {
    let precision = precision.or(cfg.drg_precision);
    if let Some(p) = precision.filter(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::Usage(format!("precision {p} is outside [0, 1]")));
    }
    let res = Resources::load(cfg)?;
    let table = Resources::drg(cfg)?;
    let records = load_corpus(corpus)?;
    let report = BatchReport { records: read_findings(findings)?, ..BatchReport::default() };
    let relation = models.map(load_relation).transpose()?;
    let levels = levels_from_findings(&report, &res.icd, relation.as_ref().map(|r| r as &dyn RelationJudge));
    let cost = cost_delta_report(&records, &levels, &table, precision)?;
    write_report(out, &cost)?;
    Ok(format!(
        "drg-impact: {} records regrouped, total delta {} ({:.2}%) -> {}",
        cost.rows.len(),
        cost.total_delta,
        cost.percent,
        out.display()
    ))
}
