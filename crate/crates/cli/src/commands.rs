use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use mbrkit::corpusprep::{
    dedup_monolingual, filter_pairs_with_hook, read_tsv_pairs, write_tsv_pairs, CommandHook, Dedup,
    FilterConfig, FilterReport, PairHook, RULE_DUPLICATE,
};
use mbrkit::distill::{
    generate_dataset_with, iterate_round, mix_datasets, sha256_hex, DatasetManifest, DistillJobConfig,
    DistillRun, MixPolicy, Teacher,
};
use mbrkit::eval::{
    mqm_scores, read_mqm_annotations, score_histogram, score_report, segment_pairwise_accuracy_grouped,
    system_pairwise_accuracy, write_histogram_csv, GroupedAccuracy, MetaEvalInput, ReportInput, ScoreTable,
};
use mbrkit::jsonl::{
    read_candidates, read_distill_dataset, read_selections, write_candidates, write_distill_dataset,
    write_prefix_selections, write_selections,
};
use mbrkit::mbr::{mbr_select_with_matrix, write_matrix_dump, MbrOptions, DEFAULT_MBR_BATCH_SIZE};
use mbrkit::metrics::{cross_bleu_matrix, instantiate, registry_resolve, BleuConfig, Tokenization, Utility};
use mbrkit::qe::{qe_select_batched, DEFAULT_QE_BATCH_SIZE};
use mbrkit::sampling::{sample_corpus, with_workers, BeamConfig, SamplingConfig, ToyBigramModel};
use mbrkit::{CandidateSet, DecodeMethod, Segment, SelectionResult, UtilityKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::io::*;
use crate::UsageError;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn load_model(m: &ModelArgs) -> anyhow::Result<ToyBigramModel> {
    match &m.model {
        Some(p) => ToyBigramModel::load(p).with_context(|| format!("loading model {}", p.display())),
        None => Ok(ToyBigramModel::builtin()),
    }
}

fn decode_method(m: Method) -> DecodeMethod {
    match m {
        Method::Mbr => DecodeMethod::Mbr,
        Method::Qe => DecodeMethod::Qe,
        Method::Beam => DecodeMethod::Beam,
        Method::Greedy => DecodeMethod::Greedy,
        Method::Sample => DecodeMethod::Sample,
        Method::Reference => DecodeMethod::Reference,
    }
}

/// Resolves and connects the utility a selection method needs.
fn selection_utility(method: Method, name: Option<&str>) -> anyhow::Result<Option<Box<dyn Utility>>> {
    let required = match method {
        Method::Mbr => UtilityKind::ReferenceBased,
        Method::Qe => UtilityKind::ReferenceFree,
        _ => return Ok(None),
    };
    let name = name.ok_or_else(|| usage(format!("--method {method:?} requires --utility").to_lowercase()))?;
    let desc = registry_resolve(name)?;
    desc.require_kind(required).map_err(|e| {
        usage(format!(
            "{e}: mbr needs a reference-based utility u(h, r), qe a reference-free one u(h, s)"
        ))
    })?;
    Ok(Some(instantiate(&desc)?))
}

fn read_candidate_file(inputs: &[std::path::PathBuf]) -> anyhow::Result<Vec<CandidateSet>> {
    let path = single_input(inputs)?;
    let sets = read_candidates(open_input(path)?)
        .with_context(|| format!("reading candidates from {}", path.map_or("stdin".into(), |p| p.display().to_string())))?;
    Ok(sets)
}

fn write_manifest(path: Option<&Path>, manifest: &DatasetManifest) -> anyhow::Result<()> {
    match path {
        Some(p) => write_json(p, manifest),
        None => {
            log::info!("manifest: {}", serde_json::to_string(manifest)?);
            Ok(())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SampleManifest {
    model: String,
    num_samples: usize,
    epsilon: f64,
    seed: u64,
    max_len: Option<usize>,
    segments: usize,
    source_digest: String,
    candidates_digest: String,
}

pub fn sample(a: &SampleArgs, workers: usize) -> anyhow::Result<()> {
    let seed = a.seed.ok_or_else(|| usage("sampling requires --seed"))?;
    let cfg = SamplingConfig {
        epsilon: a.epsilon,
        num_samples: a.num_samples,
        seed,
        max_len: a.max_len,
    };
    cfg.validate()?;
    let model = load_model(&a.model)?;
    let segments = read_sources(single_input(&a.inputs)?, a.format)?;
    let sets = sample_corpus(&model, &segments, &cfg, workers)?;
    let mut bytes = Vec::new();
    write_candidates(&mut bytes, &sets)?;
    write_bytes(a.out.as_deref(), &bytes)?;
    log::info!("sampled {} x {} candidates", sets.len(), cfg.num_samples);
    if let Some(path) = &a.manifest {
        let mut src = Vec::new();
        mbrkit::jsonl::write_segments(&mut src, &segments)?;
        let manifest = SampleManifest {
            model: a.model.model.as_ref().map_or("builtin".into(), |p| p.display().to_string()),
            num_samples: cfg.num_samples,
            epsilon: cfg.epsilon,
            seed,
            max_len: cfg.max_len,
            segments: segments.len(),
            source_digest: sha256_hex(&src),
            candidates_digest: sha256_hex(&bytes),
        };
        write_json(path, &manifest)?;
    }
    Ok(())
}

fn select_one(
    cs: &CandidateSet,
    method: Method,
    utility: &dyn Utility,
    opts: &MbrOptions,
    qe_batch: usize,
    keep_matrix: bool,
) -> mbrkit::Result<(SelectionResult, Option<mbrkit::mbr::UtilityMatrix>)> {
    match method {
        Method::Mbr => {
            let (sel, m) = mbr_select_with_matrix(cs, utility, opts)?;
            Ok((sel, keep_matrix.then_some(m)))
        }
        _ => Ok((qe_select_batched(cs, utility, qe_batch)?, None)),
    }
}

pub fn decide(a: &DecideArgs, workers: usize) -> anyhow::Result<()> {
    let selecting = matches!(a.method, Method::Mbr | Method::Qe);
    let emit = a.emit.unwrap_or(if selecting { Emit::Selections } else { Emit::Dataset });
    if emit == Emit::Selections && !selecting {
        bail!(usage("--emit selections needs --method mbr or qe"));
    }
    if emit == Emit::Dataset && (!a.top_k.is_empty() || a.dump_matrix.is_some()) {
        bail!(usage("--top-k and --dump-matrix apply to --emit selections only"));
    }
    if a.dump_matrix.is_some() && a.method != Method::Mbr {
        bail!(usage("--dump-matrix needs --method mbr"));
    }
    if a.batch_size == Some(0) {
        bail!(usage("--batch-size must be at least 1"));
    }
    let utility = selection_utility(a.method, a.utility.as_deref())?;
    let sets = read_candidate_file(&a.inputs)?;

    if emit == Emit::Dataset {
        let cfg = DistillJobConfig {
            method: decode_method(a.method),
            utility: a.utility.clone(),
            sampling: SamplingConfig {
                max_len: a.max_len,
                ..SamplingConfig::default()
            },
            beam: BeamConfig {
                beam_size: a.beam_size,
                alpha: a.alpha,
                max_len: a.max_len,
            },
            teacher_id: a.teacher_id.clone(),
            include_self: a.include_self,
            skip_failed: false,
            workers,
            batch_size: a.batch_size,
        };
        let sources: Vec<Segment> = sets.iter().map(|c| c.segment.clone()).collect();
        let model;
        let teacher = if matches!(a.method, Method::Beam | Method::Greedy) {
            model = load_model(&a.model)?;
            Teacher::Provider(&model)
        } else {
            Teacher::Candidates(&sets)
        };
        let run = generate_dataset_with(&sources, &teacher, &cfg, utility.as_deref())?;
        return emit_run(&run, a.out.as_deref(), a.manifest.as_deref());
    }

    let utility = utility.expect("selection methods resolve a utility");
    let opts = MbrOptions {
        include_self: a.include_self,
        batch_size: a.batch_size.unwrap_or(DEFAULT_MBR_BATCH_SIZE),
    };
    let qe_batch = a.batch_size.unwrap_or(DEFAULT_QE_BATCH_SIZE);
    let mut out = open_output(a.out.as_deref())?;
    if a.top_k.is_empty() {
        let results = with_workers(workers, || {
            sets.par_iter()
                .map(|cs| select_one(cs, a.method, utility.as_ref(), &opts, qe_batch, a.dump_matrix.is_some()))
                .collect::<mbrkit::Result<Vec<_>>>()
        })??;
        let (selections, matrices): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        write_selections(&mut out, &selections)?;
        if let Some(path) = &a.dump_matrix {
            let matrices: Vec<_> = matrices.into_iter().flatten().collect();
            write_matrix_dump(open_output(Some(path))?, &matrices)?;
        }
    } else {
        for cs in &sets {
            if let Some(&k) = a.top_k.iter().find(|&&k| k == 0 || k > cs.len()) {
                bail!(usage(format!(
                    "--top-k {k} outside 1..={} for segment `{}`",
                    cs.len(),
                    cs.segment.seg_id
                )));
            }
        }
        let results = with_workers(workers, || {
            sets.par_iter()
                .flat_map_iter(|cs| a.top_k.iter().map(move |&k| (cs, k)))
                .map(|(cs, k)| {
                    select_one(&cs.prefix(k), a.method, utility.as_ref(), &opts, qe_batch, false).map(|r| (k, r.0))
                })
                .collect::<mbrkit::Result<Vec<_>>>()
        })??;
        write_prefix_selections(&mut out, &results)?;
    }
    out.flush()?;
    Ok(())
}

fn emit_run(run: &DistillRun, out: Option<&Path>, manifest: Option<&Path>) -> anyhow::Result<()> {
    write_bytes(out, &run.encoded)?;
    write_manifest(manifest, &run.manifest)?;
    if !run.manifest.skipped.is_empty() {
        log::warn!("skipped segments: {}", run.manifest.skipped.join(", "));
    }
    log::info!("wrote {} records", run.manifest.record_count);
    Ok(())
}

pub fn distill(a: &DistillArgs, workers: usize) -> anyhow::Result<()> {
    let method = decode_method(a.method);
    let sampling = matches!(a.method, Method::Mbr | Method::Qe | Method::Sample);
    let seed = match (a.seed, a.candidates.is_some()) {
        (Some(s), _) => s,
        (None, false) if sampling => bail!(usage("sampling requires --seed")),
        (None, _) => 0,
    };
    let cfg = DistillJobConfig {
        method,
        utility: a.utility.clone(),
        sampling: SamplingConfig {
            epsilon: a.epsilon,
            num_samples: a.num_samples,
            seed,
            max_len: a.max_len,
        },
        beam: BeamConfig {
            beam_size: a.beam_size,
            alpha: a.alpha,
            max_len: a.max_len,
        },
        teacher_id: a.teacher_id.clone(),
        include_self: a.include_self,
        skip_failed: a.skip_failed,
        workers,
        batch_size: a.batch_size,
    };
    cfg.validate()?;
    let utility = selection_utility(a.method, a.utility.as_deref())?;
    let sets = match &a.candidates {
        Some(p) => read_candidates(open_input(Some(p))?).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let sources = match (&a.sources, &a.candidates) {
        (Some(p), _) => read_sources(Some(p), a.format)?,
        (None, Some(_)) => sets.iter().map(|c| c.segment.clone()).collect(),
        (None, None) => bail!(usage("distill needs --sources or --candidates")),
    };
    let model;
    let teacher = if a.candidates.is_some() || a.method == Method::Reference {
        Teacher::Candidates(&sets)
    } else {
        model = load_model(&a.model)?;
        Teacher::Provider(&model)
    };
    let run = match &a.parent_manifest {
        Some(p) => {
            let prev: DatasetManifest = serde_json::from_str(&read_all(Some(p))?)
                .with_context(|| format!("parsing manifest {}", p.display()))?;
            iterate_round(&prev, &sources, &teacher, &cfg, utility.as_deref())?
        }
        None => generate_dataset_with(&sources, &teacher, &cfg, utility.as_deref())?,
    };
    emit_run(&run, a.out.as_deref(), a.manifest.as_deref())
}

pub fn mix(a: &MixArgs) -> anyhow::Result<()> {
    let datasets = a
        .inputs
        .iter()
        .map(|p| {
            read_distill_dataset(open_input(Some(p))?).with_context(|| format!("reading {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let policy = match a.policy {
        Policy::Balanced => MixPolicy::Balanced,
        Policy::Concat => MixPolicy::Concat,
    };
    let mixed = mix_datasets(&datasets, policy)?;
    let mut out = open_output(a.out.as_deref())?;
    write_distill_dataset(&mut out, &mixed)?;
    log::info!("mixed {} records", mixed.len());
    Ok(())
}

pub fn filter(a: &FilterArgs) -> anyhow::Result<()> {
    let input = open_input(single_input(&a.inputs)?)?;
    let mut out = open_output(a.out.as_deref())?;
    let report = if a.monolingual {
        let lines: Vec<String> = std::io::BufRead::lines(input).collect::<std::io::Result<_>>()?;
        let kept = dedup_monolingual(&lines);
        for l in &kept {
            writeln!(out, "{l}")?;
        }
        let mut report = FilterReport {
            input: lines.len(),
            kept: kept.len(),
            ..Default::default()
        };
        if lines.len() > kept.len() {
            report.dropped_by_rule.insert(RULE_DUPLICATE.into(), lines.len() - kept.len());
        }
        report
    } else {
        let cfg = FilterConfig {
            max_source_tokens: a.max_src_tokens,
            max_length_ratio: a.max_ratio,
            dedup: match a.dedup {
                DedupArg::None => Dedup::None,
                DedupArg::ExactPair => Dedup::ExactPair,
                DedupArg::ExactSource => Dedup::ExactSource,
            },
            strict_direction: a.strict_direction,
        };
        cfg.validate()?;
        let pairs = read_tsv_pairs(input)?;
        let mut hook = a.hook.as_ref().map(|c| CommandHook { command: c.clone() });
        let (kept, report) = filter_pairs_with_hook(&pairs, &cfg, hook.as_mut().map(|h| h as &mut dyn PairHook))?;
        write_tsv_pairs(&mut out, &kept)?;
        report
    };
    out.flush()?;
    match &a.report {
        Some(p) => write_json(p, &report)?,
        None => eprintln!("{}", serde_json::to_string(&report)?),
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let mut systems = Vec::new();
    let mut sources: BTreeMap<String, String> = BTreeMap::new();
    for spec in &a.inputs {
        let (sys, srcs) = read_system(spec)?;
        sources.extend(srcs);
        systems.push(sys);
    }
    if let Some(p) = &a.sources {
        sources = read_keyed_text(p, &["source", "text"])?.texts;
    }
    let references = a.refs.as_deref().map(read_references).transpose()?.map(|k| k.texts);
    let mqm = match &a.mqm {
        Some(p) => Some(mqm_scores(&read_mqm_annotations(open_input(Some(p))?)?)?.systems),
        None => None,
    };
    if systems.is_empty() && mqm.is_none() {
        bail!(usage("evaluate needs system outputs or --mqm"));
    }
    let metrics: Vec<String> = if systems.is_empty() { Vec::new() } else { a.metrics.clone() };
    let input = ReportInput {
        systems: &systems,
        references: references.as_ref(),
        sources: (!sources.is_empty()).then_some(&sources),
        mqm: mqm.as_ref(),
    };
    let report = score_report(&input, &metrics);
    let mut stdout = open_output(None)?;
    write!(stdout, "{}", report.to_table())?;
    stdout.flush()?;
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    match (&a.selections, &a.histogram) {
        (Some(sel), Some(hist)) => {
            let selections: Vec<_> = read_selections(open_input(Some(sel))?)?.into_iter().map(|(_, s)| s).collect();
            let bins = score_histogram(&selections, a.bins)?;
            write_histogram_csv(open_output(Some(hist))?, &bins)?;
        }
        (None, None) => {}
        _ => bail!(usage("--selections and --histogram go together")),
    }
    if !report.failures.is_empty() {
        let list: Vec<String> = report.failures.iter().map(|(m, e)| format!("{m}: {e}")).collect();
        bail!("some metrics failed: {}", list.join("; "));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreLine {
    system: String,
    seg_id: String,
    score: f64,
}

fn read_score_table(path: &Path) -> anyhow::Result<ScoreTable> {
    let mut table = ScoreTable::new();
    for (line, r) in mbrkit::jsonl::read_jsonl::<ScoreLine, _>(open_input(Some(path))?)? {
        if table.entry(r.system.clone()).or_default().insert(r.seg_id.clone(), r.score).is_some() {
            bail!("{} line {line}: duplicate ({}, {})", path.display(), r.system, r.seg_id);
        }
    }
    Ok(table)
}

fn system_means(t: &ScoreTable) -> BTreeMap<String, f64> {
    t.iter()
        .map(|(s, segs)| (s.clone(), segs.values().sum::<f64>() / segs.len() as f64))
        .collect()
}

#[derive(Serialize)]
struct MetaevalOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    system_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment: Option<GroupedAccuracy>,
}

pub fn metaeval(a: &MetaevalArgs) -> anyhow::Result<()> {
    let gold = match (&a.gold, &a.gold_mqm) {
        (Some(p), None) => read_score_table(p)?,
        (None, Some(p)) => mqm_scores(&read_mqm_annotations(open_input(Some(p))?)?)?
            .segments
            .into_iter()
            .map(|(sys, segs)| (sys, segs.into_iter().map(|(k, v)| (k, -v)).collect()))
            .collect(),
        _ => bail!(usage("give exactly one of --gold and --gold-mqm")),
    };
    let metric = read_score_table(&a.metric)?;
    let input = MetaEvalInput::from_tables(&gold, &metric)?;
    let want_system = matches!(a.level, Level::System | Level::Both);
    let want_segment = matches!(a.level, Level::Segment | Level::Both);
    let output = MetaevalOutput {
        system_accuracy: if want_system {
            Some(system_pairwise_accuracy(&system_means(&gold), &system_means(&metric))?)
        } else {
            None
        },
        segment: if want_segment {
            Some(segment_pairwise_accuracy_grouped(&input, a.tie_eps)?)
        } else {
            None
        },
    };
    let mut out = open_output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&output)?)?;
    out.flush()?;
    Ok(())
}

pub fn crossbleu(a: &CrossbleuArgs) -> anyhow::Result<()> {
    let systems = a
        .inputs
        .iter()
        .map(|s| read_system(s).map(|r| r.0))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cfg = BleuConfig {
        tokenization: match a.tokenize {
            TokenizeArg::Whitespace => Tokenization::Whitespace,
            TokenizeArg::Char => Tokenization::Char,
        },
        ..BleuConfig::corpus()
    };
    let cross = cross_bleu_matrix(&systems, &cfg)?;
    let mut out = open_output(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&cross)?)?;
    out.flush()?;
    Ok(())
}

pub fn toy_model(a: &ToyModelArgs) -> anyhow::Result<()> {
    let model = match &a.pairs {
        Some(p) => ToyBigramModel::train_tsv(&read_all(Some(p))?, a.max_len)?,
        None => ToyBigramModel::builtin().with_max_len(a.max_len),
    };
    let mut out = open_output(a.out.as_deref())?;
    writeln!(out, "{}", model.to_json())?;
    out.flush()?;
    Ok(())
}
