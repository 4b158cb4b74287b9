//! Distillation dataset generation: decode a source corpus with a teacher,
//! emit `(source, target)` records plus a manifest describing the run.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl::{encode_distill_dataset, ser_opt_fixed6, write_segments};
use crate::mbr::{mbr_select, MbrOptions, DEFAULT_MBR_BATCH_SIZE};
use crate::metrics::{instantiate, registry_resolve, Utility};
use crate::qe::{qe_select_batched, DEFAULT_QE_BATCH_SIZE};
use crate::sampling::{
    beam_decode, greedy_decode, sample_candidates, with_workers, BeamConfig, SamplingConfig,
    TokenDistributionProvider,
};
use crate::types::{CandidateSet, DecodeMethod, DistillExample, Segment, SelectionResult, UtilityKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillJobConfig {
    pub method: DecodeMethod,
    /// Registry name; required for mbr and qe.
    pub utility: Option<String>,
    pub sampling: SamplingConfig,
    pub beam: BeamConfig,
    pub teacher_id: String,
    pub include_self: bool,
    /// Drop segments whose scoring fails instead of aborting; they are listed
    /// in the manifest.
    pub skip_failed: bool,
    /// 0 = available parallelism.
    pub workers: usize,
    /// Utility batch size; `None` uses the per-method default.
    pub batch_size: Option<usize>,
}

impl Default for DistillJobConfig {
    fn default() -> Self {
        DistillJobConfig {
            method: DecodeMethod::Mbr,
            utility: None,
            sampling: SamplingConfig::default(),
            beam: BeamConfig::default(),
            teacher_id: "teacher".into(),
            include_self: true,
            skip_failed: false,
            workers: 0,
            batch_size: None,
        }
    }
}

impl DistillJobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.teacher_id.is_empty() {
            return Err(Error::Config("teacher_id must be non-empty".into()));
        }
        if matches!(self.method, DecodeMethod::Mbr | DecodeMethod::Qe) && self.utility.is_none() {
            return Err(Error::Config(format!("method {} requires a utility", self.method)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.sampling.validate()?;
        self.beam.validate()
    }

    fn required_kind(&self) -> Option<UtilityKind> {
        match self.method {
            DecodeMethod::Mbr => Some(UtilityKind::ReferenceBased),
            DecodeMethod::Qe => Some(UtilityKind::ReferenceFree),
            _ => None,
        }
    }
}

/// Where hypotheses come from.
pub enum Teacher<'a> {
    /// A model decoded in-process.
    Provider(&'a dyn TokenDistributionProvider),
    /// Pre-generated candidates, e.g. exported from an external model.
    Candidates(&'a [CandidateSet]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub teacher_id: String,
    pub method: DecodeMethod,
    pub utility: Option<String>,
    /// Largest candidate-set size seen (mbr/qe/sample).
    pub candidate_size: Option<usize>,
    /// Sampling parameters, present when the teacher sampled in-process.
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSONL encoding of the input segments.
    pub source_digest: String,
    /// SHA-256 of the emitted dataset bytes.
    pub dataset_digest: String,
    pub record_count: usize,
    #[serde(default, serialize_with = "ser_opt_fixed6")]
    pub mean_score: Option<f64>,
    pub round: u32,
    pub parent_digest: Option<String>,
    pub skipped: Vec<String>,
}

impl DatasetManifest {
    /// Checks the digest and record count against dataset bytes.
    pub fn verify(&self, dataset: &[u8]) -> Result<()> {
        let digest = sha256_hex(dataset);
        if digest != self.dataset_digest {
            return Err(Error::InvalidRecord(format!(
                "dataset digest {digest} does not match manifest {}",
                self.dataset_digest
            )));
        }
        let lines = dataset.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
        if lines != self.record_count {
            return Err(Error::InvalidRecord(format!(
                "dataset has {lines} records, manifest says {}",
                self.record_count
            )));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output of one generation run.
#[derive(Clone, Debug)]
pub struct DistillRun {
    pub examples: Vec<DistillExample>,
    pub manifest: DatasetManifest,
    /// Per-segment rankings for mbr/qe, in record order.
    pub selections: Vec<SelectionResult>,
    /// Exact dataset bytes the manifest digest covers.
    pub encoded: Vec<u8>,
}

struct Produced {
    example: DistillExample,
    selection: Option<SelectionResult>,
    candidate_count: Option<usize>,
}

/// Resolves the configured utility and runs [`generate_dataset_with`].
pub fn generate_dataset(sources: &[Segment], teacher: &Teacher<'_>, cfg: &DistillJobConfig) -> Result<DistillRun> {
    cfg.validate()?;
    let utility = match &cfg.utility {
        Some(name) if cfg.required_kind().is_some() => Some(instantiate(&registry_resolve(name)?)?),
        _ => None,
    };
    generate_dataset_with(sources, teacher, cfg, utility.as_deref())
}

/// Emits exactly one record per source unless `skip_failed` drops it.
pub fn generate_dataset_with(
    sources: &[Segment],
    teacher: &Teacher<'_>,
    cfg: &DistillJobConfig,
    utility: Option<&dyn Utility>,
) -> Result<DistillRun> {
    cfg.validate()?;
    if let Some(kind) = cfg.required_kind() {
        let u = utility.ok_or_else(|| Error::Config(format!("method {} requires a utility", cfg.method)))?;
        u.descriptor().require_kind(kind)?;
    }
    for s in sources {
        s.validate()?;
    }
    if cfg.method == DecodeMethod::Reference {
        if let Some(s) = sources.iter().find(|s| s.reference.is_none()) {
            return Err(Error::InvalidRecord(format!(
                "method reference requires references; segment `{}` has none",
                s.seg_id
            )));
        }
    }
    let by_id: HashMap<&str, &CandidateSet> = match teacher {
        Teacher::Candidates(sets) => sets.iter().map(|c| (c.segment.seg_id.as_str(), c)).collect(),
        Teacher::Provider(_) => HashMap::new(),
    };
    if let Teacher::Candidates(_) = teacher {
        if matches!(cfg.method, DecodeMethod::Beam | DecodeMethod::Greedy) {
            return Err(Error::Config(format!("method {} needs a model, not a candidate file", cfg.method)));
        }
        if cfg.method != DecodeMethod::Reference {
            if let Some(s) = sources.iter().find(|s| !by_id.contains_key(s.seg_id.as_str())) {
                return Err(Error::MissingCandidates(s.seg_id.clone()));
            }
        }
    }

    let outcomes: Vec<Result<Produced>> = with_workers(cfg.workers, || {
        sources
            .par_iter()
            .map(|seg| produce(seg, teacher, &by_id, cfg, utility))
            .collect()
    })?;

    let mut examples = Vec::with_capacity(sources.len());
    let mut selections = Vec::new();
    let mut skipped = Vec::new();
    let mut candidate_size: Option<usize> = None;
    for (seg, outcome) in sources.iter().zip(outcomes) {
        match outcome {
            Ok(p) => {
                if let Some(n) = p.candidate_count {
                    candidate_size = Some(candidate_size.map_or(n, |m| m.max(n)));
                }
                selections.extend(p.selection);
                examples.push(p.example);
            }
            Err(e) if cfg.skip_failed => {
                log::warn!("skipping segment `{}`: {e}", seg.seg_id);
                skipped.push(seg.seg_id.clone());
            }
            Err(e) => return Err(e),
        }
    }

    let scores: Vec<f64> = examples.iter().filter_map(|e| e.score).collect();
    let mean_score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    let sampled = matches!(teacher, Teacher::Provider(_))
        && matches!(cfg.method, DecodeMethod::Mbr | DecodeMethod::Qe | DecodeMethod::Sample);
    let mut source_bytes = Vec::new();
    write_segments(&mut source_bytes, sources)?;
    let encoded = encode_distill_dataset(&examples)?;
    let manifest = DatasetManifest {
        teacher_id: cfg.teacher_id.clone(),
        method: cfg.method,
        utility: cfg.required_kind().and(cfg.utility.clone()),
        candidate_size,
        epsilon: sampled.then_some(cfg.sampling.epsilon),
        seed: sampled.then_some(cfg.sampling.seed),
        source_digest: sha256_hex(&source_bytes),
        dataset_digest: sha256_hex(&encoded),
        record_count: examples.len(),
        mean_score,
        round: 1,
        parent_digest: None,
        skipped,
    };
    Ok(DistillRun {
        examples,
        manifest,
        selections,
        encoded,
    })
}

fn produce(
    seg: &Segment,
    teacher: &Teacher<'_>,
    by_id: &HashMap<&str, &CandidateSet>,
    cfg: &DistillJobConfig,
    utility: Option<&dyn Utility>,
) -> Result<Produced> {
    let record = |target: String, score: Option<f64>| DistillExample {
        seg_id: seg.seg_id.clone(),
        source: seg.source.clone(),
        target,
        method: cfg.method,
        score,
        teacher_id: cfg.teacher_id.clone(),
    };
    let candidates = || -> Result<CandidateSet> {
        match teacher {
            Teacher::Provider(p) => sample_candidates(*p, seg, &cfg.sampling),
            Teacher::Candidates(_) => {
                let cs = by_id
                    .get(seg.seg_id.as_str())
                    .ok_or_else(|| Error::MissingCandidates(seg.seg_id.clone()))?;
                // the corpus text wins over whatever the candidate file carried
                Ok(CandidateSet {
                    segment: seg.clone(),
                    candidates: cs.candidates.clone(),
                })
            }
        }
    };
    let select = |sel: SelectionResult, cs: &CandidateSet| -> Produced {
        let text = cs
            .by_sample_index(sel.chosen)
            .expect("selection refers to a candidate of its own set")
            .text
            .clone();
        Produced {
            example: record(text, Some(sel.chosen_score())),
            candidate_count: Some(cs.len()),
            selection: Some(sel),
        }
    };
    let plain = |example| Produced {
        example,
        selection: None,
        candidate_count: None,
    };

    match cfg.method {
        DecodeMethod::Mbr => {
            let cs = candidates()?;
            let opts = MbrOptions {
                include_self: cfg.include_self,
                batch_size: cfg.batch_size.unwrap_or(DEFAULT_MBR_BATCH_SIZE),
            };
            let sel = mbr_select(&cs, utility.expect("checked by caller"), &opts)?;
            Ok(select(sel, &cs))
        }
        DecodeMethod::Qe => {
            let cs = candidates()?;
            let batch = cfg.batch_size.unwrap_or(DEFAULT_QE_BATCH_SIZE);
            let sel = qe_select_batched(&cs, utility.expect("checked by caller"), batch)?;
            Ok(select(sel, &cs))
        }
        DecodeMethod::Beam => {
            let Teacher::Provider(p) = teacher else { unreachable!("rejected by caller") };
            let out = beam_decode(*p, seg, &cfg.beam)?;
            Ok(plain(record(out.candidate.text, Some(out.score))))
        }
        DecodeMethod::Greedy => {
            let Teacher::Provider(p) = teacher else { unreachable!("rejected by caller") };
            let c = greedy_decode(*p, seg, cfg.beam.max_len.or(cfg.sampling.max_len))?;
            Ok(plain(record(c.text, None)))
        }
        DecodeMethod::Sample => {
            // sample 0: the first candidate of the same seed's candidate set
            let cs = match teacher {
                Teacher::Provider(p) => {
                    let one = SamplingConfig { num_samples: 1, ..cfg.sampling.clone() };
                    sample_candidates(*p, seg, &one)?
                }
                Teacher::Candidates(_) => candidates()?,
            };
            let first = cs
                .candidates
                .iter()
                .min_by_key(|c| c.sample_index)
                .ok_or_else(|| Error::MissingCandidates(seg.seg_id.clone()))?;
            Ok(Produced {
                example: record(first.text.clone(), None),
                selection: None,
                candidate_count: Some(cs.len()),
            })
        }
        DecodeMethod::Reference => {
            let r = seg.reference.clone().expect("checked by caller");
            Ok(plain(record(r, None)))
        }
    }
}

/// Regenerates with a later model's candidates; the result links to `prev`.
pub fn iterate_round(
    prev: &DatasetManifest,
    sources: &[Segment],
    teacher: &Teacher<'_>,
    cfg: &DistillJobConfig,
    utility: Option<&dyn Utility>,
) -> Result<DistillRun> {
    if !matches!(cfg.method, DecodeMethod::Mbr | DecodeMethod::Qe) {
        return Err(Error::Config(format!(
            "iterated rounds need method mbr or qe, got {}",
            cfg.method
        )));
    }
    let mut run = match utility {
        Some(u) => generate_dataset_with(sources, teacher, cfg, Some(u))?,
        None => generate_dataset(sources, teacher, cfg)?,
    };
    run.manifest.round = prev.round + 1;
    run.manifest.parent_digest = Some(prev.dataset_digest.clone());
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixPolicy {
    /// Truncate every input to the shortest and interleave round-robin.
    Balanced,
    Concat,
}

pub fn mix_datasets(datasets: &[Vec<DistillExample>], policy: MixPolicy) -> Result<Vec<DistillExample>> {
    match policy {
        MixPolicy::Concat => Ok(datasets.concat()),
        MixPolicy::Balanced => {
            if datasets.len() < 2 {
                return Err(Error::Config("balanced mixing needs at least two datasets".into()));
            }
            if let Some(i) = datasets.iter().position(|d| d.is_empty()) {
                return Err(Error::Empty(format!("dataset {} is empty", i + 1)));
            }
            let min = datasets.iter().map(Vec::len).min().unwrap_or(0);
            Ok((0..min)
                .flat_map(|i| datasets.iter().map(move |d| d[i].clone()))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{registry_resolve_with, FnUtility};
    use crate::sampling::ToyBigramModel;

    fn sources(n: usize) -> Vec<Segment> {
        ["the cat sat", "a dog ran", "we see it", "on the mat", "it is red"]
            .iter()
            .cycle()
            .take(n)
            .enumerate()
            .map(|(i, s)| Segment::new(format!("s{i}"), *s).with_reference(s.to_uppercase()))
            .collect()
    }

    fn ex(seg: &str, method: DecodeMethod) -> DistillExample {
        DistillExample {
            seg_id: seg.into(),
            source: "s".into(),
            target: "t".into(),
            method,
            score: None,
            teacher_id: "x".into(),
        }
    }

    #[test]
    fn greedy_records_match_decoder() {
        let model = ToyBigramModel::builtin().with_max_len(12);
        let srcs = sources(5);
        let cfg = DistillJobConfig { method: DecodeMethod::Greedy, ..Default::default() };
        let run = generate_dataset(&srcs, &Teacher::Provider(&model), &cfg).unwrap();
        assert_eq!(run.examples.len(), 5);
        for (e, s) in run.examples.iter().zip(&srcs) {
            assert_eq!(e.target, greedy_decode(&model, s, None).unwrap().text);
            assert!(e.score.is_none());
        }
        run.manifest.verify(&run.encoded).unwrap();
    }

    #[test]
    fn mbr_records_match_per_segment_selection() {
        let model = ToyBigramModel::builtin().with_max_len(10);
        let srcs = sources(3);
        let cfg = DistillJobConfig {
            method: DecodeMethod::Mbr,
            utility: Some("chrf".into()),
            sampling: SamplingConfig { num_samples: 8, seed: 3, ..Default::default() },
            workers: 2,
            ..Default::default()
        };
        let run = generate_dataset(&srcs, &Teacher::Provider(&model), &cfg).unwrap();
        let u = instantiate(&registry_resolve_with("chrf", None).unwrap()).unwrap();
        for (e, s) in run.examples.iter().zip(&srcs) {
            let cs = sample_candidates(&model, s, &cfg.sampling).unwrap();
            let sel = mbr_select(&cs, u.as_ref(), &MbrOptions::default()).unwrap();
            assert_eq!(e.target, cs.by_sample_index(sel.chosen).unwrap().text);
            assert_eq!(e.score, Some(sel.chosen_score()));
        }
        assert_eq!(run.manifest.candidate_size, Some(8));
        assert_eq!(run.manifest.seed, Some(3));
        assert_eq!(run.selections.len(), 3);
    }

    #[test]
    fn reference_targets_are_verbatim() {
        let srcs = sources(4);
        let cfg = DistillJobConfig { method: DecodeMethod::Reference, teacher_id: "human".into(), ..Default::default() };
        let run = generate_dataset(&srcs, &Teacher::Candidates(&[]), &cfg).unwrap();
        for (e, s) in run.examples.iter().zip(&srcs) {
            assert_eq!(Some(&e.target), s.reference.as_ref());
        }
        let mut no_ref = srcs.clone();
        no_ref[2].reference = None;
        assert!(generate_dataset(&no_ref, &Teacher::Candidates(&[]), &cfg).is_err());
    }

    #[test]
    fn missing_candidates_abort() {
        let srcs = sources(2);
        let sets = vec![CandidateSet::from_texts(srcs[0].clone(), ["a", "b"])];
        let cfg = DistillJobConfig { method: DecodeMethod::Qe, utility: Some("chrf_src".into()), ..Default::default() };
        match generate_dataset(&srcs, &Teacher::Candidates(&sets), &cfg) {
            Err(Error::MissingCandidates(id)) => assert_eq!(id, "s1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let cfg = DistillJobConfig { method: DecodeMethod::Qe, utility: Some("chrf".into()), ..Default::default() };
        let err = generate_dataset(&sources(1), &Teacher::Candidates(&[]), &cfg).unwrap_err();
        assert!(matches!(err, Error::UtilityKindMismatch { .. }));
    }

    #[test]
    fn failures_abort_unless_skipping() {
        let srcs = sources(3);
        let sets: Vec<_> = srcs.iter().map(|s| CandidateSet::from_texts(s.clone(), ["x", "y"])).collect();
        let flaky = FnUtility::new("flaky", UtilityKind::ReferenceFree, |q: &crate::metrics::UtilityQuery<'_>| {
            if q.source == "a dog ran" { f64::NAN } else { q.hypothesis.len() as f64 }
        });
        let cfg = DistillJobConfig { method: DecodeMethod::Qe, utility: Some("flaky".into()), ..Default::default() };
        assert!(generate_dataset_with(&srcs, &Teacher::Candidates(&sets), &cfg, Some(&flaky)).is_err());
        let skip = DistillJobConfig { skip_failed: true, ..cfg };
        let run = generate_dataset_with(&srcs, &Teacher::Candidates(&sets), &skip, Some(&flaky)).unwrap();
        assert_eq!(run.examples.len(), 2);
        assert_eq!(run.manifest.skipped, vec!["s1".to_string()]);
        assert_eq!(run.manifest.record_count, 2);
    }

    #[test]
    fn rounds_chain_and_reproduce() {
        let srcs = sources(3);
        let sets: Vec<_> = srcs
            .iter()
            .map(|s| CandidateSet::from_texts(s.clone(), ["the cat", "a dog", "we see it"]))
            .collect();
        let cfg = DistillJobConfig { method: DecodeMethod::Qe, utility: Some("chrf_src".into()), ..Default::default() };
        let r1 = generate_dataset(&srcs, &Teacher::Candidates(&sets), &cfg).unwrap();
        let r2 = iterate_round(&r1.manifest, &srcs, &Teacher::Candidates(&sets), &cfg, None).unwrap();
        let r3 = iterate_round(&r2.manifest, &srcs, &Teacher::Candidates(&sets), &cfg, None).unwrap();
        assert_eq!((r1.manifest.round, r2.manifest.round, r3.manifest.round), (1, 2, 3));
        assert_eq!(r2.manifest.parent_digest.as_deref(), Some(r1.manifest.dataset_digest.as_str()));
        assert_eq!(r1.examples, r2.examples);
        let greedy = DistillJobConfig { method: DecodeMethod::Greedy, ..Default::default() };
        assert!(iterate_round(&r1.manifest, &srcs, &Teacher::Candidates(&sets), &greedy, None).is_err());
    }

    #[test]
    fn manifest_detects_tampering() {
        let cfg = DistillJobConfig { method: DecodeMethod::Reference, ..Default::default() };
        let run = generate_dataset(&sources(2), &Teacher::Candidates(&[]), &cfg).unwrap();
        let mut bytes = run.encoded.clone();
        bytes[10] ^= 1;
        assert!(run.manifest.verify(&bytes).is_err());
        let json = serde_json::to_string(&run.manifest).unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, run.manifest);
    }

    #[test]
    fn balanced_mixing() {
        let a: Vec<_> = (0..10).map(|i| ex(&format!("a{i}"), DecodeMethod::Mbr)).collect();
        let b: Vec<_> = (0..4).map(|i| ex(&format!("b{i}"), DecodeMethod::Qe)).collect();
        let mixed = mix_datasets(&[a.clone(), b.clone()], MixPolicy::Balanced).unwrap();
        assert_eq!(mixed.len(), 8);
        assert_eq!(mixed[0].seg_id, "a0");
        assert_eq!(mixed[1].seg_id, "b0");
        let even = mix_datasets(&[a.clone(), a.clone()], MixPolicy::Balanced).unwrap();
        assert_eq!(even.len(), 20);
        assert_eq!(mix_datasets(&[a.clone(), b.clone()], MixPolicy::Concat).unwrap().len(), 14);
        assert!(mix_datasets(std::slice::from_ref(&a), MixPolicy::Balanced).is_err());
        assert!(mix_datasets(&[a, Vec::new()], MixPolicy::Balanced).is_err());
    }
}
