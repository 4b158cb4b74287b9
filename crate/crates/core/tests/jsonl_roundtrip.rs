use mbrkit::jsonl::{
    read_candidates, read_distill_dataset, read_selections, round6, write_candidates, write_distill_dataset,
    write_prefix_selections, write_selections,
};
use mbrkit::{Candidate, CandidateSet, DecodeMethod, DistillExample, Segment, SelectionMethod, SelectionResult};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[a-z \"\\\\\n\té中]{1,12}"
}

fn candidate_set() -> impl Strategy<Value = CandidateSet> {
    (
        "[a-z0-9]{1,6}",
        text(),
        prop::option::of(text()),
        prop::collection::vec((text(), prop::option::of(-50.0f64..0.0), any::<bool>()), 1..6),
        any::<bool>(),
    )
        .prop_map(|(id, src, reference, cands, reversed)| {
            let n = cands.len();
            let candidates = cands
                .into_iter()
                .enumerate()
                .map(|(i, (t, lp, truncated))| Candidate {
                    text: t,
                    logprob: lp,
                    sample_index: if reversed { n - 1 - i } else { i },
                    truncated,
                })
                .collect();
            let mut segment = Segment::new(id, src);
            segment.reference = reference;
            CandidateSet { segment, candidates }
        })
}

fn rounded(cs: &CandidateSet) -> CandidateSet {
    let mut c = cs.clone();
    for cand in &mut c.candidates {
        cand.logprob = cand.logprob.map(round6);
    }
    c
}

proptest! {
    #[test]
    fn candidates_round_trip(sets in prop::collection::vec(candidate_set(), 1..5)) {
        let mut sets = sets;
        for (i, s) in sets.iter_mut().enumerate() {
            s.segment.seg_id = format!("{}-{i}", s.segment.seg_id);
        }
        let mut buf = Vec::new();
        write_candidates(&mut buf, &sets).unwrap();
        let back = read_candidates(buf.as_slice()).unwrap();
        let want: Vec<_> = sets.iter().map(rounded).collect();
        prop_assert_eq!(&back, &want);
        let mut again = Vec::new();
        write_candidates(&mut again, &back).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn datasets_round_trip(rows in prop::collection::vec((text(), text(), prop::option::of(-100.0f64..100.0)), 1..20)) {
        let examples: Vec<DistillExample> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (src, tgt, score))| DistillExample {
                seg_id: i.to_string(),
                source: src,
                target: tgt,
                method: if score.is_some() { DecodeMethod::Qe } else { DecodeMethod::Reference },
                score: score.map(round6),
                teacher_id: "t".into(),
            })
            .collect();
        let mut buf = Vec::new();
        write_distill_dataset(&mut buf, &examples).unwrap();
        prop_assert_eq!(read_distill_dataset(buf.as_slice()).unwrap(), examples);
    }

    #[test]
    fn selections_round_trip(scores in prop::collection::vec(-1e3f64..1e3, 1..10), k in 1usize..300) {
        let mut ranking: Vec<(usize, f64)> = scores.iter().map(|s| round6(*s)).enumerate().collect();
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let sel = SelectionResult {
            seg_id: "x".into(),
            method: SelectionMethod::Mbr,
            chosen: ranking[0].0,
            utility_calls: (scores.len() * scores.len()) as u64,
            ranking,
        };
        let mut buf = Vec::new();
        write_selections(&mut buf, std::slice::from_ref(&sel)).unwrap();
        prop_assert_eq!(read_selections(buf.as_slice()).unwrap(), vec![(None, sel.clone())]);
        let mut buf = Vec::new();
        write_prefix_selections(&mut buf, &[(k, sel.clone())]).unwrap();
        prop_assert_eq!(read_selections(buf.as_slice()).unwrap(), vec![(Some(k), sel)]);
    }
}
