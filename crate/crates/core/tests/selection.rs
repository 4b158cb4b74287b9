#[path = "support/oracle.rs"]
mod oracle;
#[path = "support/toy.rs"]
mod toy;

use mbrkit::mbr::{mbr_expected_utilities, mbr_select, utility_matrix, MbrOptions};
use mbrkit::metrics::{instantiate, registry_resolve_with, CountingUtility, Utility};
use mbrkit::qe::{qe_select, qe_select_batched};
use mbrkit::{CandidateSet, Segment};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn builtin(name: &str) -> Box<dyn Utility> {
    instantiate(&registry_resolve_with(name, None).unwrap()).unwrap()
}

fn set(texts: &[String]) -> CandidateSet {
    CandidateSet::from_texts(Segment::new("seg", "abcde ab"), texts.iter().cloned())
}

#[test]
fn mbr_matches_double_loop_oracle() {
    let chrf = builtin("chrf");
    let mut rng = StdRng::seed_from_u64(2024);
    let alphabet = ['a', 'b', 'c', 'd', 'e'];
    for trial in 0..200 {
        let n = rng.random_range(1..=8);
        let texts = toy::random_strings(&mut rng, n, &alphabet, 7);
        for include_self in [true, false] {
            let opts = MbrOptions { include_self, ..Default::default() };
            let sel = mbr_select(&set(&texts), chrf.as_ref(), &opts).unwrap();
            let (best, scores) = toy::mbr_brute(&texts, include_self, oracle::chrf);
            assert_eq!(sel.chosen, best, "trial {trial}: {texts:?}");
            for &(idx, s) in &sel.ranking {
                assert!((s - scores[idx]).abs() < 1e-12, "trial {trial} candidate {idx}");
            }
        }
    }
}

#[test]
fn chosen_candidate_dominates() {
    let chrf = builtin("chrf");
    let mut rng = StdRng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let texts = toy::random_strings(&mut rng, n, &['a', 'b', 'c'], 6);
        let cs = set(&texts);
        let m = utility_matrix(&cs, chrf.as_ref(), &MbrOptions::default()).unwrap();
        let eu = mbr_expected_utilities(&m);
        let sel = mbr_select(&cs, chrf.as_ref(), &MbrOptions::default()).unwrap();
        assert!(eu.iter().all(|&e| eu[sel.chosen] >= e));
    }
}

#[test]
fn utility_call_counts() {
    let chrf = CountingUtility::new(builtin("chrf"));
    let src = CountingUtility::new(builtin("chrf_src"));
    for n in [1usize, 2, 32, 256] {
        let texts: Vec<String> = (0..n).map(|i| format!("cand {}", i % 7)).collect();
        let cs = set(&texts);
        chrf.reset();
        let sel = mbr_select(&cs, &chrf, &MbrOptions::default()).unwrap();
        assert_eq!(chrf.calls(), (n * n) as u64);
        assert_eq!(sel.utility_calls, (n * n) as u64);
        chrf.reset();
        mbr_select(&cs, &chrf, &MbrOptions { include_self: false, ..Default::default() }).unwrap();
        assert_eq!(chrf.calls(), (n * (n - 1)) as u64);
        src.reset();
        let q = qe_select(&cs, &src).unwrap();
        assert_eq!(src.calls(), n as u64);
        assert_eq!(q.utility_calls, n as u64);
    }
}

#[test]
fn batch_size_does_not_change_results() {
    let chrf = builtin("chrf");
    let src = builtin("chrf_src");
    let mut rng = StdRng::seed_from_u64(3);
    let texts = toy::random_strings(&mut rng, 40, &['a', 'b', 'c', 'd', ' '], 12);
    let cs = set(&texts);
    let base = mbr_select(&cs, chrf.as_ref(), &MbrOptions::default()).unwrap();
    let qbase = qe_select(&cs, src.as_ref()).unwrap();
    for b in [1, 7, 64, 5000] {
        let opts = MbrOptions { batch_size: b, ..Default::default() };
        assert_eq!(mbr_select(&cs, chrf.as_ref(), &opts).unwrap(), base);
        assert_eq!(qe_select_batched(&cs, src.as_ref(), b).unwrap(), qbase);
    }
}

#[test]
fn prefix_sweeps() {
    let chrf = builtin("chrf");
    let src = builtin("chrf_src");
    let mut rng = StdRng::seed_from_u64(77);
    let texts = toy::random_strings(&mut rng, 64, &['a', 'b', 'c', 'd', 'e'], 8);
    let cs = set(&texts);
    let mut last = f64::NEG_INFINITY;
    for k in [4, 8, 16, 32, 64] {
        let prefix = cs.prefix(k);
        let q = qe_select(&prefix, src.as_ref()).unwrap();
        assert!(q.chosen_score() >= last);
        last = q.chosen_score();
        let m = mbr_select(&prefix, chrf.as_ref(), &MbrOptions::default()).unwrap();
        let (best, _) = toy::mbr_brute(&texts[..k], true, oracle::chrf);
        assert_eq!(m.chosen, best);
    }
}
