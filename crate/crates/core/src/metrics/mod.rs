//! Lexical metrics, the utility registry and the external scorer client.

mod bleu;
mod chrf;
pub mod scorer;
mod utility;

pub use bleu::{
    bleu_from_stats, bleu_stats, corpus_bleu, cross_bleu_matrix, sentence_bleu, BleuConfig,
    BleuStats, CrossBleu, Smoothing, SystemOutputs, Tokenization, FLOOR_SMOOTHING_VALUE,
};
pub use chrf::{chrf, chrf_from_stats, ChrfConfig, ChrfStats};
pub use scorer::{score_batch, Health, ScoreMode, ScoreRequest, ScoreResponse, ScorerClient};
pub use utility::{
    instantiate, BuiltinUtility, CountingUtility, ExternalUtility, FnUtility, Utility,
    UtilityQuery,
};

use crate::error::{Error, Result};
use crate::types::{Endpoint, UtilityBackend, UtilityFunction, UtilityKind};

/// Environment variable naming the default scorer endpoint for `external`
/// utilities that do not give one, e.g. `http=localhost:8080` or `cmd=./scorer`.
pub const SCORER_ENV: &str = "MBRKIT_SCORER";

const BUILTINS: [(&str, UtilityBackend, UtilityKind); 5] = [
    ("chrf", UtilityBackend::BuiltinChrf, UtilityKind::ReferenceBased),
    ("sentence_bleu", UtilityBackend::BuiltinSentenceBleu, UtilityKind::ReferenceBased),
    ("bleu", UtilityBackend::BuiltinSentenceBleu, UtilityKind::ReferenceBased),
    // lexical overlap with the source: a reference-free stand-in usable for QE
    ("chrf_src", UtilityBackend::BuiltinChrf, UtilityKind::ReferenceFree),
    ("sentence_bleu_src", UtilityBackend::BuiltinSentenceBleu, UtilityKind::ReferenceFree),
];

pub fn known_utilities() -> Vec<String> {
    BUILTINS
        .iter()
        .map(|(n, _, _)| n.to_string())
        .chain([
            "external:cmd=<command>[,mode=qe|ref][,name=<name>]".to_string(),
            "external:http=<host:port>[,mode=qe|ref][,name=<name>]".to_string(),
        ])
        .collect()
}

/// Resolves a utility name, falling back to `$MBRKIT_SCORER` for external endpoints.
pub fn registry_resolve(name: &str) -> Result<UtilityFunction> {
    registry_resolve_with(name, std::env::var(SCORER_ENV).ok().as_deref())
}

/// Resolves a utility name with an explicit default scorer endpoint.
pub fn registry_resolve_with(name: &str, default_endpoint: Option<&str>) -> Result<UtilityFunction> {
    if let Some(&(n, backend, kind)) = BUILTINS.iter().find(|(n, _, _)| *n == name) {
        return Ok(UtilityFunction {
            name: n.to_string(),
            kind,
            backend,
            endpoint: None,
        });
    }
    if name == "external" || name.starts_with("external:") {
        return parse_external(name.strip_prefix("external").unwrap_or(""), default_endpoint);
    }
    let suggestion = BUILTINS
        .iter()
        .map(|(n, _, _)| (strsim::damerau_levenshtein(name, n), *n))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, n)| n.to_string());
    Err(Error::UnknownUtility {
        name: name.to_string(),
        suggestion,
        known: known_utilities(),
    })
}

fn parse_endpoint(key: &str, value: &str) -> Option<Endpoint> {
    match key {
        "cmd" => Some(Endpoint::Command(value.to_string())),
        "http" => Some(Endpoint::Http(value.to_string())),
        _ => None,
    }
}

fn parse_external(spec: &str, default_endpoint: Option<&str>) -> Result<UtilityFunction> {
    let spec = spec.strip_prefix(':').unwrap_or(spec);
    let mut endpoint = None;
    let mut kind = UtilityKind::ReferenceBased;
    let mut name = "external".to_string();
    for part in spec.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value in `{part}`")))?;
        match k {
            "cmd" | "http" => endpoint = parse_endpoint(k, v),
            "mode" => {
                kind = match v {
                    "qe" => UtilityKind::ReferenceFree,
                    "ref" => UtilityKind::ReferenceBased,
                    _ => return Err(Error::Config(format!("mode must be qe or ref, got `{v}`"))),
                }
            }
            "name" => name = v.to_string(),
            _ => return Err(Error::Config(format!("unknown external utility key `{k}`"))),
        }
    }
    if endpoint.is_none() {
        if let Some(default) = default_endpoint {
            endpoint = match default.split_once('=') {
                Some((k, v)) => parse_endpoint(k, v),
                None => Some(Endpoint::Http(default.to_string())),
            };
        }
    }
    let desc = UtilityFunction {
        name,
        kind,
        backend: UtilityBackend::External,
        endpoint,
    };
    desc.validate()?;
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        let u = registry_resolve_with("chrf", None).unwrap();
        assert_eq!(u.backend, UtilityBackend::BuiltinChrf);
        assert_eq!(u.kind, UtilityKind::ReferenceBased);
        assert_eq!(registry_resolve_with("chrf_src", None).unwrap().kind, UtilityKind::ReferenceFree);
    }

    #[test]
    fn external_http_qe() {
        let u = registry_resolve_with("external:http=localhost:8080,mode=qe", None).unwrap();
        assert_eq!(u.kind, UtilityKind::ReferenceFree);
        assert_eq!(u.backend, UtilityBackend::External);
        assert_eq!(u.endpoint, Some(Endpoint::Http("localhost:8080".into())));
    }

    #[test]
    fn external_falls_back_to_default_endpoint() {
        assert!(registry_resolve_with("external:mode=qe", None).is_err());
        let u = registry_resolve_with("external:mode=qe", Some("cmd=./scorer --stdio")).unwrap();
        assert_eq!(u.endpoint, Some(Endpoint::Command("./scorer --stdio".into())));
        let u = registry_resolve_with("external", Some("127.0.0.1:9000")).unwrap();
        assert_eq!(u.endpoint, Some(Endpoint::Http("127.0.0.1:9000".into())));
    }

    #[test]
    fn unknown_name_suggests_closest() {
        let err = registry_resolve_with("blue", None).unwrap_err();
        match &err {
            Error::UnknownUtility { suggestion, known, .. } => {
                assert_eq!(suggestion.as_deref(), Some("bleu"));
                assert!(known.iter().any(|k| k == "chrf"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("did you mean `bleu`"));
    }

    #[test]
    fn builtin_reference_based_needs_reference() {
        let u = instantiate(&registry_resolve_with("chrf", None).unwrap()).unwrap();
        let q = UtilityQuery { source: "s", hypothesis: "h", reference: None };
        assert!(u.score_batch(&[q]).is_err());
        let q = UtilityQuery { source: "s", hypothesis: "abc", reference: Some("abc") };
        assert_eq!(u.score_batch(&[q]).unwrap(), vec![100.0]);
    }

    #[test]
    fn source_variant_scores_against_source() {
        let u = instantiate(&registry_resolve_with("chrf_src", None).unwrap()).unwrap();
        let q = UtilityQuery { source: "abc def", hypothesis: "abc def", reference: Some("zzz") };
        assert_eq!(u.score_batch(&[q]).unwrap(), vec![100.0]);
    }

    #[test]
    fn counting_wrapper_counts_queries() {
        let u = CountingUtility::new(instantiate(&registry_resolve_with("chrf", None).unwrap()).unwrap());
        let q = UtilityQuery { source: "s", hypothesis: "a", reference: Some("a") };
        u.score_batch(&[q, q, q]).unwrap();
        u.score_batch(&[q]).unwrap();
        assert_eq!(u.calls(), 4);
    }
}
