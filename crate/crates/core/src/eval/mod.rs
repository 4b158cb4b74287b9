//! Human-evaluation aggregation, metric reports and meta-evaluation.

mod meta;
mod mqm;
mod report;

pub use meta::{
    segment_pairwise_accuracy_grouped, system_pairwise_accuracy, GroupedAccuracy, MetaEvalInput,
    ScoreTable,
};
pub use mqm::{
    mqm_scores, mqm_segment_score, mqm_system_score, read_mqm_annotations, MqmAnnotation, MqmError,
    MqmTable, Severity,
};
pub use report::{
    score_histogram, score_report, write_histogram_csv, HistogramBin, ReportInput, ReportRow,
    ScoreReport, CORPUS_BLEU, MQM_COLUMN,
};
