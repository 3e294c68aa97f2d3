//! Activity vocabulary, augmented one-hot encoding and prefix/suffix pair
//! expansion, plus the JSON-lines dataset format shared between pipeline
//! stages.

use crate::eventlog::{EventLog, Trace};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("event log contains no events")]
    EmptyLog,
    #[error("unknown activity label '{0}' (vocabulary built from a different log?)")]
    UnknownLabel(String),
    #[error("dataset file is malformed: {0}")]
    MalformedDataset(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered activity labels with the end-of-sequence marker at the final
/// index. Lexicographic order keeps vocabularies reproducible across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
}

pub const EOS_LABEL: &str = "<EOS>";

impl Vocabulary {
    pub fn build(log: &EventLog) -> Result<Vocabulary, EncodingError> {
        if log.n_events() == 0 {
            return Err(EncodingError::EmptyLog);
        }
        let mut labels: Vec<String> = log.activity_universe().into_iter().collect();
        labels.push(EOS_LABEL.to_string());
        Ok(Vocabulary { labels })
    }

    pub fn from_labels(mut labels: Vec<String>) -> Vocabulary {
        if labels.last().map(String::as_str) != Some(EOS_LABEL) {
            labels.push(EOS_LABEL.to_string());
        }
        Vocabulary { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn eos_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label_of(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

/// One-hot activity vector augmented with a normalized elapsed-time scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedVector {
    /// index of the single 1 in the one-hot part
    pub label: usize,
    /// one-hot width, |vocabulary|
    pub width: usize,
    /// elapsed time since the previous event, normalized
    pub duration: f64,
}

impl AugmentedVector {
    pub fn onehot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        v[self.label] = 1.0;
        v
    }

    /// Dense layout fed to the networks: one-hot followed by the duration.
    pub fn dense(&self) -> Vec<f64> {
        let mut v = self.onehot();
        v.push(self.duration);
        v
    }
}

/// Divides durations by the training-set maximum so regression targets stay
/// in [0,1] on training data. Out-of-range values on test data are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeNormalizer {
    pub scale: f64,
}

impl TimeNormalizer {
    pub fn fit(train_log: &EventLog) -> TimeNormalizer {
        let max = train_log
            .traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.duration))
            .fold(0.0_f64, f64::max);
        TimeNormalizer {
            scale: if max > 0.0 { max } else { 1.0 },
        }
    }

    pub fn normalize(&self, days: f64) -> f64 {
        days / self.scale
    }

    pub fn denormalize(&self, normalized: f64) -> f64 {
        normalized * self.scale
    }
}

/// A (k-prefix, suffix) training pair. The suffix ends with the EOS vector
/// (duration 0); `remaining_time_days` covers the real suffix events only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub case_id: String,
    pub prefix_len: usize,
    pub prefix: Vec<AugmentedVector>,
    pub suffix: Vec<AugmentedVector>,
    pub remaining_time_days: f64,
}

/// One vector per event plus a terminal EOS vector with duration 0.
pub fn encode_trace(
    trace: &Trace,
    vocab: &Vocabulary,
    norm: &TimeNormalizer,
) -> Result<Vec<AugmentedVector>, EncodingError> {
    let width = vocab.len();
    let mut out = Vec::with_capacity(trace.len() + 1);
    for event in &trace.events {
        let label = vocab
            .index_of(&event.activity)
            .ok_or_else(|| EncodingError::UnknownLabel(event.activity.clone()))?;
        out.push(AugmentedVector {
            label,
            width,
            duration: norm.normalize(event.duration),
        });
    }
    out.push(AugmentedVector {
        label: vocab.eos_index(),
        width,
        duration: 0.0,
    });
    Ok(out)
}

/// Recovers the activity labels of an encoded trace, EOS excluded.
pub fn decode_labels(encoded: &[AugmentedVector], vocab: &Vocabulary) -> Vec<String> {
    encoded
        .iter()
        .filter(|v| v.label != vocab.eos_index())
        .map(|v| vocab.label_of(v.label).to_string())
        .collect()
}

/// Expands a trace into one pair per prefix length k in [2, |trace|-1],
/// ordered by k. Traces with at most two events yield no pairs.
pub fn make_pairs(
    trace: &Trace,
    vocab: &Vocabulary,
    norm: &TimeNormalizer,
) -> Result<Vec<EncodedPair>, EncodingError> {
    let encoded = encode_trace(trace, vocab, norm)?;
    let n = trace.len();
    let mut pairs = Vec::new();
    for k in 2..n {
        let prefix = encoded[..k].to_vec();
        let suffix = encoded[k..].to_vec(); // includes terminal EOS
        let remaining_time_days: f64 =
            trace.events[k..].iter().map(|e| e.duration).sum();
        pairs.push(EncodedPair {
            case_id: trace.case_id.clone(),
            prefix_len: k,
            prefix,
            suffix,
            remaining_time_days,
        });
    }
    Ok(pairs)
}

pub fn make_pairs_for_log(
    log: &EventLog,
    vocab: &Vocabulary,
    norm: &TimeNormalizer,
) -> Result<Vec<EncodedPair>, EncodingError> {
    let mut out = Vec::new();
    for trace in &log.traces {
        out.extend(make_pairs(trace, vocab, norm)?);
    }
    Ok(out)
}

/// Header line of a dataset file: everything a consumer needs to interpret
/// the pairs plus a checksum of the source log for staleness detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub vocabulary: Vocabulary,
    pub normalizer_scale: f64,
    pub source_checksum: String,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub pairs: Vec<EncodedPair>,
}

/// JSON-lines: header object on the first line, one pair per following line.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> Result<(), EncodingError> {
    let mut header = dataset.header.clone();
    header.n_pairs = dataset.pairs.len();
    serde_json::to_writer(&mut writer, &header)
        .map_err(|e| EncodingError::MalformedDataset(e.to_string()))?;
    writer.write_all(b"\n")?;
    for pair in &dataset.pairs {
        serde_json::to_writer(&mut writer, pair)
            .map_err(|e| EncodingError::MalformedDataset(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset, EncodingError> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| EncodingError::MalformedDataset("empty file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| EncodingError::MalformedDataset(format!("bad header: {e}")))?;
    let mut pairs = Vec::with_capacity(header.n_pairs);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(
            serde_json::from_str(&line)
                .map_err(|e| EncodingError::MalformedDataset(format!("bad pair: {e}")))?,
        );
    }
    if pairs.len() != header.n_pairs {
        return Err(EncodingError::MalformedDataset(format!(
            "header says {} pairs, found {}",
            header.n_pairs,
            pairs.len()
        )));
    }
    Ok(Dataset { header, pairs })
}
