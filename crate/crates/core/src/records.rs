//! JSONL metric streams and the measures that can be pulled out of them.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::metrics::{MetricRecord, RECORD_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported format_version {found} (expected {RECORD_FORMAT_VERSION})")]
    Version { line: usize, found: u32 },
    #[error("unknown measure \"{0}\"")]
    UnknownMeasure(String),
    #[error("line {line}: record lacks measure {measure}")]
    MissingMeasure { line: usize, measure: String },
}

pub fn write_record<W: Write>(mut writer: W, record: &MetricRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut writer, record)?;
    writer.write_all(b"\n")
}

/// Streams records from JSONL, skipping blank lines.
pub struct RecordReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R) -> Self {
        RecordReader {
            lines: reader.lines(),
            line: 0,
        }
    }
}

impl RecordReader<BufReader<File>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self, RecordError> {
        Ok(RecordReader::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<MetricRecord, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let line = self.line;
            let parsed = serde_json::from_str::<MetricRecord>(&text)
                .map_err(|source| RecordError::Parse { line, source })
                .and_then(|r| {
                    if r.format_version == RECORD_FORMAT_VERSION {
                        Ok(r)
                    } else {
                        Err(RecordError::Version {
                            line,
                            found: r.format_version,
                        })
                    }
                });
            return Some(parsed);
        }
    }
}

/// A scalar series extracted from each record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// 1-based rank of the ascending share vector (1 = least Democratic).
    Rank {
        election: String,
        rank: usize,
    },
    Seats {
        election: String,
    },
    Competitive {
        election: String,
    },
    CompetitiveShifted {
        election: String,
    },
    CountiesSplit,
    TotalSplits,
    Perimeter,
}

impl Measure {
    pub fn value(&self, record: &MetricRecord) -> Option<f64> {
        let per = |e: &str| record.per_election.get(e);
        match self {
            Measure::Rank { election, rank } => {
                per(election).and_then(|m| m.sorted_shares.get(rank.checked_sub(1)?).copied())
            }
            Measure::Seats { election } => per(election).map(|m| m.seats as f64),
            Measure::Competitive { election } => per(election).map(|m| m.competitive as f64),
            Measure::CompetitiveShifted { election } => per(election).map(|m| m.competitive_shifted as f64),
            Measure::CountiesSplit => Some(record.counties_split as f64),
            Measure::TotalSplits => Some(record.total_splits as f64),
            Measure::Perimeter => Some(record.perimeter),
        }
    }

    /// Every ranked share plus seats, for each election in `record`.
    pub fn defaults_for(record: &MetricRecord) -> Vec<Measure> {
        let mut out = Vec::new();
        for (e, m) in &record.per_election {
            for rank in 1..=m.sorted_shares.len() {
                out.push(Measure::Rank {
                    election: e.clone(),
                    rank,
                });
            }
            out.push(Measure::Seats { election: e.clone() });
        }
        out
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Rank { election, rank } => write!(f, "{election}:rank{rank}"),
            Measure::Seats { election } => write!(f, "{election}:seats"),
            Measure::Competitive { election } => write!(f, "{election}:competitive"),
            Measure::CompetitiveShifted { election } => write!(f, "{election}:competitive_shifted"),
            Measure::CountiesSplit => f.write_str("counties_split"),
            Measure::TotalSplits => f.write_str("total_splits"),
            Measure::Perimeter => f.write_str("perimeter"),
        }
    }
}

impl FromStr for Measure {
    type Err = RecordError;

    /// `counties_split`, `total_splits`, `perimeter`, or
    /// `<election>:{rankN|seats|competitive|competitive_shifted}`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || RecordError::UnknownMeasure(s.to_string());
        match s {
            "counties_split" => return Ok(Measure::CountiesSplit),
            "total_splits" => return Ok(Measure::TotalSplits),
            "perimeter" => return Ok(Measure::Perimeter),
            _ => {}
        }
        let (election, what) = s.rsplit_once(':').ok_or_else(unknown)?;
        if election.is_empty() {
            return Err(unknown());
        }
        let election = election.to_string();
        match what {
            "seats" => Ok(Measure::Seats { election }),
            "competitive" => Ok(Measure::Competitive { election }),
            "competitive_shifted" => Ok(Measure::CompetitiveShifted { election }),
            _ => {
                let rank: usize = what
                    .strip_prefix("rank")
                    .and_then(|r| r.parse().ok())
                    .filter(|&r| r >= 1)
                    .ok_or_else(unknown)?;
                Ok(Measure::Rank { election, rank })
            }
        }
    }
}

/// Reads one JSONL file and extracts each measure as a series.
pub fn read_measure_series<P: AsRef<Path>>(path: P, measures: &[Measure]) -> Result<Vec<Vec<f64>>, RecordError> {
    let mut out = vec![Vec::new(); measures.len()];
    for (i, rec) in RecordReader::open(path)?.enumerate() {
        let rec = rec?;
        for (m, series) in measures.iter().zip(out.iter_mut()) {
            let v = m.value(&rec).ok_or_else(|| RecordError::MissingMeasure {
                line: i + 1,
                measure: m.to_string(),
            })?;
            series.push(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ElectionMetrics;
    use std::collections::BTreeMap;

    fn record(step: u64) -> MetricRecord {
        MetricRecord {
            format_version: RECORD_FORMAT_VERSION,
            step,
            per_election: BTreeMap::from([(
                "gov".to_string(),
                ElectionMetrics {
                    sorted_shares: vec![0.25, 0.5, 0.75],
                    seats: 1,
                    competitive: 1,
                    competitive_shifted: 2,
                },
            )]),
            counties_split: 3,
            total_splits: 4,
            perimeter: 12.5,
        }
    }

    #[test]
    fn jsonl_round_trip_and_field_names() {
        let mut buf = Vec::new();
        write_record(&mut buf, &record(1)).unwrap();
        buf.extend_from_slice(b"\n");
        write_record(&mut buf, &record(2)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"format_version":1,"step":1,"per_election":{"gov":{"sorted_shares":[0.25,0.5,0.75],"seats":1,"competitive":1,"competitive_shifted":2}},"counties_split":3,"total_splits":4,"perimeter":12.5}"#));
        let back: Vec<MetricRecord> = RecordReader::new(buf.as_slice()).collect::<Result<_, _>>().unwrap();
        assert_eq!(back, vec![record(1), record(2)]);
    }

    #[test]
    fn wrong_version_rejected() {
        let mut r = record(1);
        r.format_version = 99;
        let mut buf = Vec::new();
        write_record(&mut buf, &r).unwrap();
        let err = RecordReader::new(buf.as_slice()).next().unwrap().unwrap_err();
        assert!(matches!(err, RecordError::Version { line: 1, found: 99 }));
    }

    #[test]
    fn measure_names_parse_and_extract() {
        let rec = record(1);
        for (name, want) in [
            ("gov:rank1", 0.25),
            ("gov:rank3", 0.75),
            ("gov:seats", 1.0),
            ("gov:competitive_shifted", 2.0),
            ("counties_split", 3.0),
            ("total_splits", 4.0),
            ("perimeter", 12.5),
        ] {
            let m: Measure = name.parse().unwrap();
            assert_eq!(m.to_string(), name);
            assert_eq!(m.value(&rec), Some(want));
        }
        assert_eq!("gov:rank4".parse::<Measure>().unwrap().value(&rec), None);
        assert!("gov:rank0".parse::<Measure>().is_err());
        assert!("bogus".parse::<Measure>().is_err());
        assert_eq!(Measure::defaults_for(&rec).len(), 4);
    }
}
