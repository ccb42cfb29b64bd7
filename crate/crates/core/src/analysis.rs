//! Ensemble summaries: histograms, ranked-share box plots, conditional means,
//! cross-chain standard errors, and the position of an enacted plan.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{cross_chain_mean_se, extreme_rank_stats, BoxStats, DiagnosticsError, ExtremeRankStats};
use crate::graph::VoteCount;
use crate::metrics::{election_metrics, CompetitiveBand, ElectionMetrics, MetricRecord, MetricsError, SwingSpec};
use crate::records::{RecordError, RecordReader};

pub const SUMMARY_FORMAT_VERSION: u32 = 1;
const PERIMETER_BINS: usize = 40;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no metric records to analyze")]
    Empty,
    #[error("chain {chain} is missing election \"{election}\"")]
    MissingElection { chain: usize, election: String },
    #[error("election \"{election}\": records disagree on district count ({a} vs {b})")]
    DistrictCount { election: String, a: usize, b: usize },
    #[error("enacted plan: {0}")]
    Enacted(String),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Columnar copy of one chain's records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainColumns {
    pub elections: BTreeMap<String, ElectionColumns>,
    pub counties_split: Vec<f64>,
    pub total_splits: Vec<f64>,
    pub perimeter: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElectionColumns {
    pub k: usize,
    /// Row-major, `k` ascending shares per record.
    pub sorted_shares: Vec<f64>,
    pub seats: Vec<f64>,
    pub competitive: Vec<f64>,
    pub competitive_shifted: Vec<f64>,
}

impl ElectionColumns {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.sorted_shares.chunks(self.k.max(1))
    }
}

impl ChainColumns {
    pub fn push(&mut self, record: &MetricRecord) -> Result<(), AnalysisError> {
        for (name, m) in &record.per_election {
            let col = self.elections.entry(name.clone()).or_default();
            if col.seats.is_empty() {
                col.k = m.sorted_shares.len();
            } else if col.k != m.sorted_shares.len() {
                return Err(AnalysisError::DistrictCount {
                    election: name.clone(),
                    a: col.k,
                    b: m.sorted_shares.len(),
                });
            }
            col.sorted_shares.extend_from_slice(&m.sorted_shares);
            col.seats.push(m.seats as f64);
            col.competitive.push(m.competitive as f64);
            col.competitive_shifted.push(m.competitive_shifted as f64);
        }
        self.counties_split.push(record.counties_split as f64);
        self.total_splits.push(record.total_splits as f64);
        self.perimeter.push(record.perimeter);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.perimeter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perimeter.is_empty()
    }

    pub fn from_records<'a, I: IntoIterator<Item = &'a MetricRecord>>(records: I) -> Result<Self, AnalysisError> {
        let mut c = ChainColumns::default();
        for r in records {
            c.push(r)?;
        }
        Ok(c)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, AnalysisError> {
        let mut c = ChainColumns::default();
        for r in RecordReader::open(path)? {
            c.push(&r?)?;
        }
        Ok(c)
    }
}

/// Where the enacted plan sits relative to one ensemble measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub value: f64,
    pub fraction_below: f64,
    pub fraction_equal: f64,
    pub fraction_above: f64,
}

impl Position {
    fn of(value: f64, ensemble: &[f64]) -> Self {
        let n = ensemble.len().max(1) as f64;
        let below = ensemble.iter().filter(|&&x| x < value).count() as f64;
        let above = ensemble.iter().filter(|&&x| x > value).count() as f64;
        Position {
            value,
            fraction_below: below / n,
            fraction_equal: (n - below - above) / n,
            fraction_above: above / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSummary {
    pub mean: f64,
    /// Standard error of the mean across chains; absent for one chain.
    pub standard_error: Option<f64>,
    pub min: f64,
    pub max: f64,
    /// `(value, count)`, ascending; continuous measures use bin centres.
    pub histogram: Vec<(f64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enacted: Option<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMean {
    pub x: f64,
    pub count: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankBox {
    /// 1 = least Democratic district.
    pub rank: usize,
    #[serde(flatten)]
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnactedElection {
    pub metrics: ElectionMetrics,
    pub ranks: ExtremeRankStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionSummary {
    pub seats: MeasureSummary,
    pub competitive: MeasureSummary,
    pub competitive_shifted: MeasureSummary,
    pub rank_boxplots: Vec<RankBox>,
    /// Keyed `<y>_by_<x>`.
    pub conditional_means: BTreeMap<String, Vec<ConditionalMean>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enacted: Option<EnactedElection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub format_version: u32,
    pub chains: usize,
    pub plans: usize,
    pub per_election: BTreeMap<String, ElectionSummary>,
    pub counties_split: MeasureSummary,
    pub total_splits: MeasureSummary,
    pub perimeter: MeasureSummary,
}

/// Enacted plan values to overlay on the ensemble.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnactedMetrics {
    pub per_election: BTreeMap<String, ElectionMetrics>,
    pub counties_split: Option<usize>,
    pub total_splits: Option<usize>,
    pub perimeter: Option<f64>,
}

impl EnactedMetrics {
    pub fn from_record(record: &MetricRecord) -> Self {
        EnactedMetrics {
            per_election: record.per_election.clone(),
            counties_split: Some(record.counties_split),
            total_splits: Some(record.total_splits),
            perimeter: Some(record.perimeter),
        }
    }
}

/// District share fixture for an enacted plan whose precinct data is not at
/// hand: per election, the district shares and the statewide result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnactedShares {
    #[serde(default)]
    pub format_version: Option<u32>,
    pub elections: BTreeMap<String, EnactedElectionShares>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnactedElectionShares {
    pub district_shares: Vec<f64>,
    #[serde(default)]
    pub statewide_share: Option<f64>,
    #[serde(default)]
    pub statewide_votes: Option<VoteCount>,
}

impl EnactedShares {
    pub fn to_metrics(&self, band: CompetitiveBand) -> Result<EnactedMetrics, AnalysisError> {
        let mut per_election = BTreeMap::new();
        for (name, e) in &self.elections {
            let swing = match (e.statewide_votes, e.statewide_share) {
                (Some(v), _) => SwingSpec::from_votes(v)?,
                (None, Some(s)) => SwingSpec::new(s)?,
                (None, None) => {
                    return Err(AnalysisError::Enacted(format!(
                        "election \"{name}\" needs statewide_votes or statewide_share"
                    )))
                }
            };
            if e.district_shares.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(AnalysisError::Enacted(format!(
                    "election \"{name}\" has a share outside [0, 1]"
                )));
            }
            per_election.insert(name.clone(), election_metrics(&e.district_shares, &swing, band));
        }
        Ok(EnactedMetrics {
            per_election,
            ..Default::default()
        })
    }
}

fn integer_histogram(values: &[f64]) -> Vec<(f64, u64)> {
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for &v in values {
        *counts.entry(v.round() as i64).or_default() += 1;
    }
    counts.into_iter().map(|(v, c)| (v as f64, c)).collect()
}

fn binned_histogram(values: &[f64], bins: usize) -> Vec<(f64, u64)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || hi.is_nan() {
        return vec![(lo, values.len() as u64)];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + width * (i as f64 + 0.5), c))
        .collect()
}

fn summarize(per_chain: &[&[f64]], discrete: bool, enacted: Option<f64>) -> Result<MeasureSummary, AnalysisError> {
    let all: Vec<f64> = per_chain.iter().flat_map(|c| c.iter().copied()).collect();
    if all.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let standard_error = if per_chain.len() >= 2 {
        let owned: Vec<Vec<f64>> = per_chain.iter().map(|c| c.to_vec()).collect();
        Some(cross_chain_mean_se(&owned)?.1)
    } else {
        None
    };
    Ok(MeasureSummary {
        mean: all.iter().sum::<f64>() / all.len() as f64,
        standard_error,
        min: all.iter().copied().fold(f64::INFINITY, f64::min),
        max: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        histogram: if discrete {
            integer_histogram(&all)
        } else {
            binned_histogram(&all, PERIMETER_BINS)
        },
        enacted: enacted.map(|v| Position::of(v, &all)),
    })
}

/// Mean of `y` for each distinct (integer) `x`, ascending in `x`.
pub fn conditional_means(x: &[f64], y: &[f64]) -> Vec<ConditionalMean> {
    let mut acc: BTreeMap<i64, (u64, f64)> = BTreeMap::new();
    for (&xi, &yi) in x.iter().zip(y) {
        let e = acc.entry(xi.round() as i64).or_default();
        e.0 += 1;
        e.1 += yi;
    }
    acc.into_iter()
        .map(|(x, (count, sum))| ConditionalMean {
            x: x as f64,
            count,
            mean: sum / count as f64,
        })
        .collect()
}

fn concat<F: Fn(&ChainColumns) -> &[f64]>(chains: &[ChainColumns], f: F) -> Vec<f64> {
    chains.iter().flat_map(|c| f(c).iter().copied()).collect()
}

pub fn summarize_ensemble(
    chains: &[ChainColumns],
    enacted: Option<&EnactedMetrics>,
) -> Result<EnsembleSummary, AnalysisError> {
    if chains.is_empty() || chains.iter().all(ChainColumns::is_empty) {
        return Err(AnalysisError::Empty);
    }
    let elections: Vec<String> = chains[0].elections.keys().cloned().collect();
    let mut per_election = BTreeMap::new();
    for name in &elections {
        let cols: Vec<&ElectionColumns> = chains
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.elections.get(name).ok_or_else(|| AnalysisError::MissingElection {
                    chain: i,
                    election: name.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        let k = cols[0].k;
        if let Some(c) = cols.iter().find(|c| c.k != k) {
            return Err(AnalysisError::DistrictCount {
                election: name.clone(),
                a: k,
                b: c.k,
            });
        }
        let en = enacted.and_then(|e| e.per_election.get(name));
        let seats: Vec<&[f64]> = cols.iter().map(|c| c.seats.as_slice()).collect();
        let competitive: Vec<&[f64]> = cols.iter().map(|c| c.competitive.as_slice()).collect();
        let shifted: Vec<&[f64]> = cols.iter().map(|c| c.competitive_shifted.as_slice()).collect();

        let rows: Vec<Vec<f64>> = cols.iter().flat_map(|c| c.rows().map(<[f64]>::to_vec)).collect();
        let rank_boxplots = (0..k)
            .map(|r| {
                let column: Vec<f64> = rows.iter().map(|row| row[r]).collect();
                Ok(RankBox {
                    rank: r + 1,
                    stats: BoxStats::of(&column)?,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;

        let all_seats: Vec<f64> = seats.concat();
        let all_comp: Vec<f64> = competitive.concat();
        let splits = concat(chains, |c| &c.counties_split);
        let mut conditional = BTreeMap::new();
        conditional.insert("seats_by_counties_split".into(), conditional_means(&splits, &all_seats));
        conditional.insert("counties_split_by_seats".into(), conditional_means(&all_seats, &splits));
        conditional.insert("competitive_by_seats".into(), conditional_means(&all_seats, &all_comp));
        conditional.insert("seats_by_competitive".into(), conditional_means(&all_comp, &all_seats));
        conditional.insert(
            "competitive_by_counties_split".into(),
            conditional_means(&splits, &all_comp),
        );
        conditional.insert(
            "counties_split_by_competitive".into(),
            conditional_means(&all_comp, &splits),
        );

        let enacted_election = match en {
            Some(m) => {
                if m.sorted_shares.len() != k {
                    return Err(AnalysisError::Enacted(format!(
                        "election \"{name}\" has {} districts, ensemble has {k}",
                        m.sorted_shares.len()
                    )));
                }
                Some(EnactedElection {
                    metrics: m.clone(),
                    ranks: extreme_rank_stats(&rows, &m.sorted_shares)?,
                })
            }
            None => None,
        };

        per_election.insert(
            name.clone(),
            ElectionSummary {
                seats: summarize(&seats, true, en.map(|m| m.seats as f64))?,
                competitive: summarize(&competitive, true, en.map(|m| m.competitive as f64))?,
                competitive_shifted: summarize(&shifted, true, en.map(|m| m.competitive_shifted as f64))?,
                rank_boxplots,
                conditional_means: conditional,
                enacted: enacted_election,
            },
        );
    }

    let col = |f: fn(&ChainColumns) -> &Vec<f64>| chains.iter().map(|c| f(c).as_slice()).collect::<Vec<&[f64]>>();
    Ok(EnsembleSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        chains: chains.len(),
        plans: chains.iter().map(ChainColumns::len).sum(),
        per_election,
        counties_split: summarize(
            &col(|c| &c.counties_split),
            true,
            enacted.and_then(|e| e.counties_split).map(|v| v as f64),
        )?,
        total_splits: summarize(
            &col(|c| &c.total_splits),
            true,
            enacted.and_then(|e| e.total_splits).map(|v| v as f64),
        )?,
        perimeter: summarize(&col(|c| &c.perimeter), false, enacted.and_then(|e| e.perimeter))?,
    })
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_histogram(path: &Path, hist: &[(f64, u64)]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value", "count"])?;
    for (v, c) in hist {
        w.write_record([v.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the plot-ready CSV tables for `summary` into `dir`.
pub fn write_csv_tables(summary: &EnsembleSummary, dir: &Path) -> Result<Vec<String>, AnalysisError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut hist = |name: String, h: &[(f64, u64)]| -> Result<(), AnalysisError> {
        write_histogram(&dir.join(&name), h)?;
        written.push(name);
        Ok(())
    };
    hist("counties_split.csv".into(), &summary.counties_split.histogram)?;
    hist("total_splits.csv".into(), &summary.total_splits.histogram)?;
    hist("perimeter.csv".into(), &summary.perimeter.histogram)?;
    for (name, e) in &summary.per_election {
        let tag = file_safe(name);
        hist(format!("seats_{tag}.csv"), &e.seats.histogram)?;
        hist(format!("competitive_{tag}.csv"), &e.competitive.histogram)?;
        hist(
            format!("competitive_shifted_{tag}.csv"),
            &e.competitive_shifted.histogram,
        )?;
    }
    for (name, e) in &summary.per_election {
        let tag = file_safe(name);
        let file = format!("boxplot_{tag}.csv");
        let mut w = csv::Writer::from_path(dir.join(&file))?;
        w.write_record(["rank", "p1", "p25", "p50", "p75", "p99"])?;
        for b in &e.rank_boxplots {
            let s = b.stats;
            w.write_record([
                b.rank.to_string(),
                s.p1.to_string(),
                s.p25.to_string(),
                s.p50.to_string(),
                s.p75.to_string(),
                s.p99.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(file);

        for (key, rows) in &e.conditional_means {
            let file = format!("cond_{key}_{tag}.csv");
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(["x", "count", "mean"])?;
            for r in rows {
                w.write_record([r.x.to_string(), r.count.to_string(), r.mean.to_string()])?;
            }
            w.flush()?;
            written.push(file);
        }
    }
    Ok(written)
}
