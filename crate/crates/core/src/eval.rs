//! Benchmark runs and search-behavior analytics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{par_map, run_trajectory, EnvironmentPort, LoopConfig, RolloutStatus};
use crate::endpoint::{DecodingParams, PolicyEndpoint};
use crate::question::BenchmarkItem;
use crate::trajectory::{normalize_answer, Trajectory};

/// An exact ratio `num / den`, shown to four decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Proportion {
    pub num: u64,
    pub den: u64,
}

impl Proportion {
    /// `None` when `den` is zero.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0).then_some(Self { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Four-decimal rendering, rounded half up in integer arithmetic.
    pub fn render(self) -> String {
        let scaled = (u128::from(self.num) * 10_000 * 2 + u128::from(self.den)) / (2 * u128::from(self.den));
        format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
    }

    /// Percentage with one decimal, as in the triage table.
    pub fn percent(self) -> String {
        let scaled = (u128::from(self.num) * 1_000 * 2 + u128::from(self.den)) / (2 * u128::from(self.den));
        format!("{}.{}%", scaled / 10, scaled % 10)
    }
}

impl fmt::Display for Proportion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn render_opt(p: Option<Proportion>) -> String {
    p.map_or_else(|| "-".to_string(), Proportion::render)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Completed,
    Truncated,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub item_id: String,
    #[serde(default)]
    pub benchmark_tag: String,
    pub trajectory: Trajectory,
    pub predicted: Option<String>,
    pub gold: String,
    pub correct: bool,
    pub search_count: usize,
    pub status: EvalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub loop_config: LoopConfig,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            loop_config: LoopConfig {
                decoding: DecodingParams::evaluation(),
                ..LoopConfig::default()
            },
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no results to report on")]
    Empty,
    #[error("baseline and search runs cover different items ({only_baseline} only in baseline, {only_search} only in search run)")]
    ItemMismatch {
        only_baseline: usize,
        only_search: usize,
    },
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
}

fn score(item: &BenchmarkItem, result: Result<crate::agent::RolloutResult, String>) -> EvalResult {
    let (trajectory, status, error) = match result {
        Ok(r) => {
            let status = match r.status {
                RolloutStatus::Completed => EvalStatus::Completed,
                RolloutStatus::Truncated => EvalStatus::Truncated,
                RolloutStatus::PolicyError | RolloutStatus::EnvError => EvalStatus::Error,
            };
            (r.trajectory, status, r.error)
        }
        Err(e) => (
            Trajectory::new(&item.id, &item.question),
            EvalStatus::Error,
            Some(e),
        ),
    };
    let predicted = trajectory.final_answer.clone();
    let correct = status != EvalStatus::Error
        && predicted
            .as_deref()
            .is_some_and(|p| normalize_answer(p) == normalize_answer(&item.gold));
    EvalResult {
        item_id: item.id.clone(),
        benchmark_tag: item.benchmark_tag.clone(),
        search_count: trajectory.search_count(),
        trajectory,
        predicted,
        gold: normalize_answer(&item.gold),
        correct,
        status,
        error,
    }
}

/// One result per item, in item order. Failures are kept and scored
/// incorrect.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    policy: &dyn PolicyEndpoint,
    env: &dyn EnvironmentPort,
    config: &EvalConfig,
) -> Vec<EvalResult> {
    par_map(items.len(), config.jobs, |i| {
        let item = &items[i];
        let r = run_trajectory(&item.to_source(), policy, env, &config.loop_config)
            .map_err(|e| e.to_string());
        score(item, r)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBucket {
    Zero,
    One,
    Many,
}

impl SearchBucket {
    pub fn of(search_count: usize) -> Self {
        match search_count {
            0 => SearchBucket::Zero,
            1 => SearchBucket::One,
            _ => SearchBucket::Many,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SearchBucket::Zero => "0",
            SearchBucket::One => "1",
            SearchBucket::Many => ">1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketStats {
    pub bucket: SearchBucket,
    pub n: u64,
    pub correct: u64,
    pub accuracy: Option<Proportion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorReport {
    pub n_items: u64,
    pub n_correct: u64,
    pub accuracy_overall: Proportion,
    /// Share of items with more than one search.
    pub multi_search_proportion: Proportion,
    pub buckets: Vec<BucketStats>,
}

impl BehaviorReport {
    pub fn bucket(&self, b: SearchBucket) -> &BucketStats {
        self.buckets
            .iter()
            .find(|s| s.bucket == b)
            .expect("all buckets present")
    }
}

pub fn behavior_report(results: &[EvalResult]) -> Result<BehaviorReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<SearchBucket, (u64, u64)> = [SearchBucket::Zero, SearchBucket::One, SearchBucket::Many]
        .into_iter()
        .map(|b| (b, (0, 0)))
        .collect();
    for r in results {
        let entry = counts.entry(SearchBucket::of(r.search_count)).or_default();
        entry.0 += 1;
        entry.1 += u64::from(r.correct);
    }
    let n = results.len() as u64;
    let n_correct = counts.values().map(|c| c.1).sum();
    Ok(BehaviorReport {
        n_items: n,
        n_correct,
        accuracy_overall: Proportion { num: n_correct, den: n },
        multi_search_proportion: Proportion {
            num: counts[&SearchBucket::Many].0,
            den: n,
        },
        buckets: counts
            .into_iter()
            .map(|(bucket, (n, correct))| BucketStats {
                bucket,
                n,
                correct,
                accuracy: Proportion::new(correct, n),
            })
            .collect(),
    })
}

impl fmt::Display for BehaviorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "items: {}", self.n_items)?;
        writeln!(
            f,
            "accuracy: {} ({}/{})",
            self.accuracy_overall, self.n_correct, self.n_items
        )?;
        writeln!(
            f,
            "multi-search proportion (>1 searches): {}",
            self.multi_search_proportion
        )?;
        writeln!(f, "{:<10}{:>8}{:>10}{:>10}", "searches", "items", "correct", "accuracy")?;
        for b in &self.buckets {
            writeln!(
                f,
                "{:<10}{:>8}{:>10}{:>10}",
                b.bucket.label(),
                b.n,
                b.correct,
                render_opt(b.accuracy)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageReport {
    pub failures: u64,
    pub search_triggered: u64,
    pub search_not_triggered: u64,
    pub corrected_by_search: u64,
    /// triggered / failures
    pub trigger_rate: Option<Proportion>,
    /// corrected / failures
    pub corrected_rate: Option<Proportion>,
    /// corrected / triggered
    pub success_rate: Option<Proportion>,
}

fn by_id(results: &[EvalResult]) -> Result<BTreeMap<&str, &EvalResult>, EvalError> {
    let mut map = BTreeMap::new();
    for r in results {
        if map.insert(r.item_id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateItem(r.item_id.clone()));
        }
    }
    Ok(map)
}

/// Among baseline failures: how many the search run searched on, and how
/// many of those it then answered correctly.
pub fn triage_report(
    baseline: &[EvalResult],
    search_run: &[EvalResult],
) -> Result<TriageReport, EvalError> {
    let base = by_id(baseline)?;
    let search = by_id(search_run)?;
    let base_ids: BTreeSet<&str> = base.keys().copied().collect();
    let search_ids: BTreeSet<&str> = search.keys().copied().collect();
    if base_ids != search_ids {
        return Err(EvalError::ItemMismatch {
            only_baseline: base_ids.difference(&search_ids).count(),
            only_search: search_ids.difference(&base_ids).count(),
        });
    }
    let (mut failures, mut triggered, mut corrected) = (0u64, 0u64, 0u64);
    for (id, b) in &base {
        if b.correct {
            continue;
        }
        failures += 1;
        let s = search[id];
        if s.search_count >= 1 {
            triggered += 1;
            if s.correct {
                corrected += 1;
            }
        }
    }
    Ok(TriageReport {
        failures,
        search_triggered: triggered,
        search_not_triggered: failures - triggered,
        corrected_by_search: corrected,
        trigger_rate: Proportion::new(triggered, failures),
        corrected_rate: Proportion::new(corrected, failures),
        success_rate: Proportion::new(corrected, triggered),
    })
}

impl fmt::Display for TriageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |p: Option<Proportion>| p.map_or_else(|| "-".into(), Proportion::percent);
        writeln!(f, "{:<46}{}", "Total base model failures", self.failures)?;
        writeln!(
            f,
            "{:<46}{} ({})",
            "Samples where search was triggered",
            self.search_triggered,
            pct(self.trigger_rate)
        )?;
        writeln!(
            f,
            "{:<46}{} ({})",
            "Samples where search was not triggered",
            self.search_not_triggered,
            pct(Proportion::new(self.search_not_triggered, self.failures))
        )?;
        writeln!(
            f,
            "{:<46}{} ({} of total)",
            "Successfully corrected by search",
            self.corrected_by_search,
            pct(self.corrected_rate)
        )?;
        writeln!(
            f,
            "{:<46}{}",
            "Search success rate (corrected / triggered)",
            pct(self.success_rate)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_four_decimals() {
        assert_eq!(Proportion { num: 2, den: 5 }.render(), "0.4000");
        assert_eq!(Proportion { num: 1, den: 3 }.render(), "0.3333");
        assert_eq!(Proportion { num: 2, den: 3 }.render(), "0.6667");
        assert_eq!(Proportion { num: 1, den: 1 }.render(), "1.0000");
        assert_eq!(Proportion { num: 1, den: 20000 }.render(), "0.0001");
        assert_eq!(Proportion { num: 202, den: 705 }.percent(), "28.7%");
        assert_eq!(Proportion { num: 58, den: 705 }.percent(), "8.2%");
        assert_eq!(Proportion { num: 58, den: 202 }.percent(), "28.7%");
        assert_eq!(Proportion::new(1, 0), None);
    }
}
