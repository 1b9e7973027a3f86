//! Fixture bundles: a scripted policy, a canned corpus and judge rules in
//! one JSON document, enough to run every pipeline stage offline.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::search::corpus::CannedCorpus;
use crate::search::{ObservationPipeline, PipelineConfig};
use crate::stubs::{ExtractiveSummarizer, RuleJudge, ScriptedPolicy, TemplateRewriter};

const BUILTIN: &str = include_str!("../fixtures/bundle.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureBundle {
    pub policy: ScriptedPolicy,
    #[serde(default)]
    pub corpus: CannedCorpus,
    #[serde(default)]
    pub judge: RuleJudge,
    #[serde(default = "default_overlap")]
    pub summarizer_min_overlap: usize,
}

fn default_overlap() -> usize {
    ExtractiveSummarizer::default().min_overlap
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Endpoints and environment built from a bundle, shareable across threads.
#[derive(Clone)]
pub struct FixtureWorld {
    pub policy: Arc<ScriptedPolicy>,
    pub corpus: Arc<CannedCorpus>,
    pub summarizer: Arc<ExtractiveSummarizer>,
    pub judge: Arc<RuleJudge>,
    pub rewriter: Arc<TemplateRewriter>,
    pub env: Arc<ObservationPipeline>,
}

impl FixtureBundle {
    /// The bundle shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("built-in fixture bundle parses")
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| FixtureError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn world(&self, pipeline: PipelineConfig) -> FixtureWorld {
        let corpus = Arc::new(self.corpus.clone());
        let summarizer = Arc::new(ExtractiveSummarizer::with_min_overlap(self.summarizer_min_overlap));
        let env = ObservationPipeline::new(corpus.clone(), corpus.clone(), summarizer.clone(), pipeline);
        FixtureWorld {
            policy: Arc::new(self.policy.clone()),
            corpus,
            summarizer,
            judge: Arc::new(self.judge.clone()),
            rewriter: Arc::new(TemplateRewriter),
            env: Arc::new(env),
        }
    }
}

/// Counts a synthetic baseline/search-run pair is calibrated to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriageCalibration {
    pub items: usize,
    pub failures: usize,
    pub triggered: usize,
    pub corrected: usize,
}

/// Builds baseline and search-run results with exactly the calibrated
/// counts. Item order is shuffled deterministically by `seed`; baseline
/// successes and untriggered failures get varied search-run outcomes so
/// that only the triage rules separate them.
pub fn triage_fixture(
    cal: TriageCalibration,
    seed: u64,
) -> (Vec<crate::eval::EvalResult>, Vec<crate::eval::EvalResult>) {
    use crate::eval::{EvalResult, EvalStatus};
    use crate::trajectory::{Action, Observation, Trajectory, Turn};

    assert!(cal.failures <= cal.items && cal.triggered <= cal.failures && cal.corrected <= cal.triggered);
    let result = |id: &str, searches: usize, correct: bool| {
        let mut t = Trajectory::new(id, "synthetic");
        for _ in 0..searches {
            t.turns.push(
                Turn::new(vec![Action::think("check"), Action::search("statute")])
                    .with_observation(Observation::fixture("text")),
            );
        }
        let answer = if correct { "A" } else { "B" };
        t.turns.push(Turn::new(vec![Action::think("done"), Action::answer(answer)]));
        t.refresh_final_answer();
        EvalResult {
            item_id: id.to_string(),
            benchmark_tag: "synthetic".into(),
            predicted: t.final_answer.clone(),
            trajectory: t,
            gold: "A".into(),
            correct,
            search_count: searches,
            status: EvalStatus::Completed,
            error: None,
        }
    };

    // Small LCG so the order does not depend on an RNG crate.
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut order: Vec<usize> = (0..cal.items).collect();
    for i in (1..order.len()).rev() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        order.swap(i, (state >> 33) as usize % (i + 1));
    }

    let mut baseline = Vec::with_capacity(cal.items);
    let mut search = Vec::with_capacity(cal.items);
    for (rank, &slot) in order.iter().enumerate() {
        let id = format!("t{slot:05}");
        let failed = rank < cal.failures;
        baseline.push(result(&id, 0, !failed));
        let (searches, correct) = if !failed {
            (rank % 3, rank % 2 == 0)
        } else if rank < cal.triggered {
            (1 + rank % 3, rank < cal.corrected)
        } else {
            // Not triggered; some answer correctly without searching, which
            // must not count as a search correction.
            (0, rank % 5 == 0)
        };
        search.push(result(&id, searches, correct));
    }
    baseline.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    (baseline, search)
}
