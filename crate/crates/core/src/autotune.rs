//! Pass-order search producing the per-example autotuner baseline.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompileResult, CompilerBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Exhaustive,
    Random,
    Greedy,
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchStrategy::Exhaustive => "exhaustive",
            SearchStrategy::Random => "random",
            SearchStrategy::Greedy => "greedy",
        })
    }
}

impl FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(SearchStrategy::Exhaustive),
            "random" => Ok(SearchStrategy::Random),
            "greedy" => Ok(SearchStrategy::Greedy),
            other => Err(format!("unknown search strategy '{other}' (expected exhaustive, random or greedy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub strategy: SearchStrategy,
    pub max_depth: usize,
    /// Cap on compiled candidates, not counting the reference pipeline.
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            strategy: SearchStrategy::Exhaustive,
            max_depth: 3,
            max_evals: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutotuneResult {
    pub best_passes: Vec<String>,
    pub best_count: u64,
    /// Count after the backend's reference pipeline.
    pub oz_count: u64,
    pub evaluations: usize,
}

/// Autotuner outcome for one corpus example, as stored in labels files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutotuneLabel {
    pub example_id: String,
    pub best_passes: Vec<String>,
    pub best_count: u64,
    pub oz_count: u64,
    pub source_count: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutotuneError {
    #[error("input does not compile: {0}")]
    Uncompilable(String),
    #[error("invalid search budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Candidate {
    count: u64,
    passes: Vec<String>,
}

impl Candidate {
    fn key(&self) -> (u64, usize, &[String]) {
        (self.count, self.passes.len(), &self.passes)
    }
}

fn better(a: Candidate, b: Candidate) -> Candidate {
    match a.key().cmp(&b.key()) {
        Ordering::Greater => b,
        _ => a,
    }
}

fn evaluate(ir: &str, passes: Vec<String>, backend: &dyn CompilerBackend) -> Option<Candidate> {
    match backend.compile(ir, &passes) {
        CompileResult::Ok { inst_count, .. } => Some(Candidate {
            count: inst_count as u64,
            passes,
        }),
        CompileResult::Failed { .. } => None,
    }
}

/// All pipelines of length `0..=depth` over `names`, shortest first.
pub fn enumerate_pipelines(names: &[String], depth: usize) -> Vec<Vec<String>> {
    let mut all = vec![vec![]];
    let mut frontier: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..depth {
        frontier = frontier
            .iter()
            .flat_map(|p| {
                names.iter().map(move |n| {
                    let mut q = p.clone();
                    q.push(n.clone());
                    q
                })
            })
            .collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

fn best_of(ir: &str, candidates: Vec<Vec<String>>, backend: &dyn CompilerBackend) -> Option<Candidate> {
    candidates
        .into_par_iter()
        .filter_map(|p| evaluate(ir, p, backend))
        .reduce_with(better)
}

/// Searches pass orderings for the smallest compiled instruction count.
///
/// The empty pipeline and the backend's reference pipeline are always
/// candidates, so the result never loses to either. Ties prefer the shorter
/// pipeline, then the lexicographically smaller list of names.
pub fn autotune(ir: &str, backend: &dyn CompilerBackend, budget: &SearchBudget) -> Result<AutotuneResult, AutotuneError> {
    if budget.max_evals == 0 {
        return Err(AutotuneError::InvalidBudget("max_evals must be at least 1".into()));
    }
    let empty = match backend.compile(ir, &[]) {
        CompileResult::Ok { inst_count, .. } => Candidate {
            count: inst_count as u64,
            passes: vec![],
        },
        CompileResult::Failed { error_message } => return Err(AutotuneError::Uncompilable(error_message)),
    };
    let reference = backend.catalog().reference_pipeline().to_vec();
    let oz = evaluate(ir, reference, backend)
        .ok_or_else(|| AutotuneError::Uncompilable("reference pipeline failed".into()))?;
    let oz_count = oz.count;
    let names = backend.catalog().names().to_vec();

    let (found, evaluations) = match budget.strategy {
        SearchStrategy::Exhaustive => {
            let mut all = enumerate_pipelines(&names, budget.max_depth);
            all.truncate(budget.max_evals);
            let n = all.len();
            (best_of(ir, all, backend), n)
        }
        SearchStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            let all: Vec<Vec<String>> = (0..budget.max_evals)
                .map(|_| {
                    let len = rng.random_range(0..=budget.max_depth);
                    (0..len).map(|_| names.choose(&mut rng).expect("non-empty catalog").clone()).collect()
                })
                .collect();
            let n = all.len();
            (best_of(ir, all, backend), n)
        }
        SearchStrategy::Greedy => {
            let mut current = empty.clone();
            let mut evals = 1;
            for _ in 0..budget.max_depth {
                if evals >= budget.max_evals {
                    break;
                }
                let room = budget.max_evals - evals;
                let next: Vec<Vec<String>> = names
                    .iter()
                    .take(room)
                    .map(|n| {
                        let mut p = current.passes.clone();
                        p.push(n.clone());
                        p
                    })
                    .collect();
                evals += next.len();
                match best_of(ir, next, backend) {
                    Some(c) if c.count < current.count => current = c,
                    _ => break,
                }
            }
            (Some(current), evals)
        }
    };

    let best = [Some(empty), Some(oz), found].into_iter().flatten().reduce(better).expect("at least one candidate");
    Ok(AutotuneResult {
        best_passes: best.passes,
        best_count: best.count,
        oz_count,
        evaluations: evaluations + 1,
    })
}
