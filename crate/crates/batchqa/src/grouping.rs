//! Question grouping: fixed-size eval groups, stochastic-size training groups,
//! and fold partitions.
//!
//! All sampling runs on ChaCha12, seeded per transcript by mixing the run seed
//! with a hash of the transcript id, so results do not depend on transcript
//! order or on which other group sizes are requested.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionGroup {
    pub transcript_id: String,
    /// Ordered: position i (1-based) corresponds to key "Q{i}" in responses.
    pub question_ids: Vec<String>,
}

impl QuestionGroup {
    pub fn group_size(&self) -> usize {
        self.question_ids.len()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub k_min: usize,
    pub n_max: usize,
}

impl SamplerConfig {
    pub fn new(seed: u64, n_max: usize) -> Self {
        SamplerConfig {
            seed,
            k_min: 5,
            n_max,
        }
    }
}

/// splitmix64 finalizer, used to mix a run seed with a stream tag.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Per-(seed, tag, transcript) substream so group sizes never perturb each other.
pub fn substream_rng(seed: u64, tag: u64, transcript_id: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(seed ^ mix(tag) ^ hash_str(transcript_id)))
}

fn sample_questions(
    corpus: &Corpus,
    transcript_id: &str,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<QuestionGroup> {
    let pool = corpus.referenced_questions(transcript_id);
    if pool.len() < n {
        return Err(Error::InsufficientQuestions {
            transcript_id: transcript_id.to_string(),
            available: pool.len(),
            needed: n,
        });
    }
    let picked = sample(rng, pool.len(), n);
    let question_ids = picked.iter().map(|i| pool[i].id.clone()).collect();
    Ok(QuestionGroup {
        transcript_id: transcript_id.to_string(),
        question_ids,
    })
}

/// One group of exactly `n` referenced questions per transcript.
pub fn make_eval_groups(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<QuestionGroup>> {
    if n == 0 {
        return Err(Error::Config("group size must be >= 1".into()));
    }
    corpus
        .transcripts
        .iter()
        .map(|t| {
            let mut rng = substream_rng(seed, n as u64, &t.id);
            sample_questions(corpus, &t.id, n, &mut rng)
        })
        .collect()
}

/// Draw K uniformly from the (clamped) interval, then K distinct questions.
pub fn make_training_groups(corpus: &Corpus, config: &SamplerConfig) -> Result<Vec<QuestionGroup>> {
    corpus
        .transcripts
        .iter()
        .map(|t| {
            let pool_size = corpus.referenced_questions(&t.id).len();
            // Degenerate pools clamp the interval rather than erroring out.
            let lo = config.k_min.min(pool_size);
            let hi = config.n_max.min(pool_size);
            if lo == 0 || hi < lo {
                return Err(Error::InsufficientQuestions {
                    transcript_id: t.id.clone(),
                    available: pool_size,
                    needed: config.k_min,
                });
            }
            let mut rng = substream_rng(config.seed, 0x7261696e, &t.id);
            let k = rng.random_range(lo..=hi);
            sample_questions(corpus, &t.id, k, &mut rng)
        })
        .collect()
}

/// Partition each transcript's referenced questions into consecutive folds.
/// The final fold may be short when the pool is not divisible.
pub fn make_folds(corpus: &Corpus, fold_size: usize) -> Result<Vec<Vec<QuestionGroup>>> {
    if fold_size == 0 {
        return Err(Error::Config("fold size must be >= 1".into()));
    }
    Ok(corpus
        .transcripts
        .iter()
        .map(|t| {
            corpus
                .referenced_questions(&t.id)
                .chunks(fold_size)
                .map(|chunk| QuestionGroup {
                    transcript_id: t.id.clone(),
                    question_ids: chunk.iter().map(|q| q.id.clone()).collect(),
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::synthetic_corpus;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn eval_group_has_n_distinct_questions() {
        let corpus = synthetic_corpus(3, 4..=8, 50, 7);
        let groups = make_eval_groups(&corpus, 10, 42).unwrap();
        assert_eq!(groups.len(), 3);
        for g in &groups {
            assert_eq!(g.group_size(), 10);
            let distinct: HashSet<_> = g.question_ids.iter().collect();
            assert_eq!(distinct.len(), 10);
            for qid in &g.question_ids {
                assert!(corpus.reference(&g.transcript_id, qid).is_some());
            }
        }
    }

    #[test]
    fn insufficient_pool_errors() {
        let corpus = synthetic_corpus(1, 4..=4, 8, 7);
        let err = make_eval_groups(&corpus, 10, 42).unwrap_err();
        assert!(matches!(err, Error::InsufficientQuestions { available: 8, needed: 10, .. }));
    }

    #[test]
    fn same_seed_same_groups() {
        let corpus = synthetic_corpus(5, 4..=8, 30, 7);
        let a = make_eval_groups(&corpus, 10, 42).unwrap();
        let b = make_eval_groups(&corpus, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = make_eval_groups(&corpus, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn eval_selection_roughly_uniform() {
        let corpus = synthetic_corpus(1, 6..=6, 50, 7);
        let n = 10;
        let trials = 1000;
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seed in 0..trials {
            for g in make_eval_groups(&corpus, n, seed).unwrap() {
                for qid in g.question_ids {
                    *counts.entry(qid).or_default() += 1;
                }
            }
        }
        let expected = trials as f64 * n as f64 / 50.0;
        for q in &corpus.questions {
            let c = *counts.get(&q.id).unwrap_or(&0) as f64;
            assert!(
                (c / trials as f64 - expected / trials as f64).abs() < 0.05,
                "question {} selected {c} times, expected ~{expected}",
                q.id
            );
        }
    }

    #[test]
    fn training_k_collapses_when_interval_is_a_point() {
        let corpus = synthetic_corpus(20, 4..=8, 30, 7);
        let cfg = SamplerConfig::new(1, 5);
        for g in make_training_groups(&corpus, &cfg).unwrap() {
            assert_eq!(g.group_size(), 5);
        }
    }

    #[test]
    fn training_k_clamped_to_small_pool() {
        // pool of 6 referenced questions, K_min=5, N_max=10 -> K in {5, 6}
        let corpus = synthetic_corpus(1, 4..=8, 6, 7);
        let mut seen = HashSet::new();
        for seed in 0..200 {
            let cfg = SamplerConfig {
                seed,
                k_min: 5,
                n_max: 10,
            };
            let groups = make_training_groups(&corpus, &cfg).unwrap();
            seen.insert(groups[0].group_size());
        }
        assert_eq!(seen, HashSet::from([5, 6]));
    }

    #[test]
    fn folds_partition_the_pool() {
        let corpus = synthetic_corpus(2, 4..=8, 25, 7);
        let per_transcript = make_folds(&corpus, 10).unwrap();
        for (t, folds) in corpus.transcripts.iter().zip(&per_transcript) {
            let sizes: Vec<usize> = folds.iter().map(|f| f.group_size()).collect();
            assert_eq!(sizes, vec![10, 10, 5]);
            let mut union: Vec<&str> = folds
                .iter()
                .flat_map(|f| f.question_ids.iter().map(String::as_str))
                .collect();
            let distinct: HashSet<&str> = union.iter().copied().collect();
            assert_eq!(distinct.len(), union.len(), "folds overlap");
            union.sort_unstable();
            let mut pool: Vec<&str> = corpus
                .referenced_questions(&t.id)
                .iter()
                .map(|q| q.id.as_str())
                .collect();
            pool.sort_unstable();
            assert_eq!(union, pool);
        }
    }

    #[test]
    fn fifty_questions_make_five_folds() {
        let corpus = synthetic_corpus(1, 4..=8, 50, 7);
        let folds = &make_folds(&corpus, 10).unwrap()[0];
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.group_size() == 10));
    }
}
