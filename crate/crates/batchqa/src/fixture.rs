//! Seeded synthetic corpora for tests, benchmarks and offline dry runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::ops::RangeInclusive;

use crate::corpus::{
    Corpus, Judgment, Navigation, Question, ReferenceAnswer, Speaker, Transcript, Utterance,
};

const PHRASES: &[&str] = &[
    "thanks for calling, how can I help you today",
    "I would like to check on my recent order",
    "let me pull up your account details",
    "can you confirm the billing address on file",
    "the shipment left the warehouse yesterday",
    "I will send a confirmation email shortly",
    "is there anything else I can help with",
    "my preferred contact method is email",
];

/// Deterministic corpus: `n_transcripts` transcripts with utterance counts
/// drawn from `m_range`, a shared pool of `questions_per_transcript` questions,
/// and one reference answer per (transcript, question) pair.
pub fn synthetic_corpus(
    n_transcripts: usize,
    m_range: RangeInclusive<u32>,
    questions_per_transcript: usize,
    seed: u64,
) -> Corpus {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let transcripts: Vec<Transcript> = (0..n_transcripts)
        .map(|t| {
            let m = rng.random_range(m_range.clone());
            let utterances = (1..=m)
                .map(|index| Utterance {
                    index,
                    speaker: Some(if index % 2 == 1 {
                        Speaker::Agent
                    } else {
                        Speaker::Customer
                    }),
                    text: format!("{} ({t}-{index})", PHRASES[(index as usize) % PHRASES.len()]),
                })
                .collect();
            Transcript {
                id: format!("call-{t:04}"),
                utterances,
            }
        })
        .collect();

    let questions: Vec<Question> = (1..=questions_per_transcript)
        .map(|i| Question {
            id: format!("q{i:03}"),
            text: format!("Did the agent complete step {i} of the call protocol?"),
        })
        .collect();

    let mut references = Vec::new();
    for t in &transcripts {
        for q in &questions {
            let judgment = if rng.random_bool(0.6) {
                Judgment::Yes
            } else {
                Judgment::No
            };
            let navigation = match judgment {
                Judgment::Yes => Navigation::Index(rng.random_range(1..=t.utterance_count())),
                Judgment::No => Navigation::Na,
            };
            references.push(ReferenceAnswer {
                transcript_id: t.id.clone(),
                question_id: q.id.clone(),
                judgment,
                navigation,
            });
        }
    }

    Corpus::new(transcripts, questions, references).expect("synthetic corpus is valid")
}
