//! Offline acceptance suite. Each test covers one criterion and prints a
//! PASS/FAIL line; independent brute-force oracles live at the bottom and
//! never call the implementation paths they check.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use batchqa::corpus::{
    compute_token_stats, Corpus, Judgment, Navigation, Question, Transcript, Utterance,
    WhitespaceCounter,
};
use batchqa::dataset_builder::{export_eval_manifest, export_training_set, training_example};
use batchqa::fixture::synthetic_corpus;
use batchqa::grouping::{make_eval_groups, make_training_groups, SamplerConfig};
use batchqa::llm_backend::{Backend, BackendConfig, CorruptorMode, MockCorruptor, MockOracle};
use batchqa::metrics::{
    judgment_accuracy, navigation_f1, navigation_mae, AccuracyMode, NavLabel, NavigationPair,
};
use batchqa::parser::{parse_response, ParseStatus};
use batchqa::prompt::{render_prompt, RenderOptions};
use batchqa::runner::{run_sweep_on, RunConfig};

fn criterion(label: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("PASS {label}"),
        Err(cause) => {
            println!("FAIL {label}");
            std::panic::resume_unwind(cause);
        }
    }
}

fn mock_run_config(output_dir: std::path::PathBuf, backends: Vec<BackendConfig>, n_list: Vec<usize>) -> RunConfig {
    RunConfig {
        transcripts: "unused".into(),
        questions: "unused".into(),
        references: "unused".into(),
        backends,
        n_list,
        seed: 2024,
        output_dir,
        parse_mode: batchqa::parser::ParseMode::Strict,
        accuracy_mode: AccuracyMode::ExcludeDecodeFailures,
    }
}

#[test]
fn criterion_01_oracle_closure() {
    criterion("criterion 1: oracle closure (acc=1, F1=1, MAE=0, decode=0)", || {
        let start = Instant::now();
        let corpus = synthetic_corpus(20, 4..=60, 50, 31);
        let dir = tempfile::tempdir().unwrap();
        let config = mock_run_config(
            dir.path().to_path_buf(),
            vec![BackendConfig::mock_oracle("oracle")],
            vec![10, 20, 50],
        );
        let reports = run_sweep_on(&corpus, &config).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.judgment_accuracy, 1.0, "N={}", r.group_size);
            assert_eq!(r.navigation_f1, 1.0, "N={}", r.group_size);
            assert_eq!(r.navigation_mae, 0.0, "N={}", r.group_size);
            assert_eq!(r.json_decode_error_rate, 0.0, "N={}", r.group_size);
        }
        assert!(start.elapsed().as_secs() < 10, "runtime {:?}", start.elapsed());
    });
}

#[test]
fn criterion_02_metric_brute_force_equivalence() {
    criterion("criterion 2: metrics match brute-force oracles within 1e-9", || {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let count = rng.random_range(1..=50usize);
            let mut judgment_pairs = Vec::new();
            let mut nav_pairs = Vec::new();
            for _ in 0..count {
                let reference_j = if rng.random_bool(0.5) { Judgment::Yes } else { Judgment::No };
                let predicted_j = if rng.random_bool(0.1) {
                    None
                } else if rng.random_bool(0.5) {
                    Some(Judgment::Yes)
                } else {
                    Some(Judgment::No)
                };
                judgment_pairs.push((reference_j, predicted_j));

                let reference_nav = if rng.random_bool(0.2) {
                    NavLabel::Na
                } else {
                    NavLabel::Index(rng.random_range(1..=20))
                };
                let predicted_nav = if rng.random_bool(0.1) {
                    NavLabel::Unanswered
                } else if rng.random_bool(0.2) {
                    NavLabel::Na
                } else {
                    NavLabel::Index(rng.random_range(1..=20))
                };
                nav_pairs.push(NavigationPair {
                    reference: reference_nav,
                    predicted: predicted_nav,
                });
            }

            let acc = judgment_accuracy(&judgment_pairs).unwrap();
            assert!((acc - bf_accuracy(&judgment_pairs)).abs() < 1e-9);

            let f1 = navigation_f1(&nav_pairs).unwrap();
            assert!((f1 - bf_macro_f1(&nav_pairs)).abs() < 1e-9);

            let (mae, used) = navigation_mae(&nav_pairs);
            let (bf_mae_value, bf_used) = bf_mae(&nav_pairs);
            assert_eq!(used, bf_used);
            assert!((mae - bf_mae_value).abs() < 1e-9);
        }
    });
}

#[test]
fn criterion_03_mae_spot_values() {
    criterion("criterion 3: MAE spot values", || {
        let pair = |reference, predicted| NavigationPair { reference, predicted };
        let identity = vec![
            pair(NavLabel::Index(3), NavLabel::Index(3)),
            pair(NavLabel::Index(7), NavLabel::Index(7)),
        ];
        assert_eq!(navigation_mae(&identity), (0.0, 2));
        let shifted = vec![
            pair(NavLabel::Index(3), NavLabel::Index(5)),
            pair(NavLabel::Index(7), NavLabel::Index(7)),
        ];
        assert_eq!(navigation_mae(&shifted), (1.0, 2));
        let exclusion = vec![
            pair(NavLabel::Index(4), NavLabel::Index(6)),
            pair(NavLabel::Na, NavLabel::Index(2)),
        ];
        assert_eq!(navigation_mae(&exclusion), (2.0, 1));
    });
}

#[test]
fn criterion_04_decode_rate_calibration() {
    criterion("criterion 4: corruptor decode rate inside the 99% binomial CI", || {
        let start = Instant::now();
        let corpus = synthetic_corpus(2000, 4..=8, 6, 13);
        let groups = make_eval_groups(&corpus, 5, 1).unwrap();
        let prompts: Vec<_> = groups
            .iter()
            .map(|g| {
                let t = corpus.transcript(&g.transcript_id).unwrap();
                render_prompt(t, &corpus, g, &RenderOptions::default()).unwrap()
            })
            .collect();
        for p in [0.1, 0.25, 0.5] {
            let backend = MockCorruptor::new(
                MockOracle::from_corpus(&corpus, "corruptor"),
                p,
                CorruptorMode::Truncate,
                71,
            );
            let failures = prompts
                .iter()
                .filter(|prompt| {
                    let raw = backend.complete(prompt).unwrap().raw_text;
                    parse_response(&raw, 5).status == ParseStatus::DecodeError
                })
                .count();
            let rate = failures as f64 / prompts.len() as f64;
            let margin = 2.576 * (p * (1.0 - p) / prompts.len() as f64).sqrt();
            assert!(
                (rate - p).abs() <= margin,
                "p={p}: measured {rate}, margin {margin}"
            );
        }
        assert!(start.elapsed().as_secs() < 30, "runtime {:?}", start.elapsed());
    });
}

#[test]
fn criterion_05_parser_totality_fuzz() {
    criterion("criterion 5: 100k-case parser fuzz, total and consistent", || {
        let mut rng = ChaCha12Rng::seed_from_u64(5005);
        let valid = r#"{"Q1": ["Yes, confirmed by the agent", "5"], "Q2": ["No, never happened", "NA"], "Q3": ["Yes", 12]}"#;
        for case in 0..100_000u32 {
            let raw: String = if case % 2 == 0 {
                let len = rng.random_range(0..120);
                (0..len).map(|_| rng.random_range(0u8..=255) as char).collect()
            } else {
                // mutate a valid output: flip, delete or insert a few bytes
                let mut bytes = valid.as_bytes().to_vec();
                for _ in 0..rng.random_range(1..6) {
                    match rng.random_range(0..3) {
                        0 if !bytes.is_empty() => {
                            let i = rng.random_range(0..bytes.len());
                            bytes[i] = rng.random_range(32..127);
                        }
                        1 if !bytes.is_empty() => {
                            bytes.remove(rng.random_range(0..bytes.len()));
                        }
                        _ => {
                            let i = rng.random_range(0..=bytes.len());
                            bytes.insert(i, rng.random_range(32..127));
                        }
                    }
                }
                String::from_utf8_lossy(&bytes).into_owned()
            };
            let n = rng.random_range(1..=5);
            let outcome = parse_response(&raw, n);
            match outcome.status {
                ParseStatus::DecodeError => {
                    assert!(outcome.answers.is_empty(), "decode error with answers: {raw:?}");
                    assert!(outcome.error_class.is_some());
                }
                ParseStatus::Ok => assert!(outcome.error_class.is_none()),
            }
        }
    });
}

#[test]
fn criterion_06_appendix_conformance() {
    criterion("criterion 6: verbatim example object + golden prompt", || {
        let example = r#"{
    "Q1": ["Yes, the agent verified customer's information at the start of the call", "5"],
    "Q2": ["No, the agent did not send a copy to the customer.", "NA"]
}"#;
        let outcome = parse_response(example, 2);
        assert_eq!(outcome.status, ParseStatus::Ok);
        assert!(outcome.anomalies.is_empty());
        assert_eq!(outcome.answers[&1].judgment, Judgment::Yes);
        assert_eq!(outcome.answers[&1].navigation, Some(Navigation::Index(5)));
        assert_eq!(outcome.answers[&2].judgment, Judgment::No);
        assert_eq!(outcome.answers[&2].navigation, Some(Navigation::Na));

        let transcript = Transcript {
            id: "golden-call".into(),
            utterances: vec![
                Utterance {
                    index: 1,
                    speaker: None,
                    text: "Thank you for calling Acme support, my name is Dana.".into(),
                },
                Utterance {
                    index: 2,
                    speaker: None,
                    text: "Hi Dana, I need help with my order.".into(),
                },
            ],
        };
        let question = Question {
            id: "gq1".into(),
            text: "Did the agent introduce themselves?".into(),
        };
        let corpus = Corpus::new(
            vec![transcript.clone()],
            vec![question],
            vec![batchqa::corpus::ReferenceAnswer {
                transcript_id: "golden-call".into(),
                question_id: "gq1".into(),
                judgment: Judgment::Yes,
                navigation: Navigation::Index(1),
            }],
        )
        .unwrap();
        let group = batchqa::grouping::QuestionGroup {
            transcript_id: "golden-call".into(),
            question_ids: vec!["gq1".into()],
        };
        let prompt = render_prompt(&transcript, &corpus, &group, &RenderOptions::default()).unwrap();
        let golden = include_str!("golden/prompt_m2_n1.txt");
        assert_eq!(prompt.text, golden, "rendered prompt drifted from golden file");
    });
}

#[test]
fn criterion_07_sampler_distribution() {
    criterion("criterion 7: K ~ Uniform{5..10} over 10k draws", || {
        let corpus = synthetic_corpus(10_000, 4..=5, 10, 3);
        let config = SamplerConfig::new(90, 10);
        let groups = make_training_groups(&corpus, &config).unwrap();
        assert_eq!(groups.len(), 10_000);
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for g in &groups {
            *counts.entry(g.group_size()).or_default() += 1;
        }
        let expected = 10_000.0 / 6.0;
        let mut chi_square = 0.0;
        for k in 5..=10usize {
            let observed = *counts.get(&k).unwrap_or(&0) as f64;
            assert!(observed > 0.0, "K={k} never drawn");
            assert!(
                (observed / 10_000.0 - 1.0 / 6.0).abs() <= 0.02,
                "K={k} frequency {}",
                observed / 10_000.0
            );
            chi_square += (observed - expected).powi(2) / expected;
        }
        // 0.999 quantile of chi-square with 5 degrees of freedom
        assert!(chi_square < 20.515, "chi-square {chi_square}");
    });
}

#[test]
fn criterion_08_dataset_arithmetic() {
    criterion("criterion 8: 300 x N=10 = 3000 entries; training round-trips", || {
        let corpus = synthetic_corpus(300, 4..=12, 15, 8);
        let dir = tempfile::tempdir().unwrap();
        let entries =
            export_eval_manifest(&corpus, &[10], 55, &dir.path().join("eval.jsonl")).unwrap();
        let total: usize = entries.iter().map(|e| e.question_ids.len()).sum();
        assert_eq!(total, 3000);

        let config = SamplerConfig::new(55, 10);
        let manifest =
            export_training_set(&corpus, &config, &dir.path().join("train.jsonl")).unwrap();
        assert_eq!(manifest.records, 300);
        for group in make_training_groups(&corpus, &config).unwrap() {
            let example = training_example(&corpus, &group).unwrap();
            let outcome = parse_response(&example.completion, group.group_size());
            assert_eq!(outcome.status, ParseStatus::Ok);
            assert!(outcome.anomalies.is_empty());
            assert_eq!(outcome.answers.len(), group.group_size());
        }
    });
}

#[test]
fn criterion_09_determinism_and_resume() {
    criterion("criterion 9: seeded sweeps byte-identical; resume equals full run", || {
        let corpus = synthetic_corpus(10, 4..=16, 25, 21);
        let backends = || {
            vec![
                BackendConfig::mock_oracle("oracle"),
                BackendConfig::mock_corruptor("corruptor", 0.3, CorruptorMode::Truncate, 9),
            ]
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_sweep_on(&corpus, &mock_run_config(dir_a.path().into(), backends(), vec![5, 10])).unwrap();
        run_sweep_on(&corpus, &mock_run_config(dir_b.path().into(), backends(), vec![5, 10])).unwrap();
        let report_a = std::fs::read(dir_a.path().join("report.csv")).unwrap();
        assert_eq!(report_a, std::fs::read(dir_b.path().join("report.csv")).unwrap());

        // interrupt dir_b's oracle N=5 archive, then resume
        let archive = dir_b.path().join("archive").join("oracle_N5.jsonl");
        let kept: Vec<String> = std::fs::read_to_string(&archive)
            .unwrap()
            .lines()
            .take(4)
            .map(str::to_string)
            .collect();
        std::fs::write(&archive, kept.join("\n") + "\n").unwrap();
        run_sweep_on(&corpus, &mock_run_config(dir_b.path().into(), backends(), vec![5, 10])).unwrap();
        assert_eq!(report_a, std::fs::read(dir_b.path().join("report.csv")).unwrap());
    });
}

#[test]
fn criterion_10_percentile_oracle() {
    criterion("criterion 10: nearest-rank percentiles on 1..100", || {
        // one transcript per count, each with `count` single-word utterances
        let transcripts: Vec<Transcript> = (1..=100u32)
            .map(|count| Transcript {
                id: format!("t{count:03}"),
                utterances: (1..=count)
                    .map(|index| Utterance {
                        index,
                        speaker: None,
                        text: "word".into(),
                    })
                    .collect(),
            })
            .collect();
        let corpus = Corpus::new(transcripts, Vec::new(), Vec::new()).unwrap();
        let stats = compute_token_stats(&corpus, &WhitespaceCounter).unwrap();
        let mut sorted = stats.token_counts.clone();
        sorted.sort_unstable();
        for (p, expected) in [(25u8, 25usize), (50, 50), (75, 75), (95, 95)] {
            assert_eq!(stats.percentiles[&p], expected);
            // sort-based oracle: smallest value with rank >= ceil(p/100*n)
            let rank = (p as usize * sorted.len() + 99) / 100;
            assert_eq!(sorted[rank - 1], expected);
        }
    });
}

// ---- independent brute-force oracles ----

fn bf_accuracy(pairs: &[(Judgment, Option<Judgment>)]) -> f64 {
    let mut correct = 0usize;
    for (reference, predicted) in pairs {
        if let Some(p) = predicted {
            if p == reference {
                correct += 1;
            }
        }
    }
    correct as f64 / pairs.len() as f64
}

fn bf_mae(pairs: &[NavigationPair]) -> (f64, usize) {
    let mut diffs = Vec::new();
    for pair in pairs {
        if let (NavLabel::Index(y), NavLabel::Index(y_hat)) = (pair.reference, pair.predicted) {
            diffs.push((y as i64 - y_hat as i64).abs() as f64);
        }
    }
    if diffs.is_empty() {
        (0.0, 0)
    } else {
        (diffs.iter().sum::<f64>() / diffs.len() as f64, diffs.len())
    }
}

fn bf_macro_f1(pairs: &[NavigationPair]) -> f64 {
    let mut labels = BTreeSet::new();
    for pair in pairs {
        for label in [pair.reference, pair.predicted] {
            if label != NavLabel::Unanswered {
                labels.insert(label);
            }
        }
    }
    if labels.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for label in &labels {
        let mut tp = 0.0;
        let mut predicted_count = 0.0;
        let mut reference_count = 0.0;
        for pair in pairs {
            if pair.predicted == *label {
                predicted_count += 1.0;
            }
            if pair.reference == *label {
                reference_count += 1.0;
            }
            if pair.predicted == *label && pair.reference == *label {
                tp += 1.0;
            }
        }
        let precision = if predicted_count > 0.0 { tp / predicted_count } else { 0.0 };
        let recall = if reference_count > 0.0 { tp / reference_count } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    sum / labels.len() as f64
}
