#!/usr/bin/env python3
"""Smoke test for the batchqa_py extension module.

Build and stage the module first:

    cargo build -p batchqa-py --release
    cp target/release/libbatchqa_py.so python/batchqa_py.so

then run `python3 python/smoke_test.py`.
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import batchqa_py as bq


def main() -> None:
    corpus = bq.Corpus.synthetic(5, 4, 12, 20, seed=7)
    assert corpus.transcript_count == 5
    assert corpus.question_count == 20
    assert corpus.reference_count == 100

    percentiles = corpus.token_percentiles()
    assert sorted(percentiles) == [25, 50, 75, 95]
    assert percentiles[25] <= percentiles[95]

    groups = corpus.eval_groups(8, seed=42)
    assert len(groups) == 5
    transcript_id, question_ids = groups[0]
    assert len(question_ids) == 8
    assert groups == corpus.eval_groups(8, seed=42), "grouping must be seed-deterministic"

    prompt = corpus.render_prompt(transcript_id, question_ids)
    assert prompt.count("Question ") == 8
    assert '"Q1": ["Yes, the agent verified' in prompt

    oracle = corpus.oracle_response(transcript_id, question_ids)
    parsed = bq.parse_response(oracle, 8)
    assert parsed["status"] == "ok"
    assert parsed["anomalies"] == []
    assert len(parsed["answers"]) == 8

    messy = "Sure thing!\n```json\n" + oracle + "\n```\nHope that helps."
    assert bq.extract_json(messy) == oracle
    assert bq.parse_response(messy, 8)["answers"] == parsed["answers"]

    broken = bq.parse_response('{"Q1": ["Yes", "5",]}', 1)
    assert broken["status"] == "decode_error"
    assert broken["error_class"] == "JsonSyntax"
    repaired = bq.parse_response('{"Q1": ["Yes", "5",]}', 1, mode="lenient")
    assert repaired["status"] == "ok"

    acc = bq.judgment_accuracy([("Yes", "Yes"), ("No", "Yes"), ("Yes", None)])
    assert abs(acc - 1 / 3) < 1e-12

    mae, used = bq.navigation_mae([(4, 6), ("NA", 2)])
    assert (mae, used) == (2.0, 1)

    f1 = bq.navigation_f1([(1, 1), (1, 2), (2, 2)])
    assert abs(f1 - 2 / 3) < 1e-12
    assert bq.navigation_f1([(3, None)]) == 0.0

    with tempfile.TemporaryDirectory() as tmp:
        train = os.path.join(tmp, "train.jsonl")
        records = corpus.export_training_set(train, seed=11, n_max=10)
        assert records == 5
        assert sum(1 for _ in open(train)) == 5

        manifest = os.path.join(tmp, "eval.jsonl")
        entries = corpus.export_eval_manifest(manifest, [5, 10], seed=11)
        assert entries == 10

    print("smoke test passed")


if __name__ == "__main__":
    main()
