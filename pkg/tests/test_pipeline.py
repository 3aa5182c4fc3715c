import json

import pytest

from bridgmt.core import RunReport, SentencePair
from bridgmt.errors import ProviderError, UsageError
from bridgmt.gateway import CountingTransport, MockTransport
from bridgmt.gateway.mocks import make_chat_handler
from bridgmt.pipeline import (
    Pipeline,
    compare_costs,
    cost_report,
    cost_table_tsv,
    load_report,
    resolve_pre_threshold,
    run_corpus,
    split_holdout,
)

from helpers import make_config, make_gateway, oracle_pool, synthetic_corpus


def setup(cache=None, transports=None, **sections):
    cfg = make_config(**sections)
    gw = make_gateway(cfg, cache, transports=transports)
    pool = oracle_pool(15, embed=lambda xs: gw.embed("embedder", xs))
    return cfg, gw, Pipeline(cfg, gw, pool)


def test_records_follow_corpus_order_and_invariants(tmp_path):
    cfg, gw, pipe = setup(filters={"pre_threshold": 0.8})
    corpus = synthetic_corpus(12)
    report = run_corpus(corpus, pipe, tmp_path)
    lines = (tmp_path / "records.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["end_id"] for line in lines] == [p.id for p in corpus]
    for r in report.per_sentence:
        assert r.error is None
        if r.prefiltered_out:
            assert r.zero_shot[1].value >= 0.8 and not r.bridges
            assert set(r.timings) == {"zero_shot", "pre_filter"}
        else:
            assert len(r.bridges) == 3 and len(r.starts) == 3
            assert r.output_qe.value == max(r.zero_shot[1].value, r.aggregate[1].value)
            assert {"selection", "bridging", "gradual_mt", "aggregation", "post_filter"} <= set(r.timings)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["summary"]["n_sentences"] == 12
    assert summary["summary"]["pre_threshold"] == 0.8


def test_concurrency_does_not_change_output(tmp_path):
    corpus = synthetic_corpus(10)
    _, _, serial = setup()
    _, _, parallel = setup(concurrency=4)
    run_corpus(corpus, serial, tmp_path / "a")
    run_corpus(corpus, parallel, tmp_path / "b")
    for name in ("records.jsonl", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resume_after_torn_write(tmp_path):
    corpus = synthetic_corpus(8)
    _, _, pipe = setup()
    run_corpus(corpus, pipe, tmp_path / "full")
    full = (tmp_path / "full" / "records.jsonl").read_text(encoding="utf-8")

    # a crashed run: three complete records and half of the fourth
    crashed = tmp_path / "crashed"
    _, _, pipe2 = setup()
    run_corpus(corpus[:3], pipe2, crashed)
    lines = full.splitlines(keepends=True)
    with open(crashed / "records.jsonl", "a", encoding="utf-8") as fh:
        fh.write(lines[3][:40])

    calls = []
    original = pipe2.translate_sentence
    pipe2.translate_sentence = lambda p: calls.append(p.id) or original(p)
    run_corpus(corpus, pipe2, crashed)
    assert calls == [p.id for p in corpus[3:]]
    assert (crashed / "records.jsonl").read_text(encoding="utf-8") == full


def test_resume_refuses_a_different_config(tmp_path):
    corpus = synthetic_corpus(3)
    _, _, pipe = setup()
    run_corpus(corpus, pipe, tmp_path)
    _, _, other = setup(seed=99)
    with pytest.raises(UsageError):
        run_corpus(corpus, other, tmp_path)
    # execution-only knobs may change between attempts
    _, _, faster = setup(concurrency=3)
    run_corpus(corpus, faster, tmp_path)


def test_duplicate_ids_rejected():
    _, _, pipe = setup()
    p = SentencePair("x:1", "Hello there.")
    with pytest.raises(UsageError):
        run_corpus([p, p], pipe)


def failing_translator(word):
    inner = make_chat_handler({"fallback": "glossary"})

    def handle(payload):
        if word in payload["messages"][-1]["content"]:
            return 400, {"error": "refused"}
        return inner(payload)

    return CountingTransport(MockTransport(handle))


def test_fail_soft_records_error_and_continues():
    corpus = [SentencePair("c:1", "Good old road."), SentencePair("c:2", "Poison pill here."),
              SentencePair("c:3", "New stone bridge.")]
    _, _, pipe = setup(transports={"translator": failing_translator("Poison")})
    report = run_corpus(corpus, pipe)
    errs = [r.error for r in report.per_sentence]
    assert errs[0] is None and errs[2] is None
    assert errs[1].startswith("ProviderError")
    assert report.summary["n_failed"] == 1


def test_strict_mode_raises():
    corpus = [SentencePair("c:1", "Poison pill here.")]
    _, _, pipe = setup(strict=True, transports={"translator": failing_translator("Poison")})
    with pytest.raises(ProviderError):
        run_corpus(corpus, pipe)


def test_k1_skips_aggregation_and_sampled_mode_caps_calls():
    _, _, pipe = setup(selection={"k": 1}, gradual={"sampling_mode": "sampled"})
    report = run_corpus(synthetic_corpus(6), pipe)
    for r in report.per_sentence:
        assert "aggregation" not in r.timings
        assert len(r.bridges) == 1
        assert r.bridges[0].call_count <= 3 and r.bridges[0].bridge.origin == "sampled"
        assert r.aggregate[0] == r.bridges[0].final


def test_pool_smaller_than_k_is_rejected():
    cfg = make_config()
    gw = make_gateway(cfg)
    with pytest.raises(UsageError):
        Pipeline(cfg, gw, oracle_pool(2))


def test_holdout_split_is_deterministic_and_disjoint():
    corpus = synthetic_corpus(40)
    ev, ho = split_holdout(corpus, 0.1, 3)
    assert len(ho) == 4 and len(ev) == 36
    assert not {p.id for p in ev} & {p.id for p in ho}
    assert split_holdout(corpus, 0.1, 3) == (ev, ho)


def test_threshold_from_holdout(tmp_path):
    corpus = synthetic_corpus(40)
    cfg, _, pipe = setup(filters={"pre_percentile": 50, "holdout_fraction": 0.25})
    pipe2, todo, extra = resolve_pre_threshold(pipe, corpus)
    assert len(todo) == 30 and len(extra["holdout_ids"]) == 10
    held = [p for p in corpus if p.id in set(extra["holdout_ids"])]
    scores = sorted(pipe.score(p.source, pipe.zero_shot(p.source)).value for p in held)
    assert extra["pre_threshold"] == scores[4]
    assert pipe2.filters.pre == extra["pre_threshold"]
    assert pipe.filters.pre is None and pipe2.cfg == cfg  # snapshot keeps the percentile form
    report = run_corpus(todo, pipe2, tmp_path, extra_summary=extra)
    assert all(r.prefiltered_out == (r.zero_shot[1].value >= extra["pre_threshold"]) for r in report.per_sentence)
    assert load_report(tmp_path).summary == report.summary


def test_cost_report_shares_and_ratio():
    _, _, pipe = setup(gradual={"sampling_mode": "full"})
    full = run_corpus(synthetic_corpus(6), pipe)
    _, _, sampled_pipe = setup(gradual={"sampling_mode": "sampled"})
    sampled = run_corpus(synthetic_corpus(6), sampled_pipe)
    rows = cost_report(full)
    assert sum(r.percent for r in rows) == pytest.approx(100.0)
    assert [r.stage for r in rows] == [
        "zero_shot", "selection", "bridging", "gradual_mt", "aggregation", "post_filter"
    ]
    ratios = compare_costs(full, sampled)
    assert ratios["gradual_mt"] <= 1.0
    assert ratios["zero_shot"] == pytest.approx(1.0)
    assert cost_table_tsv(rows).startswith("stage\tsentences")
    assert cost_report(RunReport.build([], "fp", 0)) == []


def test_wall_timing_is_positive():
    _, _, pipe = setup(timing="wall")
    report = run_corpus(synthetic_corpus(2), pipe)
    assert all(v > 0 for r in report.per_sentence for v in r.timings.values())
