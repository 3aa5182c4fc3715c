import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgmt.core import Bridge, DecisionRecord, GradualTrace, PoolEntry, QeScore, RunReport, SentencePair
from bridgmt.errors import UsageError
from bridgmt.evaluation import (
    BaselineRunner,
    ProgressRecord,
    analyze_bridges,
    bridges_of,
    export_trajectories,
    read_trajectory,
    run_baseline,
    score_report,
)
from bridgmt.gateway import CountingTransport, MockTransport
from bridgmt.gateway.mocks import make_chat_handler
from bridgmt.metrics import euclidean_distance

from helpers import config_dict, make_config, make_gateway, oracle_pool, synthetic_corpus


def counting_setup(k, mode="k_shot", pool_n=10):
    cfg = make_config(baseline={"mode": mode, "k": k})
    t = CountingTransport(MockTransport(make_chat_handler({"fallback": "fewshot_count"})))
    gw = make_gateway(cfg, transports={"translator": t})
    pool = oracle_pool(pool_n, embed=lambda xs: gw.embed("embedder", xs))
    return cfg, gw, pool, t


# --- baselines --------------------------------------------------------------------


def test_zero_shot_baseline_sends_bare_prompt():
    cfg, gw, pool, t = counting_setup(0, mode="zero_shot")
    report = run_baseline(synthetic_corpus(3), cfg, gw, pool)
    assert t.calls == 3
    assert all(len(req["messages"]) == 2 for req in t.requests)  # system + user
    assert all(r.output.endswith("#0") for r in report.per_sentence)


def test_k_shot_baseline_uses_k_examples():
    cfg, gw, pool, t = counting_setup(3)
    report = run_baseline(synthetic_corpus(4), cfg, gw, pool)
    assert t.calls == 4
    assert all(r.output.endswith("#3") and len(r.starts) == 3 for r in report.per_sentence)
    assert report.summary["method"] == "k_shot@3"


def test_k0_behaves_as_zero_shot():
    cfg, gw, pool, _ = counting_setup(0)
    runner = BaselineRunner(cfg, gw, pool)
    assert runner.retrieve("anything at all") == []


def test_retrieval_is_similarity_ordered_and_distinct():
    cfg, gw, pool, _ = counting_setup(3, pool_n=3)
    runner = BaselineRunner(cfg, gw, pool)
    end = pool[1].source
    got = runner.retrieve(end)
    assert got[0].pair.id == pool[1].pair.id
    assert {e.pair.id for e in got} == {e.pair.id for e in pool}
    end_vec = gw.embed("embedder", [end])[0]
    sims = [sum(a * b for a, b in zip(end_vec, e.embedding)) /
            math.sqrt(sum(a * a for a in end_vec) * sum(b * b for b in e.embedding)) for e in got]
    assert sims == sorted(sims, reverse=True)


def test_baseline_preconditions():
    cfg, gw, pool, _ = counting_setup(11)
    with pytest.raises(UsageError):
        BaselineRunner(cfg, gw, pool)
    cfg, gw, pool, _ = counting_setup(2)
    no_gold = [PoolEntry(SentencePair(e.pair.id, e.source), e.representative_translation, e.qe) for e in pool]
    with pytest.raises(UsageError):
        BaselineRunner(cfg, gw, no_gold)


# --- score tables -----------------------------------------------------------------


def scorer_setup():
    d = config_dict()
    d["backends"]["ref"] = {"kind": "qe", "endpoint": "mock:", "reference_based": True,
                            "mock": {"kind": "oracle"}}
    from bridgmt.config import config_from_dict

    cfg = config_from_dict(d)
    return cfg, make_gateway(cfg)


def report_of(outputs):
    recs = [DecisionRecord(pid, (text, QeScore(0.5, "qe"))) for pid, text in outputs]
    return RunReport.build(recs, "fp", 0)


def test_gold_outputs_score_100():
    _, gw = scorer_setup()
    corpus = synthetic_corpus(5)
    table = score_report({"gold": report_of([(p.id, p.gold) for p in corpus])}, ["qe", "ref"], gw, corpus)
    assert [c.mean for c in table.cells] == [100.0, 100.0]
    assert table.to_tsv().splitlines()[1] == "gold\ten-ko\t100.00\t100.00"


def test_dominating_method_scores_higher():
    _, gw = scorer_setup()
    corpus = synthetic_corpus(6)
    good = report_of([(p.id, p.gold) for p in corpus])
    bad = report_of([(p.id, p.gold[: len(p.gold) // 2]) for p in corpus])
    table = score_report({"good": good, "bad": bad}, ["ref"], gw, corpus)
    means = {c.method: c.mean for c in table.cells}
    assert means["good"] > means["bad"]


@given(st.permutations(range(6)))
def test_score_table_ignores_row_order(order):
    _, gw = scorer_setup()
    corpus = synthetic_corpus(6)
    outputs = [(p.id, p.gold[::2] or p.gold) for p in corpus]
    a = score_report({"m": report_of(outputs)}, ["ref"], gw, corpus)
    b = score_report({"m": report_of([outputs[i] for i in order])}, ["ref"], gw, corpus)
    assert a == b


def test_reference_scorer_without_gold_is_usage_error():
    _, gw = scorer_setup()
    corpus = [SentencePair("c:1", "no gold here")]
    with pytest.raises(UsageError):
        score_report({"m": report_of([("c:1", "x")])}, ["ref"], gw, corpus)


def test_failed_records_are_left_out():
    _, gw = scorer_setup()
    corpus = synthetic_corpus(2)
    recs = [DecisionRecord(corpus[0].id, (corpus[0].gold, QeScore(1.0, "qe"))),
            DecisionRecord(corpus[1].id, None, error="boom")]
    (cell,) = score_report({"m": RunReport.build(recs, "fp", 0)}, ["ref"], gw, corpus).cells
    assert cell.n == 1 and cell.mean == 100.0


# --- progress ---------------------------------------------------------------------


def test_hand_progress_example():
    r = ProgressRecord.from_distances("b", [3.0, 2.0, 1.5])
    assert r.progresses == (1.0, 0.5)
    assert r.average_progress == 0.75


def test_two_sentence_bridge_has_one_progress():
    assert len(ProgressRecord.from_distances("b", [2.0, 0.0]).progresses) == 1
    with pytest.raises(UsageError):
        ProgressRecord.from_distances("b", [1.0])


@given(st.lists(st.floats(0, 100), min_size=2, max_size=16))
def test_progress_telescopes(distances):
    r = ProgressRecord.from_distances("b", distances)
    assert math.fsum(r.progresses) == pytest.approx(distances[0] - distances[-1], abs=1e-9)
    assert len(r.progresses) == len(distances) - 1


def trace(sentences):
    b = Bridge(sentences[0], sentences[-1], tuple(sentences))
    steps = tuple((s, s[::-1]) for s in sentences)
    return GradualTrace(b, steps, steps[-1][1], len(steps))


def char_embed(xs):
    return [[float(x.count(c)) for c in "abcdefgh"] for x in xs]


def test_analyze_bridges_source_and_target_sides():
    traces = [("e:1#0", trace(["aaa", "aab", "abb", "bbb"])), ("e:2#0", trace(["cc", "dd"])), ("e:3#0", trace(["x"]))]
    records, summary = analyze_bridges(traces, char_embed, target_embed=char_embed, gold={"e:1#0": "bbb"})
    src = [r for r in records if r.side == "source"]
    assert [r.bridge_id for r in src] == ["e:1#0", "e:2#0"]
    assert all(r.distances[-1] == 0.0 for r in src)
    assert summary["skipped_single_sentence"] == 1
    assert summary["target"]["n_bridges"] == 1
    assert summary["source"]["stddev"] >= 0


def test_constant_embedder_gives_zero_progress():
    traces = [("b", trace(["ab", "cd", "ef"]))]
    records, summary = analyze_bridges(traces, lambda xs: [[1.0, 2.0]] * len(xs))
    assert records[0].progresses == (0.0, 0.0)
    assert summary["source"] == {"n_bridges": 1, "mean": 0.0, "stddev": 0.0}


def test_analyze_requires_bridges():
    with pytest.raises(UsageError):
        analyze_bridges([], char_embed)


def test_export_round_trip_matches_analysis(tmp_path):
    rng = random.Random(0)
    traces = [(f"e:{i}#0", trace(["".join(rng.choice("abcdefgh") for _ in range(6)) for _ in range(rng.randint(2, 6))]))
              for i in range(5)]
    traces = [(bid, t) for bid, t in traces if len(set(t.bridge.sentences)) == len(t.bridge.sentences)]
    manifest = export_trajectories(traces, char_embed, tmp_path)
    records, _ = analyze_bridges(traces, char_embed)
    for row, rec, (_, t) in zip(manifest, records, traces):
        sents, vecs = read_trajectory(tmp_path / row["file"])
        assert sents == list(t.bridge.sentences) and row["n"] == len(sents)
        assert [euclidean_distance(v, vecs[-1]) for v in vecs] == list(rec.distances)


def test_export_empty_writes_only_manifest(tmp_path):
    assert export_trajectories([], char_embed, tmp_path) == []
    assert (tmp_path / "manifest.csv").read_text() == "bridge_id,file,n,dim\n"


def test_bridges_of_records():
    recs = [DecisionRecord("e:1", ("z", QeScore(0.1, "qe")), (trace(["a", "b"]), trace(["c", "b"])), ("x", None))]
    assert [bid for bid, _ in bridges_of(recs)] == ["e:1#0", "e:1#1"]
