import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgmt.core import QeScore
from bridgmt.errors import ParseError, UsageError
from bridgmt.pool import PoolBuildConfig, build_pool, load_pool, pick_representative, save_pool
from bridgmt.prompts import TranslationPromptAssets

from helpers import make_config, make_gateway, synthetic_corpus


def s(text, v):
    return text, QeScore(v, "qe")


def test_representative_modal():
    samples = [s("a", 0.1), s("b", 0.9), s("a", 0.2), s("c", 0.8)]
    assert pick_representative(samples) == samples[0]


def test_representative_modal_ignores_whitespace_and_normalization():
    samples = [s("café ", 0.1), s("b", 0.9), s("café", 0.2)]
    assert pick_representative(samples) == samples[0]


def test_representative_tied_modes_prefer_higher_mean_qe():
    samples = [s("a", 0.2), s("b", 0.5), s("a", 0.2), s("b", 0.6)]
    assert pick_representative(samples)[0] == "b"


def test_representative_tied_modes_and_means_take_first_seen():
    samples = [s("b", 0.5), s("a", 0.5), s("a", 0.5), s("b", 0.5)]
    assert pick_representative(samples) == samples[0]


def test_representative_closest_to_mean_without_repeats():
    samples = [s("a", 0.1), s("b", 0.5), s("c", 0.9), s("d", 0.45)]
    # mean is 0.4875; d is 0.0375 away, b is 0.0125 away
    assert pick_representative(samples)[0] == "b"


def test_representative_closest_to_mean_tie_takes_first():
    samples = [s("a", 0.25), s("b", 0.75)]
    assert pick_representative(samples)[0] == "a"


def test_representative_singleton_and_empty():
    assert pick_representative([s("only", 0.3)])[0] == "only"
    with pytest.raises(UsageError):
        pick_representative([])


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.floats(0, 1)), min_size=1, max_size=8))
def test_representative_is_one_of_the_samples(raw):
    samples = [s(t, v) for t, v in raw]
    assert pick_representative(samples) in samples


def pool_setup(n_dev=20, **pool_build):
    cfg = make_config(pool_build={"samples_per_sentence": 3, "pool_size": 8, **pool_build})
    gw = make_gateway(cfg)
    prompts = TranslationPromptAssets.for_pair(cfg.lang_pair)
    return cfg, gw, prompts, synthetic_corpus(n_dev, seed=5, name="dev")


def test_build_pool_size_order_and_embeddings():
    cfg, gw, prompts, dev = pool_setup()
    pool = build_pool(dev, cfg.pool_build, gw, prompts, seed=1)
    assert len(pool) == 8
    qes = [e.qe.value for e in pool]
    assert qes == sorted(qes, reverse=True)
    assert all(e.embedding is not None for e in pool)
    assert len({e.pair.id for e in pool}) == 8
    # one chat per sample; QE only for distinct translations; one embedding batch
    # of 8 sentences. Every call except the embedding batch leaves one cache entry.
    assert gw.network_calls == len(gw.cache) - 8 + 1
    assert 20 * 3 + 20 + 1 <= gw.network_calls <= 20 * 3 * 2 + 1


def test_build_pool_is_deterministic_and_parallel_safe():
    cfg, gw, prompts, dev = pool_setup()
    a = build_pool(dev, cfg.pool_build, gw, prompts, seed=1)
    cfg2, gw2, _, _ = pool_setup(concurrency=4)
    b = build_pool(dev, cfg2.pool_build, gw2, prompts, seed=1)
    assert a == b


def test_build_pool_rejects_oversized_request():
    cfg, gw, prompts, dev = pool_setup(n_dev=5)
    with pytest.raises(UsageError):
        build_pool(dev, cfg.pool_build, gw, prompts)
    with pytest.raises(UsageError):
        build_pool([], cfg.pool_build, gw, prompts)
    with pytest.raises(UsageError):
        PoolBuildConfig(pool_size=0)


def test_pool_file_round_trip(tmp_path):
    cfg, gw, prompts, dev = pool_setup()
    pool = build_pool(dev, cfg.pool_build, gw, prompts)
    save_pool(pool, tmp_path / "pool.jsonl")
    assert load_pool(tmp_path / "pool.jsonl") == pool


def write_lines(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def entry(i, emb=(1.0, 0.0)):
    return {
        "pair": {"id": f"dev:{i}", "source": f"s{i}", "gold": None, "lang_pair": ["en", "ko"]},
        "representative_translation": f"t{i}",
        "qe": {"value": 0.5, "scorer_id": "qe"},
        "embedding": list(emb),
    }


@pytest.mark.parametrize(
    "rows,line",
    [
        ([entry(1), entry(1)], 2),
        ([entry(1), entry(2, (1.0, 0.0, 0.0))], 2),
        ([entry(1), {"pair": {"id": "x"}}], 2),
    ],
)
def test_load_pool_errors_name_the_line(tmp_path, rows, line):
    p = tmp_path / "pool.jsonl"
    write_lines(p, rows)
    with pytest.raises(ParseError) as err:
        load_pool(p)
    assert err.value.line == line
