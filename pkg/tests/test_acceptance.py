"""Acceptance gate: one printed verdict line per numbered criterion.

Each test prints "criterion N: PASS/FAIL - detail" directly to the
terminal (bypassing capture) so the gate is readable in any run log,
then asserts. Criterion 11 needs a multi-gigabyte published model and
is skipped in CI by design.
"""
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from vecstore import (
    Featurizer,
    QuerySession,
    Tier,
    build_synthetic_store,
    english_like_words,
    fixture_records,
    gaussian_records,
    open_store,
    write_store,
)
from vecstore.core import QuantizationSpec, normalize
from vecstore.oov import oov_vector, string_similarity_candidates
from vecstore.search import approx_topk, closer_than, exact_topk
from vecstore.synthetic import SPECTRUM_DECAY

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def verdict(capfd):
    """Print one criterion verdict line, bypassing output capture."""
    def emit(num: int, ok: bool, detail: str, state: str | None = None) -> None:
        state = state or ("PASS" if ok else "FAIL")
        with capfd.disabled():
            print(f"criterion {num:2d}: {state} - {detail}", flush=True)
    return emit


@pytest.fixture(scope="module")
def heavy_100k(tmp_path_factory):
    """100k x 300d HEAVY store shared by the ANN and cache criteria."""
    path = tmp_path_factory.mktemp("ann100k") / "h100k.store"
    started = time.perf_counter()
    build_synthetic_store(str(path), 100000, 300, tier=Tier.HEAVY, seed=0)
    return str(path), time.perf_counter() - started


def test_criterion_01_round_trip_quantization(tmp_path, verdict):
    started = time.perf_counter()
    configs = [(1000, 50, 2), (1000, 300, 7), (10000, 300, 7), (100000, 50, 2)]
    worst_ratio = 0.0
    presentation_ok = True
    for n, d, p in configs:
        records = list(gaussian_records(n, d, seed=7 * p + d))
        path = tmp_path / f"rt-{n}-{d}-{p}.store"
        write_store(iter(records), str(path), tier=Tier.LIGHT, precision=p)
        by_key = dict(records)
        with open_store(str(path)) as reader:
            scale = reader.metadata.quantization.scale
            stored = reader.vector_ints.astype(np.float64) / scale
            oracle = np.empty_like(stored)
            for i in range(reader.metadata.key_count):
                oracle[i] = normalize(by_key[reader.key_at(i)])
            err = float(np.max(np.abs(stored - oracle)))
            tol = 0.5 * 10.0 ** (-p) + 1e-12
            worst_ratio = max(worst_ratio, err / tol)
            f32 = stored.astype(np.float32)
            for i in range(0, n, max(1, n // 200)):
                if not np.array_equal(reader.read_vector(i), f32[i]):
                    presentation_ok = False
    elapsed = time.perf_counter() - started
    ok = worst_ratio <= 1.0 and presentation_ok and elapsed < 120
    verdict(1, ok,
            f"worst component error {worst_ratio:.3f}x the 0.5*10^-p bound "
            f"over 4 stores up to 100k keys, d in (50,300), p in (2,7); "
            f"float32 presentation exact; {elapsed:.1f}s")
    assert worst_ratio <= 1.0
    assert presentation_ok
    assert elapsed < 120


def test_criterion_02_lazy_open(tmp_path, verdict):
    sizes = (10_000, 100_000, 1_000_000)
    opens = {}
    reads = {}
    for n in sizes:
        path = tmp_path / f"lazy-{n}.store"
        build_synthetic_store(str(path), n, 32, tier=Tier.LIGHT, seed=1)
        best = float("inf")
        for _ in range(3):
            t0 = time.perf_counter()
            reader = open_store(str(path))
            best = min(best, time.perf_counter() - t0)
            reads[n] = reader.bytes_read_at_open
            reader.close()
        opens[n] = best
    spread = max(opens.values()) / min(opens.values())
    ok = (reads[1_000_000] < (1 << 20)
          and opens[1_000_000] < 0.050
          and spread < 2.0)
    verdict(2, ok,
            f"1M-key open read {reads[1_000_000]} bytes in "
            f"{opens[1_000_000] * 1000:.2f} ms; spread across 10k/100k/1M "
            f"= {spread:.2f}x")
    assert reads[1_000_000] < (1 << 20)
    assert opens[1_000_000] < 0.050
    assert spread < 2.0


def test_criterion_03_oov_determinism(tmp_path, verdict):
    store = str(tmp_path / "oov-fixture.store")
    write_store(iter(fixture_records(500, 24, salt="oov-fixture")), store,
                tier=Tier.MEDIUM)
    code = (
        "import hashlib, sys\n"
        "from vecstore import english_like_words, open_store\n"
        "from vecstore.oov import oov_vector\n"
        f"with open_store({store!r}) as reader:\n"
        "    digest = hashlib.sha256()\n"
        "    for word in english_like_words(1000, seed=123):\n"
        "        digest.update(oov_vector(reader, word).tobytes())\n"
        "print(digest.hexdigest())\n"
    )
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True,
                           text=True, check=True).stdout.strip()
            for _ in range(2)]
    committed = json.loads((DATA_DIR / "oov_checksums.json").read_text())["sha256"]
    matches = 0
    with open_store(store) as reader:
        for word, want in committed.items():
            got = hashlib.sha256(oov_vector(reader, word).tobytes()).hexdigest()
            matches += got == want
    ok = runs[0] == runs[1] and matches == len(committed)
    verdict(3, ok,
            f"two process runs over 1000 words agree (digest {runs[0][:12]}..); "
            f"{matches}/{len(committed)} committed checksums match")
    assert runs[0] == runs[1]
    assert matches == len(committed)


def test_criterion_04_oov_quality(tmp_path, verdict):
    started = time.perf_counter()
    words = english_like_words(10000, seed=11)
    store = str(tmp_path / "quality.store")
    write_store(gaussian_records(10000, 300, seed=11, keys=words), store,
                tier=Tier.MEDIUM)
    vocab = set(words)
    suffixes = ("z", "ly")
    with open_store(store) as reader:
        rng = np.random.default_rng(42)
        sampled = [reader.key_at(int(i))
                   for i in rng.choice(reader.metadata.key_count, 400, replace=False)]
        pair_words = [w for w in sampled if len(w) >= 5][:100]
        perturbed = []
        pair_cos = []
        for i, w in enumerate(pair_words):
            candidate = w + suffixes[i % len(suffixes)]
            perturbed.append(candidate)
            synth = oov_vector(reader, candidate).astype(np.float64)
            base = reader.read_vector(reader.lookup_key(w)).astype(np.float64)
            pair_cos.append(float(synth @ base / (np.linalg.norm(synth) * np.linalg.norm(base))))
        random_cos = []
        for i, candidate in enumerate(perturbed):
            other = pair_words[(i + 1 + int(rng.integers(50))) % len(pair_words)]
            synth = oov_vector(reader, candidate).astype(np.float64)
            base = reader.read_vector(reader.lookup_key(other)).astype(np.float64)
            random_cos.append(float(synth @ base / (np.linalg.norm(synth) * np.linalg.norm(base))))
        gap = float(np.mean(pair_cos) - np.mean(random_cos))

        hits = 0
        total = 0
        for w in sampled:
            if total == 100:
                break
            if len(w) < 6:
                continue
            at = int(rng.integers(1, len(w) - 2))
            swapped = w[:at] + w[at + 1] + w[at] + w[at + 2:]
            if swapped == w or swapped in vocab:
                continue
            total += 1
            top3 = string_similarity_candidates(reader, swapped)[:3]
            if w in {reader.key_at(o) for o, _ in top3}:
                hits += 1
    elapsed = time.perf_counter() - started
    ok = gap >= 0.4 and total == 100 and hits >= 90 and elapsed < 60
    verdict(4, ok,
            f"suffix-perturbation mean cosine beats random pairs by {gap:.3f} "
            f"(>= 0.4); transposed words rank their source in match top-3 "
            f"{hits}/{total}; {elapsed:.1f}s")
    assert gap >= 0.4
    assert total == 100 and hits >= 90
    assert elapsed < 60


def test_criterion_05_exact_search_oracle(tmp_path, verdict):
    store = str(tmp_path / "oracle.store")
    write_store(gaussian_records(10000, 32, seed=55), store, tier=Tier.LIGHT)
    with open_store(store) as reader:
        count = reader.metadata.key_count
        vectors = np.asarray([reader.read_vector(i) for i in range(count)],
                             dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1)
        rng = np.random.default_rng(91)

        topk_ok = 0
        for _ in range(100):
            q = rng.standard_normal(32)
            sims = np.clip(vectors @ q / (norms * np.linalg.norm(q)), -1.0, 1.0)
            order = np.lexsort((np.arange(count), -sims))[:10]
            want = [(reader.key_at(int(i)), sims[i]) for i in order]
            got = exact_topk(reader, q, 10)
            keys_equal = [h.key for h in got] == [k for k, _ in want]
            sims_equal = np.allclose([h.similarity for h in got],
                                     [s for _, s in want], rtol=0, atol=1e-12)
            topk_ok += keys_equal and sims_equal

        closer_ok = 0
        for _ in range(50):
            ia, ib = (int(x) for x in rng.integers(0, count, size=2))
            sims = vectors @ vectors[ia] / (norms * norms[ia])
            keep = [i for i in np.argsort(-sims, kind="stable")
                    if sims[i] > sims[ib] and i != ia]
            want_keys = [reader.key_at(int(i)) for i in keep]
            closer_ok += closer_than(reader, reader.key_at(ia),
                                     reader.key_at(ib)) == want_keys
    ok = topk_ok == 100 and closer_ok == 50
    verdict(5, ok,
            f"{topk_ok}/100 top-10 scans and {closer_ok}/50 closer-than "
            f"queries identical to the naive double-precision oracle")
    assert topk_ok == 100
    assert closer_ok == 50


def test_criterion_06_ann_recall_and_speed(heavy_100k, verdict):
    store, build_s = heavy_100k
    started = time.perf_counter()
    with open_store(store) as reader:
        forest = reader.load_ann()
        d = reader.metadata.dimension
        sigma = (1.0 + np.arange(d)) ** (-SPECTRUM_DECAY / 2.0)
        rng = np.random.default_rng(7)
        queries = rng.standard_normal((100, d)) * sigma

        t0 = time.perf_counter()
        exact_sets = [{h.key for h in exact_topk(reader, q, 10)} for q in queries]
        t_exact = (time.perf_counter() - t0) / len(queries)

        t0 = time.perf_counter()
        full_sets = [{h.key for h in approx_topk(forest, reader, q, 10, effort=1.0)}
                     for q in queries]
        t_full = (time.perf_counter() - t0) / len(queries)

        t0 = time.perf_counter()
        for q in queries:
            approx_topk(forest, reader, q, 10, effort=0.1)
        t_low = (time.perf_counter() - t0) / len(queries)

    recall = float(np.mean([len(a & b) / 10 for a, b in zip(exact_sets, full_sets)]))
    total = build_s + (time.perf_counter() - started)
    ok = (recall >= 0.95 and t_low <= 0.5 * t_full and t_full <= 0.33 * t_exact
          and total < 300)
    verdict(6, ok,
            f"100k x 300d recall@10 {recall:.4f} (>= 0.95); per query "
            f"exact {t_exact * 1000:.2f} ms, effort 1.0 {t_full * 1000:.2f} ms, "
            f"effort 0.1 {t_low * 1000:.2f} ms; build {build_s:.1f}s, "
            f"total {total:.1f}s")
    assert recall >= 0.95
    assert t_low <= 0.5 * t_full
    assert t_full <= 0.33 * t_exact
    assert total < 300


def test_criterion_07_featurizer_contract(verdict):
    dim_ok = Featurizer(100).dimension == 4
    feat = Featurizer(100, namespace="POS")
    one = feat.query("NN")
    two = feat.query("NN")
    det_ok = np.array_equal(one, two)
    norm_ok = all(
        abs(float(np.linalg.norm(feat.query(k).astype(np.float64))) - 1.0) < 1e-5
        for k in ("NN", "VB", "JJ", "custom-tag")
    )
    ok = dim_ok and det_ok and norm_ok
    verdict(7, ok,
            f"featurizer_dim(100) = {Featurizer(100).dimension}; repeated "
            f"queries identical; outputs unit-norm")
    assert dim_ok and det_ok and norm_ok


def test_criterion_08_concatenation(tmp_path, verdict):
    wide = str(tmp_path / "w300.store")
    narrow = str(tmp_path / "w50.store")
    write_store(iter(fixture_records(50, 300, salt="concat-a")), wide,
                tier=Tier.MEDIUM)
    write_store(iter(fixture_records(50, 50, salt="concat-b")), narrow,
                tier=Tier.MEDIUM)
    with open_store(wide) as a, open_store(narrow) as b:
        session = QuerySession([a, b])
        key = a.key_at(7)
        out = session.query(key)
        oov = session.query("uberx")
        width_ok = session.total_dimension == 350 and out.shape == (350,)
        halves_ok = (np.array_equal(out[:300], a.query(key))
                     and np.array_equal(out[300:], b.query(key))
                     and np.array_equal(oov[:300], a.query("uberx"))
                     and np.array_equal(oov[300:], b.query("uberx")))
    ok = width_ok and halves_ok
    verdict(8, ok,
            "300d + 50d session query width 350; both halves bit-equal to "
            "member store queries, in- and out-of-vocabulary")
    assert width_ok and halves_ok


def test_criterion_09_cache_transparency_and_speedup(heavy_100k, verdict):
    store, _ = heavy_100k
    with open_store(store) as reader:
        session = QuerySession(reader)
        key = reader.key_at(12345)
        t0 = time.perf_counter()
        cold = session.most_similar(key, topn=10)
        t_cold = time.perf_counter() - t0
        t0 = time.perf_counter()
        warm = session.most_similar(key, topn=10)
        t_warm = time.perf_counter() - t0
    ratio = t_cold / t_warm if t_warm > 0 else float("inf")
    ok = warm == cold and ratio >= 100
    verdict(9, ok,
            f"repeated most_similar served from cache {ratio:.0f}x faster "
            f"({t_cold * 1000:.2f} ms -> {t_warm * 1000:.4f} ms), contents "
            f"bit-identical")
    assert warm == cold
    assert ratio >= 100


def test_criterion_10_byte_width_rule(verdict):
    mismatches = []
    for p in range(10):
        scale = 10 ** p
        want = next(w for w in (1, 2, 4, 8) if scale <= 2 ** (8 * w - 1) - 1)
        got = QuantizationSpec(p).byte_width
        if got != want:
            mismatches.append((p, got, want))
    ok = not mismatches
    verdict(10, ok,
            "byte widths for p in 0..9 all match the smallest signed "
            "integer type holding +/-10^p"
            + (f"; mismatches {mismatches}" if mismatches else ""))
    assert not mismatches


def test_criterion_11_published_model_reference(verdict):
    verdict(11, True,
            "needs the multi-gigabyte published word2vec model; "
            "excluded from CI by design", state="SKIP")
    pytest.skip("optional published-model check: multi-GB download, not run in CI")
