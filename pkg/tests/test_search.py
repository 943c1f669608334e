"""Exact scan, analogy scoring, and the random-projection forest."""
import numpy as np
import pytest

from vecstore import Tier, fixture_records, gaussian_records, open_store, write_store
from vecstore.core import QuantizationSpec
from vecstore.errors import (
    DimensionMismatch,
    EffortOutOfRange,
    EmptyPositive,
    KeyNotFound,
    TooFewVectors,
    ZeroVector,
)
from vecstore.search import (
    ProjectionForest,
    SearchHit,
    analogy,
    approx_topk,
    build_forest,
    closer_than,
    deserialize_forest,
    exact_topk,
    serialize_forest,
)


@pytest.fixture(scope="module")
def gauss_store(tmp_path_factory):
    path = tmp_path_factory.mktemp("gauss") / "g10k.store"
    write_store(gaussian_records(10000, 32, seed=5), str(path), tier=Tier.LIGHT)
    return str(path)


@pytest.fixture(scope="module")
def gauss_reader(gauss_store):
    with open_store(gauss_store) as reader:
        yield reader


@pytest.fixture(scope="module")
def ann_store(tmp_path_factory):
    path = tmp_path_factory.mktemp("ann") / "a2k.store"
    write_store(gaussian_records(2000, 32, seed=6), str(path), tier=Tier.HEAVY,
                n_trees=8, leaf_cap=32)
    return str(path)


def _dense_f64(reader) -> np.ndarray:
    rows = [reader.read_vector(i) for i in range(reader.metadata.key_count)]
    return np.asarray(rows, dtype=np.float64)


def _naive_hits(reader, vectors, q, k, exclude=()):
    q = np.asarray(q, dtype=np.float64)
    sims = vectors @ q / (np.linalg.norm(vectors, axis=1) * np.linalg.norm(q))
    np.clip(sims, -1.0, 1.0, out=sims)
    order = np.lexsort((np.arange(sims.size), -sims))
    hits = []
    for i in order:
        key = reader.key_at(int(i))
        if key in exclude:
            continue
        hits.append((key, float(sims[i])))
        if len(hits) == k:
            break
    return hits


# --------------------------------------------------------------- exact scan

def test_exact_topk_self_query_first(word_reader):
    king = word_reader.read_vector(word_reader.lookup_key("king"))
    hits = exact_topk(word_reader, king, 5)
    assert hits[0].key == "king"
    assert hits[0].similarity == pytest.approx(1.0, abs=1e-12)
    assert isinstance(hits[0], SearchHit)


def test_exact_topk_k_exceeding_count(word_reader):
    hits = exact_topk(word_reader, word_reader.read_vector(0), 1000)
    assert len(hits) == word_reader.metadata.key_count
    sims = [h.similarity for h in hits]
    assert sims == sorted(sims, reverse=True)
    assert all(-1.0 <= s <= 1.0 for s in sims)


def test_exact_topk_matches_naive_oracle(gauss_reader):
    vectors = _dense_f64(gauss_reader)
    rng = np.random.default_rng(17)
    for _ in range(100):
        q = rng.standard_normal(32)
        got = exact_topk(gauss_reader, q, 10)
        want = _naive_hits(gauss_reader, vectors, q, 10)
        assert [h.key for h in got] == [key for key, _ in want]
        np.testing.assert_allclose([h.similarity for h in got],
                                   [s for _, s in want], rtol=0, atol=1e-12)


def test_exact_topk_exclusion(word_reader):
    king = word_reader.read_vector(word_reader.lookup_key("king"))
    hits = exact_topk(word_reader, king, 5, exclude={"king"})
    assert "king" not in [h.key for h in hits]
    assert len(hits) == 5


def test_exact_topk_insertion_order_invariance(tmp_path):
    records = fixture_records(100, 16)
    shuffled = list(records)
    np.random.default_rng(3).shuffle(shuffled)
    a_path, b_path = tmp_path / "a.store", tmp_path / "b.store"
    write_store(iter(records), str(a_path), tier=Tier.LIGHT)
    write_store(iter(shuffled), str(b_path), tier=Tier.LIGHT)
    q = records[7][1]
    with open_store(str(a_path)) as ra, open_store(str(b_path)) as rb:
        assert exact_topk(ra, q, 10) == exact_topk(rb, q, 10)


def test_exact_topk_bad_queries(word_reader):
    with pytest.raises(DimensionMismatch):
        exact_topk(word_reader, np.ones(5), 3)
    with pytest.raises(ZeroVector):
        exact_topk(word_reader, np.zeros(32), 3)
    with pytest.raises(ValueError):
        exact_topk(word_reader, np.ones(32), 0)


# -------------------------------------------------------------- closer_than

def test_closer_than_self_is_empty(word_reader):
    assert closer_than(word_reader, "king", "king") == []


def test_closer_than_matches_brute_force(gauss_reader):
    vectors = _dense_f64(gauss_reader)
    norms = np.linalg.norm(vectors, axis=1)
    count = gauss_reader.metadata.key_count
    rng = np.random.default_rng(23)
    for _ in range(50):
        ia, ib = (int(x) for x in rng.integers(0, count, size=2))
        a, b = gauss_reader.key_at(ia), gauss_reader.key_at(ib)
        sims = vectors @ vectors[ia] / (norms * norms[ia])
        keep = [i for i in np.argsort(-sims, kind="stable")
                if sims[i] > sims[ib] and i != ia]
        want = [gauss_reader.key_at(int(i)) for i in keep]
        assert closer_than(gauss_reader, a, b) == want


def test_closer_than_missing_key(word_reader):
    with pytest.raises(KeyNotFound):
        closer_than(word_reader, "king", "nope")
    with pytest.raises(KeyNotFound):
        closer_than(word_reader, "nope", "king")


# ------------------------------------------------------------------ analogy

@pytest.fixture(scope="module")
def analogy_store(tmp_path_factory):
    # v("d") = normalize(v("c") - v("a") + v("b")) exactly, with the
    # inputs pairwise orthogonal and distractors in the remaining axes.
    d = 8
    basis = np.eye(d, dtype=np.float64)
    records = [
        ("a", basis[0]),
        ("b", basis[1]),
        ("c", basis[2]),
        ("d", (basis[2] - basis[0] + basis[1]) / np.sqrt(3.0)),
    ]
    rng = np.random.default_rng(9)
    for i in range(5):
        noise = np.zeros(d)
        noise[3:] = rng.standard_normal(d - 3)
        records.append((f"w{i}", noise))
    path = tmp_path_factory.mktemp("analogy") / "analogy.store"
    write_store(iter(records), str(path), tier=Tier.LIGHT)
    return str(path)


def test_analogy_constructed_offset_both_methods(analogy_store):
    with open_store(analogy_store) as reader:
        for method in ("add", "mul"):
            hits = analogy(reader, ["b", "c"], ["a"], method=method, topn=3)
            assert hits[0].key == "d"
            assert {"a", "b", "c"}.isdisjoint({h.key for h in hits})


def test_analogy_single_positive_reduces_to_topk(word_reader):
    hits = analogy(word_reader, ["king"], [], method="add", topn=5)
    king = word_reader.read_vector(word_reader.lookup_key("king"))
    assert hits == exact_topk(word_reader, king, 5, exclude={"king"})


def test_analogy_add_scores_match_hand_formula(word_reader):
    hits = analogy(word_reader, ["king", "woman"], ["man"], method="add", topn=3)
    vectors = _dense_f64(word_reader)
    norms = np.linalg.norm(vectors, axis=1)

    def cos_to(key):
        i = word_reader.lookup_key(key)
        return vectors @ vectors[i] / (norms * norms[i])

    scores = cos_to("king") + cos_to("woman") - cos_to("man")
    for hit in hits:
        i = word_reader.lookup_key(hit.key)
        assert hit.similarity == pytest.approx(float(scores[i]), abs=1e-9)


def test_analogy_mul_scores_match_hand_formula(word_reader):
    hits = analogy(word_reader, ["king", "woman"], ["man"], method="mul", topn=3)
    vectors = _dense_f64(word_reader)
    norms = np.linalg.norm(vectors, axis=1)

    def cos_to(key):
        i = word_reader.lookup_key(key)
        return np.clip(vectors @ vectors[i] / (norms * norms[i]), -1.0, 1.0)

    scores = ((cos_to("king") + 1) / 2) * ((cos_to("woman") + 1) / 2)
    scores /= ((cos_to("man") + 1) / 2) + 1e-6
    for hit in hits:
        i = word_reader.lookup_key(hit.key)
        assert hit.similarity == pytest.approx(float(scores[i]), abs=1e-9)


def test_analogy_errors(word_reader):
    with pytest.raises(EmptyPositive):
        analogy(word_reader, [], ["man"])
    with pytest.raises(KeyNotFound):
        analogy(word_reader, ["king", "nope"], [])
    with pytest.raises(ValueError):
        analogy(word_reader, ["king"], [], method="geometric")


# ------------------------------------------------------------------- forest

def test_forest_structure_100_vectors():
    x = np.random.default_rng(1).standard_normal((100, 16)).astype(np.float32)
    forest = build_forest(x, n_trees=4, leaf_cap=10, seed=0)
    assert forest.n_trees == 4
    assert max(forest.leaf_sizes()) <= 10
    for tree in forest.trees:
        assert np.array_equal(np.sort(tree.leaf_vals), np.arange(100))
        sizes = np.diff(tree.leaf_starts)
        assert sizes.min() >= 1


def test_forest_same_seed_identical_serialization():
    x = np.random.default_rng(2).standard_normal((300, 12)).astype(np.float32)
    qspec = QuantizationSpec(7)
    one = serialize_forest(build_forest(x, n_trees=3, leaf_cap=16, seed=11), qspec)
    two = serialize_forest(build_forest(x, n_trees=3, leaf_cap=16, seed=11), qspec)
    other = serialize_forest(build_forest(x, n_trees=3, leaf_cap=16, seed=12), qspec)
    assert one == two
    assert one != other


def test_forest_serialization_round_trip():
    x = np.random.default_rng(4).standard_normal((500, 10)).astype(np.float32)
    forest = build_forest(x, n_trees=3, leaf_cap=20, seed=7)
    qspec = QuantizationSpec(7)
    raw = serialize_forest(forest, qspec)
    back = deserialize_forest(raw, forest.leaf_cap, forest.build_seed)
    assert isinstance(back, ProjectionForest)
    assert (back.n_vectors, back.dimension) == (500, 10)
    for mine, theirs in zip(forest.trees, back.trees):
        assert theirs.root == mine.root
        assert np.array_equal(theirs.children, mine.children)
        assert np.array_equal(theirs.offsets, mine.offsets)
        assert np.array_equal(theirs.leaf_starts, mine.leaf_starts)
        assert np.array_equal(theirs.leaf_vals, mine.leaf_vals)
        np.testing.assert_allclose(theirs.normals, mine.normals, rtol=0, atol=2e-7)
    # At 7-digit precision the quantized normals reproduce themselves, so
    # the serialized image is a fixpoint.
    assert serialize_forest(back, qspec) == raw


def test_forest_mean_leaf_depth_bounds():
    x = np.random.default_rng(8).standard_normal((10000, 32)).astype(np.float32)
    forest = build_forest(x)
    depths = []
    for tree in forest.trees:
        stack = [(tree.root, 0)]
        while stack:
            node, depth = stack.pop()
            if node < 0:
                depths.append(depth)
            else:
                stack.append((int(tree.children[node, 0]), depth + 1))
                stack.append((int(tree.children[node, 1]), depth + 1))
    mean_depth = float(np.mean(depths))
    balanced = np.log2(10000 / forest.leaf_cap)
    assert balanced - 2 <= mean_depth <= balanced + 4


def test_forest_degenerate_duplicate_vectors():
    x = np.ones((200, 8), dtype=np.float32)
    forest = build_forest(x, n_trees=2, leaf_cap=10, seed=1)
    assert max(forest.leaf_sizes()) <= 10
    for tree in forest.trees:
        assert np.array_equal(np.sort(tree.leaf_vals), np.arange(200))


def test_forest_input_validation():
    with pytest.raises(TooFewVectors):
        build_forest(np.ones((1, 8), dtype=np.float32))
    with pytest.raises(TooFewVectors):
        build_forest(np.ones(8, dtype=np.float32))
    x = np.ones((10, 4), dtype=np.float32)
    with pytest.raises(ValueError):
        build_forest(x, n_trees=0)
    with pytest.raises(ValueError):
        build_forest(x, leaf_cap=0)


# ------------------------------------------------------------ approximate

def test_approx_effort_zero_returns_k_hits(heavy_reader):
    forest = heavy_reader.load_ann()
    q = heavy_reader.read_vector(3)
    hits = approx_topk(forest, heavy_reader, q, 5, effort=0.0)
    assert len(hits) == 5
    assert len({h.key for h in hits}) == 5
    sims = [h.similarity for h in hits]
    assert sims == sorted(sims, reverse=True)


def test_approx_effort_bounds(heavy_reader):
    forest = heavy_reader.load_ann()
    q = heavy_reader.read_vector(0)
    for effort in (-0.1, 1.0001, 2.0):
        with pytest.raises(EffortOutOfRange):
            approx_topk(forest, heavy_reader, q, 5, effort=effort)


def test_approx_similarities_are_exact_cosines(ann_store):
    with open_store(ann_store) as reader:
        forest = reader.load_ann()
        vectors = _dense_f64(reader)
        norms = np.linalg.norm(vectors, axis=1)
        rng = np.random.default_rng(31)
        for _ in range(20):
            q = rng.standard_normal(32)
            for hit in approx_topk(forest, reader, q, 10, effort=0.2):
                i = reader.lookup_key(hit.key)
                want = float(vectors[i] @ q / (norms[i] * np.linalg.norm(q)))
                assert hit.similarity == pytest.approx(want, abs=1e-12)


def test_approx_recall_nondecreasing_in_effort(ann_store):
    with open_store(ann_store) as reader:
        forest = reader.load_ann()
        rng = np.random.default_rng(37)
        queries = rng.standard_normal((100, 32))
        recalls = []
        for effort in (0.02, 0.2, 1.0):
            total = 0.0
            for q in queries:
                want = {h.key for h in exact_topk(reader, q, 10)}
                got = {h.key for h in approx_topk(forest, reader, q, 10, effort=effort)}
                total += len(want & got) / 10
            recalls.append(total / len(queries))
        assert recalls[0] <= recalls[1] <= recalls[2]
        assert recalls[2] >= 0.9


def test_approx_subset_of_vocabulary(ann_store):
    with open_store(ann_store) as reader:
        forest = reader.load_ann()
        hits = approx_topk(forest, reader, reader.read_vector(42), 15, effort=0.1)
        for hit in hits:
            assert reader.lookup_key(hit.key) is not None
