"""Representational similarity: centroids, similarity matrices, RSA score."""

import warnings

import numpy as np
import pytest

from layersweep.errors import (
    AlignmentError,
    EmptyResultError,
    ParameterError,
    ShapeError,
    SmallGroupWarning,
    UndefinedCorrelationError,
    ValidationError,
    ZeroNormWarning,
)
from layersweep.prep import DEProfile
from layersweep.rsa import (
    PerturbationCentroids,
    SimilarityMatrix,
    bio_similarity,
    centroids,
    dump_similarity_csv,
    embedding_similarity,
    rsa_score,
    upper_tri,
)


def quiet_centroids(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallGroupWarning)
        return centroids(*args, **kwargs)


def make_profiles(vectors, genes=None):
    names = sorted(vectors)
    genes = genes or [f"g{i}" for i in range(len(next(iter(vectors.values()))))]
    return [
        DEProfile(perturbation=n, gene_ids=genes, logfc=np.asarray(vectors[n], float))
        for n in names
    ]


def test_centroids_means_and_order():
    E = np.array([[1.0, 0.0], [3.0, 2.0], [0.0, 4.0], [10.0, 10.0]])
    c = quiet_centroids(E, ["b", "a", "b", None])
    assert c.labels == ["b", "a"]  # first appearance, None dropped
    assert np.array_equal(c.matrix[0], [0.5, 2.0])
    assert np.array_equal(c.matrix[1], [3.0, 2.0])
    assert np.array_equal(c.counts, [2, 1])


def test_centroids_cell_order_invariance():
    rng = np.random.default_rng(0)
    E = rng.normal(size=(40, 6))
    labels = [f"l{i % 4}" for i in range(40)]
    base = quiet_centroids(E, labels)
    perm = rng.permutation(40)
    shuffled = quiet_centroids(E[perm], [labels[i] for i in perm])
    for lab in base.labels:
        i = base.labels.index(lab)
        j = shuffled.labels.index(lab)
        assert np.abs(base.matrix[i] - shuffled.matrix[j]).max() < 1e-12


def test_centroids_warnings_and_errors():
    E = np.ones((3, 2))
    with pytest.warns(SmallGroupWarning, match="only"):
        centroids(E, ["a", "a", "a"])
    with pytest.warns(SmallGroupWarning) as rec:
        c = centroids(E, ["a", "a", "b"], min_cells=2)
    assert any("dropped" in str(w.message) for w in rec)
    assert c.labels == ["a"]
    with pytest.raises(EmptyResultError):
        quiet_centroids(E, ["a", "b", "c"], min_cells=2)
    with pytest.raises(AlignmentError):
        quiet_centroids(E, ["a", "b"])
    with pytest.raises(ParameterError):
        quiet_centroids(E, ["a", "a", "a"], min_cells=0)
    with pytest.raises(ShapeError):
        quiet_centroids(np.ones(3), ["a", "a", "a"])


def test_embedding_similarity_values():
    c = PerturbationCentroids(
        labels=["a", "b", "c"],
        matrix=np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 5.0]]),
        counts=np.array([1, 1, 1]),
    )
    S = embedding_similarity(c)
    assert S.kind == "embedding"
    assert np.allclose(np.diag(S.values), 1.0)
    assert S.values[0, 1] == pytest.approx(1.0, abs=1e-12)  # parallel
    assert S.values[0, 2] == pytest.approx(0.0, abs=1e-12)  # orthogonal
    assert S.values[0, 1] == S.values[1, 0]


def test_embedding_similarity_scale_invariance():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(5, 8))
    counts = np.ones(5, dtype=int)
    base = embedding_similarity(
        PerturbationCentroids(labels=list("abcde"), matrix=M, counts=counts)
    )
    scaled = embedding_similarity(
        PerturbationCentroids(labels=list("abcde"), matrix=M * 3.0, counts=counts)
    )
    assert np.abs(base.values - scaled.values).max() < 1e-12


def test_embedding_similarity_zero_norm_and_arity():
    c = PerturbationCentroids(
        labels=["a", "b"],
        matrix=np.array([[0.0, 0.0], [1.0, 0.0]]),
        counts=np.array([1, 1]),
    )
    with pytest.warns(ZeroNormWarning):
        S = embedding_similarity(c)
    assert S.values[0, 1] == 0.0
    assert S.values[0, 0] == 1.0
    single = PerturbationCentroids(
        labels=["a"], matrix=np.ones((1, 2)), counts=np.array([1])
    )
    with pytest.raises(ParameterError):
        embedding_similarity(single)


def test_bio_similarity_hand_case():
    profiles = make_profiles(
        {"p1": [1.0, 2.0, 3.0], "p2": [2.0, 4.0, 6.0], "p3": [3.0, 2.0, 1.0]}
    )
    S = bio_similarity(profiles)
    assert S.kind == "bio"
    assert S.labels == ["p1", "p2", "p3"]
    # rank vectors: p1 and p2 identical, p3 reversed
    assert S.values[0, 1] == 1.0
    assert S.values[0, 2] == -1.0
    assert S.values[1, 2] == -1.0


def test_bio_similarity_errors():
    const = make_profiles({"flat": [1.0, 1.0, 1.0], "ok": [1.0, 2.0, 3.0]})
    with pytest.raises(UndefinedCorrelationError, match="flat"):
        bio_similarity(const)
    a = DEProfile(perturbation="a", gene_ids=["g1", "g2", "g3"], logfc=np.arange(3.0))
    b = DEProfile(perturbation="b", gene_ids=["g1", "g2", "g4"], logfc=np.arange(3.0))
    with pytest.raises(AlignmentError, match="gene"):
        bio_similarity([a, b])
    with pytest.raises(ParameterError):
        bio_similarity([a])


def test_upper_tri_order_and_size():
    S = SimilarityMatrix(
        labels=["a", "b", "c"],
        values=np.array([[1.0, 0.2, 0.3], [0.2, 1.0, 0.4], [0.3, 0.4, 1.0]]),
        kind="bio",
    )
    assert np.array_equal(upper_tri(S), [0.2, 0.3, 0.4])
    p = 100
    big = SimilarityMatrix(labels=[f"l{i}" for i in range(p)], values=np.eye(p), kind="bio")
    assert upper_tri(big).size == p * (p - 1) // 2
    tiny = SimilarityMatrix(labels=["a", "b"], values=np.eye(2), kind="bio")
    assert upper_tri(tiny).size == 1


def test_similarity_matrix_validation():
    with pytest.raises(ValidationError, match="symmetric"):
        SimilarityMatrix(
            labels=["a", "b"], values=np.array([[1.0, 0.5], [0.1, 1.0]]), kind="bio"
        )
    with pytest.raises(ValidationError, match="diagonal"):
        SimilarityMatrix(
            labels=["a", "b"], values=np.array([[0.5, 0.2], [0.2, 1.0]]), kind="bio"
        )
    with pytest.raises(ParameterError):
        SimilarityMatrix(labels=["a"], values=np.eye(1), kind="banana")
    with pytest.raises(ShapeError):
        SimilarityMatrix(labels=["a", "b"], values=np.eye(3), kind="bio")


def random_similarity(rng, labels, kind):
    p = len(labels)
    vals = np.clip(rng.uniform(-0.9, 0.9, size=(p, p)), -1, 1)
    vals = 0.5 * (vals + vals.T)
    np.fill_diagonal(vals, 1.0)
    return SimilarityMatrix(labels=list(labels), values=vals, kind=kind)


def test_rsa_score_exact_cases():
    rng = np.random.default_rng(2)
    labels = [f"p{i}" for i in range(6)]
    S_bio = random_similarity(rng, labels, "bio")
    same = SimilarityMatrix(labels=labels, values=S_bio.values.copy(), kind="embedding")
    assert rsa_score(S_bio, same).rho == 1.0
    # strictly monotone distortion leaves ranks, hence rho, unchanged
    warped = SimilarityMatrix(
        labels=labels, values=np.tanh(2.0 * S_bio.values) / np.tanh(2.0), kind="embedding"
    )
    assert rsa_score(S_bio, warped).rho == 1.0
    flipped_vals = -S_bio.values
    np.fill_diagonal(flipped_vals, 1.0)
    flipped = SimilarityMatrix(labels=labels, values=flipped_vals, kind="embedding")
    assert rsa_score(S_bio, flipped).rho == -1.0


def test_rsa_score_label_alignment_errors():
    rng = np.random.default_rng(3)
    S_bio = random_similarity(rng, ["a", "b", "c"], "bio")
    other = random_similarity(rng, ["a", "b", "d"], "embedding")
    with pytest.raises(AlignmentError, match="only in"):
        rsa_score(S_bio, other)
    reordered = random_similarity(rng, ["c", "b", "a"], "embedding")
    with pytest.raises(AlignmentError, match="different order"):
        rsa_score(S_bio, reordered)


def test_rsa_score_shared_permutation_invariance():
    rng = np.random.default_rng(4)
    labels = [f"p{i}" for i in range(8)]
    S_bio = random_similarity(rng, labels, "bio")
    S_emb = random_similarity(rng, labels, "embedding")
    base = rsa_score(S_bio, S_emb).rho
    for _ in range(20):
        perm = rng.permutation(8)
        pl = [labels[i] for i in perm]
        pb = SimilarityMatrix(pl, S_bio.values[np.ix_(perm, perm)], "bio")
        pe = SimilarityMatrix(pl, S_emb.values[np.ix_(perm, perm)], "embedding")
        assert abs(rsa_score(pb, pe).rho - base) < 1e-12


def test_profiles_as_centroids_recovers_unit_rsa():
    # embed each profile vector as its own centroid: S_emb equals S_bio up to
    # the rank transform, so the RSA score is 1
    rng = np.random.default_rng(5)
    a = rng.normal(size=60)
    a /= np.linalg.norm(a)
    b = rng.normal(size=60)
    b -= (b @ a) * a
    b /= np.linalg.norm(b)
    thetas = [0.0, 0.15, 0.35, 0.6]
    vectors = {f"p{i}": np.cos(t) * a + np.sin(t) * b for i, t in enumerate(thetas)}
    profiles = make_profiles(vectors)
    S_bio = bio_similarity(profiles)
    cent = PerturbationCentroids(
        labels=[p.perturbation for p in profiles],
        matrix=np.vstack([p.logfc for p in profiles]),
        counts=np.ones(len(profiles), dtype=int),
    )
    S_emb = embedding_similarity(cent)
    assert rsa_score(S_bio, S_emb).rho >= 1.0 - 1e-9


def test_dump_similarity_csv(tmp_path):
    S = SimilarityMatrix(
        labels=["a", "b"], values=np.array([[1.0, 0.25], [0.25, 1.0]]), kind="bio"
    )
    path = tmp_path / "sim.csv"
    dump_similarity_csv(path, S)
    lines = path.read_text().splitlines()
    assert lines[0] == "label,a,b"
    assert lines[1] == "a,1.0,0.25"
    assert lines[2] == "b,0.25,1.0"
