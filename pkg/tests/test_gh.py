import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emap.geometry import PointCloud, Seed, pairwise_distances
from emap.gh import (
    GHError,
    GHMode,
    discrete_gh,
    distortion,
    is_generic,
    lemma1_radius_bound,
    theorem1_witness,
    validate_permutation,
)
from oracles import dj_bruteforce


def line(*xs):
    return PointCloud(np.array(xs, dtype=float)[:, None])


def gap_oracle(pts):
    d = pairwise_distances(pts)
    n = len(d)
    vals = []
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        v = 0.5 * np.abs(d - d[np.ix_(p, p)]).max()
        if v > 1e-9 * d.max():
            vals.append(v)
    return min(vals)


def planar_cloud(rng, n):
    """n points in the z = 0 plane of R^3."""
    return np.column_stack([rng.normal(size=(n, 2)), np.zeros(n)])


def test_self_distance():
    x = line(0, 1, 3)
    res = discrete_gh(x, x)
    assert res.distance == 0.0
    assert res.optimal_permutation.tolist() == [0, 1, 2]


def test_small_line_example():
    res = discrete_gh(line(0, 1, 3), line(0, 1, 4))
    assert res.distance == pytest.approx(0.5)
    assert res.distance == pytest.approx(dj_bruteforce([[0], [1], [3]], [[0], [1], [4]]))
    assert distortion(pairwise_distances(line(0, 1, 3).points), pairwise_distances(line(0, 1, 4).points),
                      res.optimal_permutation) == res.distance


def test_translation():
    pts = Seed(2).rng().normal(size=(5, 3))
    assert discrete_gh(PointCloud(pts), PointCloud(pts + [1.0, -2.0, 0.5])).distance == pytest.approx(0, abs=1e-12)


def test_errors():
    with pytest.raises(GHError):
        discrete_gh(line(0, 1), line(0, 1, 2))
    big = line(*range(10))
    with pytest.raises(GHError):
        discrete_gh(big, big)
    assert discrete_gh(big, big, GHMode.IDENTITY_FAST_PATH).distance == 0.0
    with pytest.raises(GHError):
        validate_permutation([0, 0, 1])


def test_json():
    doc = json.loads(discrete_gh(line(0, 1, 3), line(0, 1, 4)).to_json())
    assert set(doc) == {"distance", "permutation", "mode"}
    assert doc["mode"] == "brute_force"


@pytest.mark.parametrize("case", range(15))
def test_brute_force_matches_oracle(case):
    rng = Seed(7, case).rng()
    n = int(rng.integers(2, 7))
    x, y = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    res = discrete_gh(PointCloud(x), PointCloud(y))
    assert res.distance == pytest.approx(dj_bruteforce(x, y), abs=1e-12)
    assert res.distance == distortion(pairwise_distances(x), pairwise_distances(y), res.optimal_permutation)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6))
def test_permutation_invariance(n, s):
    rng = Seed(s).rng()
    x, y = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    perm = rng.permutation(n)
    a = discrete_gh(PointCloud(x), PointCloud(y)).distance
    b = discrete_gh(PointCloud(x), PointCloud(y[perm])).distance
    assert a == pytest.approx(b, abs=1e-12)


def test_genericity():
    tri = PointCloud([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    tet = PointCloud([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    assert not is_generic(tri)
    assert not is_generic(tet)
    assert is_generic(line(0, 1, 3))
    with pytest.raises(GHError):
        lemma1_radius_bound(tri)


def test_bound_on_small_line():
    assert lemma1_radius_bound(line(0, 1, 3)) == pytest.approx(gap_oracle(np.array([[0.0], [1.0], [3.0]])) / 4)


@pytest.mark.parametrize("s", [0.1, 2.0, 37.5])
def test_bound_scales(s):
    pts = Seed(4).rng().normal(size=(5, 2))
    base = lemma1_radius_bound(PointCloud(pts))
    assert base == pytest.approx(gap_oracle(pts) / 4)
    assert lemma1_radius_bound(PointCloud(s * pts)) == pytest.approx(s * base, rel=1e-12)


def test_witness_on_line():
    z = theorem1_witness(line(0, 3), 0.1, check_regime=False)
    np.testing.assert_allclose(z.points.ravel(), [-0.1, 3.1])
    assert discrete_gh(line(0, 3), z).distance == pytest.approx(0.1)


def test_witness_on_square():
    sq = PointCloud([[0, 0], [1, 0], [1, 1], [0, 1]])
    z = theorem1_witness(sq, 0.01, check_regime=False)
    assert discrete_gh(sq, z, GHMode.IDENTITY_FAST_PATH).distance == pytest.approx(0.01)
    assert np.allclose(np.linalg.norm(z.points - sq.points, axis=1), [0.01, 0.01, 0, 0])


def test_witness_errors():
    x = line(0, 1, 3)
    with pytest.raises(GHError):
        theorem1_witness(x, lemma1_radius_bound(x))
    with pytest.raises(GHError):
        theorem1_witness(line(0), 0.01)


def test_checked_mode():
    x = line(0, 1, 3)
    bound = lemma1_radius_bound(x)
    ok = line(0, 1, 3 + 0.5 * bound)
    assert discrete_gh(x, ok, GHMode.CHECKED).distance == pytest.approx(0.25 * bound)
    with pytest.raises(GHError):
        discrete_gh(x, line(0, 1, 3 + 2 * bound), GHMode.CHECKED)


@pytest.mark.parametrize("case", range(20))
def test_fast_path_exact_in_regime(case):
    rng = Seed(11, case).rng()
    n = int(rng.integers(4, 8))
    x = planar_cloud(rng, n)
    r = rng.uniform(0.05, 0.95) * lemma1_radius_bound(PointCloud(x))
    step = rng.normal(size=x.shape)
    step *= r / np.linalg.norm(step, axis=1, keepdims=True)
    y = x + step
    fast = discrete_gh(PointCloud(x), PointCloud(y), GHMode.IDENTITY_FAST_PATH).distance
    assert fast == discrete_gh(PointCloud(x), PointCloud(y)).distance
    assert fast <= r + 1e-12


def test_orthogonal_below_r_witness_above():
    rng = Seed(12).rng()
    x = planar_cloud(rng, 5)
    cloud = PointCloud(x)
    r = 0.5 * lemma1_radius_bound(cloud)
    witness = discrete_gh(cloud, theorem1_witness(cloud, r)).distance
    assert witness >= r - 1e-12
    for _ in range(1000):
        # the only direction orthogonal to the plane is the z axis
        y = x + np.column_stack([np.zeros((5, 2)), r * rng.choice([-1.0, 1.0], 5)])
        d = discrete_gh(PointCloud(y), cloud, GHMode.IDENTITY_FAST_PATH).distance
        assert d < r
