import itertools

import numpy as np
import pytest

import bethe_sandpile as sp


def test_star_recurrent_count_matches_determinant():
    v = sp.tree_ball(2, 1)
    assert len(v) == 4
    assert sp.count_recurrent(v) == 54
    assert len(sp.enumerate_recurrent(v)) == 54


def test_stabilize_topples_center_once():
    v = sp.tree_ball(2, 1)
    heights, counts = sp.stabilize(v, [4, 1, 1, 1])
    assert heights == [1, 2, 2, 2]
    assert counts == [1, 0, 0, 0]


def test_recurrence_by_brute_force_on_path():
    # Two adjacent sites of the tree: R = {eta : not both 1}.
    v = sp.tree_prefix(2, 2)
    for h in itertools.product([1, 2, 3], repeat=2):
        assert sp.is_recurrent(v, list(h)) == (h != (1, 1))


def test_group_axioms_hold():
    report = sp.verify_group_axioms(sp.tree_prefix(2, 3))
    assert report["ok"]
    assert report["recurrent_count"] == int(report["determinant"])


def test_greens_is_inverse_laplacian():
    v = sp.tree_ball(2, 2)
    g = sp.greens(v)
    lap = np.zeros((len(v), len(v)))
    for x in range(len(v)):
        lap[x, x] = v.max_height(x)
        for y in v.neighbors(x):
            lap[x, y] = -1
    assert np.allclose(lap @ g, np.eye(len(v)))


def test_tree_exact_sampler_only_draws_recurrent():
    v = sp.tree_ball(2, 2)
    for h in sp.sample(v, 50, sampler="tree_exact", seed=7):
        assert sp.is_recurrent(v, h)


def test_sampling_is_reproducible():
    v = sp.tree_ball(2, 2)
    assert sp.sample(v, 5, seed=3) == sp.sample(v, 5, seed=3)


def test_summability_refuses_constant_rates():
    assert not sp.summability("constant", 1.0)["summable"]
    assert sp.summability("geometric", 0.25)["summable"]
    with pytest.raises(sp.RefusedError):
        sp.window_study("constant", 1.0, 1.0, [1, 2], 2, seed=1)


def test_transfer_matrix_bound():
    report = sp.transfer_matrix_bound([0.25, 0.5, 1.0])
    assert report["holds"]
