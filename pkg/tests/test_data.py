import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopprune.data import (
    DictEntry,
    Dictionary,
    DuffingParams,
    TrajectoryDataset,
    build_dictionary,
    duffing_step,
    eval_dictionary,
    monomial_exponents,
    simulate,
)
from koopprune.errors import InvalidInputError


@pytest.mark.parametrize("x", [(1.0, 0.0), (-1.0, 0.0), (0.0, 0.0)])
def test_equilibria_are_fixed(x):
    np.testing.assert_allclose(duffing_step(x), x, atol=1e-15)


def test_step_value():
    np.testing.assert_allclose(duffing_step([0.0, 1.0]), [0.01, 0.995], rtol=0, atol=1e-15)


def test_step_scalar_and_batch_agree():
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    batch = duffing_step(pts)
    for p, q in zip(pts, batch):
        np.testing.assert_array_equal(duffing_step(p), q)


def test_params_validated():
    with pytest.raises(InvalidInputError):
        DuffingParams(dt=0.0)


def test_single_pair():
    ds = simulate(DuffingParams(), 1, 1, 3)
    assert ds.n_samples == 1
    np.testing.assert_array_equal(ds.x_plus[0], duffing_step(ds.x[0]))


def test_full_scale_sample_count():
    ds = simulate(DuffingParams(), 500, 100, 0)
    assert ds.n_samples == 50_000
    assert ds.meta["traj_boundaries"][-1] == 50_000


def test_simulation_deterministic_and_chained():
    a = simulate(DuffingParams(), 7, 12, 99)
    b = simulate(DuffingParams(), 7, 12, 99)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.x_plus, b.x_plus)
    assert np.all(np.abs(a.x[::12]) <= 2)
    # Within a trajectory the next state is the following snapshot.
    np.testing.assert_array_equal(a.x_plus[:11], a.x[1:12])
    c = simulate(DuffingParams(), 7, 12, 100)
    assert not np.array_equal(a.x, c.x)


def test_trajectory_seeds_independent_of_count():
    small = simulate(DuffingParams(), 3, 5, 1)
    large = simulate(DuffingParams(), 6, 5, 1)
    np.testing.assert_array_equal(small.x, large.x[:15])


def test_simulate_rejects_empty():
    with pytest.raises(InvalidInputError):
        simulate(DuffingParams(), 0, 5, 0)


def test_dataset_roundtrip(tmp_path):
    ds = simulate(DuffingParams(), 4, 6, 2)
    ds.save(tmp_path / "d")
    back = TrajectoryDataset.load(tmp_path / "d")
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.x_plus, ds.x_plus)
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    assert meta["N"] == 24 and meta["n"] == 2 and meta["seed"] == 2
    assert (tmp_path / "d" / "data.csv").read_text().splitlines()[0] == "x1,x2,xp1,xp2"


def test_dataset_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        TrajectoryDataset(np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        TrajectoryDataset([[np.nan, 0.0]], [[0.0, 0.0]])


# --------------------------------------------------------------------------
# dictionaries
# --------------------------------------------------------------------------


def test_degree_one_without_centers():
    d = build_dictionary(simulate(DuffingParams(), 2, 5, 0), 1, 0)
    assert [e.label() for e in d.entries] == ["1", "x1", "x2"]


def test_full_scale_dictionary_size():
    ds = simulate(DuffingParams(), 500, 100, 0)
    d = build_dictionary(ds, 1, 500, 0)
    assert len(d) == 503
    assert sum(e.kind == "tps_rbf" for e in d.entries) == 500


def test_binomial_count():
    d = build_dictionary(simulate(DuffingParams(), 3, 10, 0), 2, 3)
    assert len(d) == 9
    assert [e.label() for e in d.entries[:6]] == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]


def test_kmeans_deterministic():
    ds = simulate(DuffingParams(), 20, 10, 0)
    assert build_dictionary(ds, 1, 8, 4) == build_dictionary(ds, 1, 8, 4)


def test_too_many_centers():
    with pytest.raises(InvalidInputError):
        build_dictionary(simulate(DuffingParams(), 1, 3, 0), 1, 4)


@pytest.mark.parametrize("n,deg", [(1, 3), (2, 3), (3, 2)])
def test_monomial_count(n, deg):
    assert len(monomial_exponents(n, deg)) == math.comb(n + deg, n) - 1


def test_constant_column():
    d = Dictionary((DictEntry("constant"),), 2)
    np.testing.assert_array_equal(eval_dictionary(d, np.zeros((4, 2))), np.ones((4, 1)))


def test_tps_values():
    d = Dictionary((DictEntry("tps_rbf", center=(0.0, 0.0)),), 2)
    out = eval_dictionary(d, [[0.0, 0.0], [1.0, 0.0], [math.e, 0.0]])[:, 0]
    assert out[0] == 0.0 and out[1] == 0.0
    assert out[2] == pytest.approx(math.e ** 2, rel=1e-15)


def test_monomial_values():
    d = Dictionary((DictEntry("monomial", exponents=(2, 1)),), 2)
    np.testing.assert_allclose(eval_dictionary(d, [[3.0, -2.0]]), [[-18.0]])


def test_dimension_mismatch():
    d = Dictionary((DictEntry("monomial", exponents=(1, 0)),), 2)
    with pytest.raises(InvalidInputError):
        eval_dictionary(d, np.zeros((2, 3)))


def test_dictionary_validation():
    with pytest.raises(InvalidInputError):
        Dictionary((), 2)
    with pytest.raises(InvalidInputError):
        Dictionary((DictEntry("constant"), DictEntry("constant")), 2)
    with pytest.raises(InvalidInputError):
        Dictionary((DictEntry("monomial", exponents=(1,)),), 2)
    with pytest.raises(InvalidInputError):
        DictEntry("fourier")


def test_dictionary_roundtrip(tmp_path):
    d = build_dictionary(simulate(DuffingParams(), 5, 10, 0), 2, 4)
    d.save(tmp_path / "d.json")
    assert Dictionary.load(tmp_path / "d.json") == d
    assert isinstance(json.loads((tmp_path / "d.json").read_text()), list)
    assert Dictionary.from_json({"dim_state": 2, "entries": d.to_json()}) == d
    assert d.has_constant


def test_constant_only_dictionary_takes_hint(tmp_path):
    d = Dictionary((DictEntry("constant"),), 3)
    d.save(tmp_path / "c.json")
    assert Dictionary.load(tmp_path / "c.json", dim_state=3) == d
    with pytest.raises(InvalidInputError):
        Dictionary.load(build_dictionary(simulate(DuffingParams(), 2, 5, 0), 1, 0).save(tmp_path / "e.json"), 3)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_property_tps_radial(px, py, cx, cy):
    d = Dictionary((DictEntry("tps_rbf", center=(cx, cy)),), 2)
    r2 = (px - cx) ** 2 + (py - cy) ** 2
    got = eval_dictionary(d, [[px, py]])[0, 0]
    expected = 0.0 if r2 == 0 else 0.5 * r2 * math.log(r2)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300)
    assert np.isfinite(got)
