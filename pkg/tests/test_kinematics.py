import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catsim.kinematics import (
    MOMENTUM,
    POSITION,
    TO_MOMENTUM,
    TO_POSITION,
    Geometry,
    GeometryError,
    MultiIndex,
    StateVector,
    build_geometry,
    flatten,
    transform,
    unflatten,
)


@pytest.mark.parametrize(
    "args, dim",
    [((8, 1, 3, [0, 0, 0]), 2048), ((3, 0, 0, []), 8), ((3, 2, 2, [0, 1]), 128)],
)
def test_build_geometry_dim(args, dim):
    g = build_geometry(*args)
    assert g.dim == dim
    assert g.n_cat == 2 ** args[0] and g.nu == 2 ** args[1]


def test_empty_shifts_mean_zeros():
    assert build_geometry(4, 1, 3, []).shifts == (0, 0, 0)
    assert build_geometry(4, 1, 3).shifts == (0, 0, 0)


@pytest.mark.parametrize(
    "args, match",
    [
        ((3, 1, 1, [4]), "shift"),
        ((3, 1, 1, [-1]), "shift"),
        ((3, 1, -1, []), "n_small"),
        ((2, 3, 0, []), "nu_exp"),
        ((3, 1, 2, [0]), "expected 2 shifts"),
    ],
)
def test_build_geometry_rejects(args, match):
    with pytest.raises(GeometryError, match=match):
        build_geometry(*args)


def test_geometry_rejects_non_power_of_two():
    with pytest.raises(GeometryError):
        Geometry(12, 2, 0)


def test_flatten_endpoints():
    g = build_geometry(3, 2, 2, [0, 1])
    assert flatten(MultiIndex(0, (0, 0)), g) == 0
    assert unflatten(g.dim - 1, g) == MultiIndex(g.n_cat - 1, (g.nu - 1, g.nu - 1))
    # large particle fastest
    assert unflatten(1, g) == MultiIndex(1, (0, 0))
    assert unflatten(g.n_cat, g) == MultiIndex(0, (1, 0))


@pytest.mark.parametrize("args", [(3, 2, 2, [0, 1]), (4, 1, 3, []), (12, 0, 0, []), (6, 2, 3, [])])
def test_flatten_bijection_exhaustive(args):
    g = build_geometry(*args)
    assert g.dim <= 4096
    seen = set()
    for k in range(g.dim):
        idx = unflatten(k, g)
        assert flatten(idx, g) == k
        seen.add(idx)
    assert len(seen) == g.dim


def test_flatten_matches_reshape_layout():
    g = build_geometry(3, 1, 2)
    x = np.arange(g.dim).reshape(g.shape)
    for k in range(g.dim):
        j0, (j1, j2) = unflatten(k, g)
        assert x[j2, j1, j0] == k


def test_flatten_out_of_range():
    g = build_geometry(3, 1, 1)
    with pytest.raises(GeometryError):
        flatten(MultiIndex(8, (0,)), g)
    with pytest.raises(GeometryError):
        flatten(MultiIndex(0, (2,)), g)
    with pytest.raises(GeometryError):
        unflatten(g.dim, g)


def test_transform_of_delta():
    g = build_geometry(2, 0, 0)
    s = transform(StateVector.basis(0, g), 0, TO_MOMENTUM, g)
    np.testing.assert_allclose(s.amplitudes, np.full(4, 0.5), atol=1e-15)
    assert s.reps == (MOMENTUM,)


def test_transform_kernel_sign():
    # <k|l> = exp(-2 pi i k l / n)/sqrt(n)
    g = build_geometry(3, 0, 0)
    s = transform(StateVector.basis(1, g), 0, TO_MOMENTUM, g)
    k = np.arange(8)
    np.testing.assert_allclose(s.amplitudes, np.exp(-2j * np.pi * k / 8) / np.sqrt(8), atol=1e-15)


def test_transform_acts_on_one_axis():
    g = build_geometry(3, 1, 2)
    rng = np.random.default_rng(1)
    x = rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim)
    s = transform(StateVector.from_array(x, g), 1, TO_MOMENTUM, g)
    assert s.reps == (POSITION, MOMENTUM, POSITION)
    # brute-force: apply the nu x nu DFT matrix to the j1 index
    f = np.exp(-2j * np.pi * np.outer(range(2), range(2)) / 2) / np.sqrt(2)
    want = np.zeros(g.dim, dtype=complex)
    for k in range(g.dim):
        j0, (j1, j2) = unflatten(k, g)
        for m in range(2):
            want[flatten(MultiIndex(j0, (m, j2)), g)] += f[m, j1] * x[k]
    np.testing.assert_allclose(s.amplitudes, want, atol=1e-14)


def test_transform_wrong_source_rep():
    g = build_geometry(3, 0, 0)
    s = StateVector.basis(0, g)
    with pytest.raises(ValueError, match="position"):
        transform(s, 0, TO_POSITION, g)


def _random_state(seed, g):
    rng = np.random.default_rng(seed)
    return StateVector.from_array(rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim), g)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), particle=st.integers(0, 2))
def test_transform_roundtrip_and_norm(seed, particle):
    g = build_geometry(4, 1, 2)
    s = _random_state(seed, g)
    m = transform(s, particle, TO_MOMENTUM, g)
    assert abs(m.norm() - s.norm()) <= 1e-14 * s.norm()
    back = transform(m, particle, TO_POSITION, g)
    np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-14 * s.norm())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.complex_numbers(max_magnitude=10), b=st.complex_numbers(max_magnitude=10))
def test_transform_linear(seed, a, b):
    g = build_geometry(3, 1, 1)
    s1, s2 = _random_state(seed, g), _random_state(seed + 1, g)
    lhs = transform(StateVector.from_array(a * s1.amplitudes + b * s2.amplitudes, g), 0, TO_MOMENTUM, g)
    rhs = a * transform(s1, 0, TO_MOMENTUM, g).amplitudes + b * transform(s2, 0, TO_MOMENTUM, g).amplitudes
    scale = max(1.0, np.abs(rhs).max())
    np.testing.assert_allclose(lhs.amplitudes, rhs, atol=1e-13 * scale)
