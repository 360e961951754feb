import math

import numpy as np
import pytest
from scipy.fft import ifftn

from catsim.kinematics import (
    MOMENTUM,
    TO_MOMENTUM,
    MultiIndex,
    StateVector,
    build_geometry,
    flatten,
    transform,
    unflatten,
)
from catsim.observables import acf
from catsim.propagators import (
    MemoryBudgetError,
    PropagatorSpec,
    accumulate,
    evolve_unit,
    flow_generator,
    free_phases,
    kick_phases,
    propagator_at,
    required_bytes,
    scattering_counts,
    scattering_phases,
    substep,
    unitarity_defect,
)


def _random_state(g, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=g.dim) + 1j * rng.normal(size=g.dim)
    return StateVector.from_array(x / np.linalg.norm(x), g)


def test_free_phase_example():
    g = build_geometry(3, 0, 0)
    f = free_phases(g, 1.0)
    assert f.rep == MOMENTUM
    assert f.values.ravel()[3] == pytest.approx(-9 * math.pi / 8, abs=1e-15)
    assert np.all(free_phases(g, 0.0).values == 0)


def test_free_phases_additive():
    g = build_geometry(3, 1, 2)
    a, b = free_phases(g, 0.3).values, free_phases(g, 0.45).values
    np.testing.assert_allclose(a + b, free_phases(g, 0.75).values, atol=1e-12)


def test_free_phases_symmetric_agree_at_integer_dt():
    g = build_geometry(4, 1, 1)
    a = free_phases(g, 1.0).phase()
    b = free_phases(g, 1.0, symmetric=True).phase()
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_kick_phase_examples():
    g = build_geometry(3, 0, 0)
    assert kick_phases(g, 1).values.ravel()[3] == pytest.approx(9 * math.pi / 8)
    assert np.all(kick_phases(g, 0).values == 0)
    g4 = build_geometry(2, 0, 0)
    assert kick_phases(g4, 1).phase().ravel()[2] == pytest.approx(-1.0, abs=1e-15)


def test_kick_independent_of_small_particles():
    g = build_geometry(3, 1, 2)
    v = kick_phases(g, 1).values
    assert np.all(v == v[:1, :1, :])


def test_scattering_counts_examples():
    assert np.all(scattering_counts(build_geometry(3, 1, 0)).values == 0)
    g = build_geometry(3, 1, 1)
    c = scattering_counts(g).values.ravel()
    assert c[flatten(MultiIndex(4, (1,)), g)] == 1
    assert c[flatten(MultiIndex(3, (1,)), g)] == 0
    # identical lattices: count is 1 iff j0 == j1
    g = build_geometry(3, 3, 1)
    c = scattering_counts(g).values  # axes (j1, j0)
    np.testing.assert_array_equal(c, np.eye(8))


def test_scattering_counts_oracle():
    g = build_geometry(4, 2, 2, [1, 3])
    c = scattering_counts(g).values.ravel()
    for k in range(g.dim):
        j0, js = unflatten(k, g)
        want = sum((4 * ji + s) % 16 == j0 for ji, s in zip(js, g.shifts))
        assert c[k] == want


def test_scattering_phase_is_pure_phase():
    g = build_geometry(3, 1, 2)
    ph = scattering_phases(g, 8.0, 0.1).phase()
    np.testing.assert_allclose(np.abs(ph), 1.0, atol=1e-15)


def test_spec_validation():
    g = build_geometry(3, 1, 1)
    with pytest.raises(ValueError, match="divide"):
        PropagatorSpec(g, sample_dt=0.3)
    with pytest.raises(ValueError, match="kappa"):
        PropagatorSpec(g, kappa=-1)
    with pytest.raises(ValueError, match="multiple"):
        PropagatorSpec(g, kappa=1, n_substeps=4, sample_dt=1 / 8)
    # fine without scattering, and under the exact flow
    PropagatorSpec(g, n_substeps=4, sample_dt=1 / 8)
    PropagatorSpec(g, kappa=1, n_substeps=4, sample_dt=1 / 8, flow="exact")


def _exact_free(state, g, dt):
    m = transform(state, 0, TO_MOMENTUM, g)
    for p in range(1, g.n_small + 1):
        m = transform(m, p, TO_MOMENTUM, g)
    amp = m.amplitudes * free_phases(g, dt).phase().ravel()
    x = ifftn(amp.reshape(g.shape), norm="ortho").ravel()
    return x


def test_substep_without_scattering_is_exact_free_flow():
    g = build_geometry(4, 1, 2)
    s = _random_state(g)
    for n in (1, 4, 16):
        spec = PropagatorSpec(g, kappa=0.0, n_substeps=n)
        out = substep(s, spec, 0.37)
        np.testing.assert_allclose(out.amplitudes, _exact_free(s, g, 0.37), atol=1e-13)


def test_substep_norm_over_many_steps():
    g = build_geometry(4, 1, 2)
    spec = PropagatorSpec(g, kappa=8.0, n_substeps=32)
    s = _random_state(g, 3)
    n0 = s.norm()
    for _ in range(1000):
        s = substep(s, spec, 1 / 32)
    assert abs(s.norm() - n0) < 1e-12


def test_substep_rejects_momentum_state():
    g = build_geometry(3, 0, 0)
    s = transform(StateVector.basis(0, g), 0, TO_MOMENTUM, g)
    with pytest.raises(ValueError, match="position"):
        substep(s, PropagatorSpec(g), 0.5)


def test_evolve_unit_matches_direct_cat_matrix():
    g = build_geometry(2, 0, 0)
    spec = PropagatorSpec(g, eta=1)
    n = 4
    k = np.arange(n)
    f = np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
    ufree = f.conj().T @ np.diag(np.exp(-1j * np.pi * k**2 / n)) @ f
    kick = np.diag(np.exp(1j * np.pi * k**2 / n))
    want = kick @ ufree
    got = np.column_stack([evolve_unit(StateVector.basis(j, g), spec).amplitudes for j in range(n)])
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_free_evolution_keeps_momentum_moduli():
    g = build_geometry(4, 1, 1)
    s = _random_state(g, 5)
    spec = PropagatorSpec(g, eta=0, kappa=0.0)
    before = np.abs(transform(transform(s, 0, TO_MOMENTUM, g), 1, TO_MOMENTUM, g).amplitudes)
    out = evolve_unit(s, spec)
    after = np.abs(transform(transform(out, 0, TO_MOMENTUM, g), 1, TO_MOMENTUM, g).amplitudes)
    np.testing.assert_allclose(after, before, atol=1e-13)


def test_evolve_unit_unitary():
    g = build_geometry(3, 1, 2)
    spec = PropagatorSpec(g, eta=1, kappa=4.0, n_substeps=8)
    cols = np.column_stack([evolve_unit(StateVector.basis(j, g), spec).amplitudes for j in range(g.dim)])
    assert unitarity_defect(cols) < 1e-12


def test_accumulate_starts_at_identity_and_matches_evolve_unit():
    g = build_geometry(3, 1, 1)
    spec = PropagatorSpec(g, eta=1, kappa=2.0, n_substeps=8, sample_dt=0.5)
    ws = list(accumulate(spec, 2.0, copy=True))
    assert [w.time for w in ws] == [0.0, 0.5, 1.0, 1.5, 2.0]
    np.testing.assert_array_equal(ws[0].matrix, np.eye(g.dim))
    s = StateVector.basis(5, g)
    for _ in range(2):
        s = evolve_unit(s, spec)
    np.testing.assert_allclose(ws[-1].matrix[:, 5], s.amplitudes, atol=1e-12)


def test_accumulate_memory_budget():
    g = build_geometry(6, 1, 2)
    spec = PropagatorSpec(g)
    with pytest.raises(MemoryBudgetError, match=str(required_bytes(spec))):
        next(accumulate(spec, 1.0, memory_budget=1024))


def test_acf_independent_of_substeps_without_scattering():
    g = build_geometry(4, 0, 0)
    series = []
    for n in (1, 4, 16):
        spec = PropagatorSpec(g, eta=1, n_substeps=n, sample_dt=0.25)
        series.append([acf(w, g) for w in accumulate(spec, 6.0)])
    np.testing.assert_allclose(series[1], series[0], atol=1e-12)
    np.testing.assert_allclose(series[2], series[0], atol=1e-12)


def test_environment_decouples_without_scattering():
    g0 = build_geometry(4, 0, 0)
    g3 = build_geometry(4, 1, 3)
    for eta in (0, 1):
        a = [acf(w, g0) for w in accumulate(PropagatorSpec(g0, eta=eta, sample_dt=0.5), 5.0)]
        b = [acf(w, g3) for w in accumulate(PropagatorSpec(g3, eta=eta, kappa=0.0, sample_dt=0.5), 5.0)]
        np.testing.assert_allclose(b, a, atol=1e-12)


def test_generator_is_hermitian_and_exact_flow_unitary():
    g = build_geometry(3, 1, 2)
    spec = PropagatorSpec(g, kappa=3.0, flow="exact")
    G = flow_generator(spec)
    np.testing.assert_allclose(G, G.conj().T, atol=1e-14)
    assert unitarity_defect(propagator_at(spec, 1.0)) < 1e-12


def test_trotter_second_order_against_exact_flow():
    # asymptotic regime: the error must fall by ~4x per doubling
    g = build_geometry(5, 1, 1)
    exact = propagator_at(PropagatorSpec(g, kappa=8.0, flow="exact"), 1.0).matrix
    errs = [
        np.linalg.norm(propagator_at(PropagatorSpec(g, kappa=8.0, n_substeps=n), 1.0).matrix - exact)
        for n in (64, 128, 256)
    ]
    for a, b in zip(errs, errs[1:]):
        assert math.log2(a / b) == pytest.approx(2.0, abs=0.3)


def test_trotter_converges_to_exact_flow():
    g = build_geometry(4, 1, 2)
    exact = propagator_at(PropagatorSpec(g, eta=1, kappa=4.0, flow="exact"), 2.0).matrix
    trot = propagator_at(PropagatorSpec(g, eta=1, kappa=4.0, n_substeps=512), 2.0).matrix
    assert np.abs(trot - exact).max() < 1e-4
