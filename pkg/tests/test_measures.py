import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowlab import InvalidInputError, SingularDerivativeError, UnsupportedOperationError, build_grid, zoo
from shadowlab.measures import (
    EmpiricalMeasure,
    atomic_cesaro,
    birkhoff_measure,
    cell_map,
    cesaro_invariantize,
    chebyshev_polynomials,
    combine_full_support,
    full_support_pipeline,
    function_gap,
    invariance_defect,
    lyapunov_estimate,
    mass_near,
    point_mass,
    push_forward,
    recurrent_fraction,
    sup_norm,
    total_variation,
    trig_polynomials,
    uniform_measure,
)
from shadowlab.pseudo import noisy_orbit

from conftest import cached_report


def test_measure_validation():
    g = build_grid(zoo("rotation").space, 0.25)
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure(g, [0.5, 0.5, 0.5, 0.5])
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure(g, [1.0, 0.0, 0.0])
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure(g, [1.5, -0.5, 0.0, 0.0])


def test_birkhoff_of_exact_rotation_orbit():
    r = zoo("rotation", alpha=0.25)
    g = build_grid(r.space, 0.25)
    ps = noisy_orbit(r, 0.0, 0.0, 8, 0)
    mu = birkhoff_measure(ps, g)
    assert mu.weights == pytest.approx([0.25] * 4)
    assert birkhoff_measure(ps, g, window=(0, 1)).weights.tolist() == [1, 0, 0, 0]
    with pytest.raises(InvalidInputError):
        birkhoff_measure(ps, g, window=(3, 3))


def test_push_forward_and_defect():
    r = zoo("rotation", alpha=0.25)
    g = build_grid(r.space, 0.25)
    mu = point_mass(g, 0.0)
    assert push_forward(r, mu).weights.tolist() == [0, 1, 0, 0]
    assert invariance_defect(r, mu) == 1.0
    assert invariance_defect(r, uniform_measure(g)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=20, max_size=20).filter(lambda w: sum(w) > 0))
def test_total_variation_is_a_metric(w):
    g = build_grid(zoo("rotation").space, 0.05)
    mu = EmpiricalMeasure(g, np.array(w) / sum(w))
    nu = uniform_measure(g)
    assert 0 <= total_variation(mu, nu) <= 1
    assert total_variation(mu, nu) == total_variation(nu, mu)
    assert total_variation(mu, mu) == 0


def test_cesaro_north_south_concentrates_on_attractor():
    s = zoo("north_south")
    g = build_grid(s.space, 1e-3)
    mu = cesaro_invariantize(s, point_mass(g, 0.25), 1000)
    assert mu.weights[500] > 0.99


def test_cesaro_defect_shrinks_like_one_over_n():
    r = zoo("rotation")
    g = build_grid(r.space, 0.01)
    mu = cesaro_invariantize(r, point_mass(g, 0.0), 200)
    assert invariance_defect(r, mu) <= 1 / 200 + 1e-12


def test_atomic_cesaro_equidistributes_rotation():
    r = zoo("rotation")
    g = build_grid(r.space, 0.01)
    mu = atomic_cesaro(r, [0.0], g, 10_000)
    assert total_variation(mu, uniform_measure(g)) < 0.02


def test_combine_weights_halve():
    g = build_grid(zoo("rotation").space, 0.25)
    mu = combine_full_support([point_mass(g, 0.0), point_mass(g, 0.25)])
    assert mu.weights == pytest.approx([2 / 3, 1 / 3, 0, 0])
    with pytest.raises(InvalidInputError):
        combine_full_support([])


def test_pipeline_on_rotation():
    r = zoo("rotation")
    g = build_grid(r.space, 0.01)
    nets = [np.linspace(0, 1, 2**m, endpoint=False) for m in range(1, 4)]
    mu, parts = full_support_pipeline(r, g, [0.5, 0.25, 0.125], nets, 2000)
    assert len(parts) == 3
    assert len(mu.support) == g.n_cells
    assert "eps=0.5,0.25,0.125" in mu.provenance


def test_mass_near():
    g = build_grid(zoo("rotation").space, 0.1)
    mu = uniform_measure(g)
    assert mass_near(mu, [0], 0.1) == pytest.approx(0.3)
    assert mass_near(mu, [], 0.1) == 0.0


@pytest.mark.parametrize("name", ["rotation", "north_south"])
def test_recurrent_fraction(name):
    s, g, rep = cached_report(name)
    ps = noisy_orbit(s, None, 1e-3, 10_000, 0)
    frac = recurrent_fraction(s, ps, 0.1, g.reps[rep.recurrent])
    assert 0.9 <= frac <= 1.0


def test_lyapunov():
    assert lyapunov_estimate(zoo("doubling"), 0.3, 100) == pytest.approx(math.log(2))
    assert lyapunov_estimate(zoo("rotation"), 0.3, 10) == 0.0
    s = zoo("north_south")
    assert lyapunov_estimate(s, 0.5, 10) == pytest.approx(math.log(1 - math.pi / 4))
    with pytest.raises(UnsupportedOperationError):
        lyapunov_estimate(dataclasses.replace(zoo("doubling"), derivative=None), 0.3, 5)


def test_singular_derivative_is_reported():
    # a derivative vanishing at 1/2, reached from 0 in two quarter turns
    s = dataclasses.replace(zoo("rotation", alpha=0.25), derivative=lambda x: np.where(np.asarray(x) == 0.5, 0.0, 1.0))
    with pytest.raises(SingularDerivativeError) as info:
        lyapunov_estimate(s, 0.0, 5)
    assert info.value.index == 2


def test_function_gap_bound():
    rng = np.random.default_rng(0)
    for name in ["rotation", "north_south", "doubling"]:
        s = zoo(name)
        g = build_grid(s.space, 0.01)
        mu = cesaro_invariantize(s, point_mass(g, 0.3), 500)
        defect = invariance_defect(s, mu)
        cmap = cell_map(s, g)
        for f in trig_polynomials(rng, 5):
            assert function_gap(s, mu, f, cmap) <= 2 * defect * sup_norm(f, g) + 1e-12
    q = zoo("quartic_interval")
    gq = build_grid(q.space, 0.01)
    for f in chebyshev_polynomials(rng, 3):
        assert np.isfinite(sup_norm(f, gq))
