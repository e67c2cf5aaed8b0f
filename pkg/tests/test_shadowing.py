import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowlab import InvalidInputError, build_grid, zoo
from shadowlab.pseudo import crossing_pseudo, exact_pseudo, make_pseudo, noisy_orbit, winding_pseudo
from shadowlab.shadowing import (
    anchored_orbit,
    cover_lower_bound,
    density,
    multishadow_search,
    orbit_defect,
    shadow_search,
    subsequence_shadow_search,
    syndetic_visit_check,
    thin_points,
    verify_multishadow,
    verify_shadow,
    verify_subsequence,
)

import oracles
from conftest import cached_report


@settings(max_examples=100)
@given(st.lists(st.integers(0, 40), max_size=15), st.integers(40, 60))
def test_density_matches_oracle(K, end):
    assert density(K, end) == pytest.approx(oracles.upper_density(K, end))


def test_density_examples():
    assert density([0, 1, 2], 2) == 1.0
    assert density([], 5) == 0.0
    assert density([1], 9) == 0.5
    with pytest.raises(InvalidInputError):
        density([11], 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cover_lower_bound_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    cover = rng.random((12, 7)) < 0.3
    cover[np.arange(12), rng.integers(0, 7, 12)] = True
    bound, exact, picked = cover_lower_bound(cover)
    assert exact
    assert bound == oracles.min_cover_size(cover)
    assert cover[:, picked].any(axis=1).all()


def test_anchored_orbit_backward_for_invertible_and_preimage_guided():
    r = zoo("rotation", alpha=0.25)
    assert anchored_orbit(r, 0.5, 2, 0, 3) == pytest.approx([0.0, 0.25, 0.5, 0.75])
    d = zoo("doubling")
    guide = noisy_orbit(d, 0.3, 1e-4, 30, 0).points
    orb = anchored_orbit(d, guide[-1], 29, 0, 29, guide=guide)
    assert orbit_defect(d, orb) < 1e-9
    with pytest.raises(Exception):
        anchored_orbit(d, 0.1, 5, 0, 9)


def test_exact_orbit_is_shadowed_by_itself():
    s = zoo("sin2_circle")
    ps = exact_pseudo(s, 0.3, 200)
    cert = shadow_search(s, ps, 1e-6, None)
    assert cert.found and cert.max_error == 0.0
    assert verify_shadow(s, ps, cert)


def test_doubling_shadowing_via_pullback():
    d = zoo("doubling")
    ps = noisy_orbit(d, 0.3, 1e-4, 1000, 1)
    cert = shadow_search(d, ps, 2e-4, build_grid(d.space, 0.01))
    assert cert.found and cert.anchor == 999
    assert verify_shadow(d, ps, cert)
    # forward orbit of the start point drifts off
    assert not verify_shadow(d, ps, dataclasses.replace(cert, point=float(ps.points[0]), anchor=0))


def test_crossing_defeats_single_orbit():
    q = zoo("quartic_interval")
    c = crossing_pseudo(q)
    g = build_grid(q.space, 0.01)
    fail = shadow_search(q, c, 0.1, g)
    assert not fail.found
    assert fail.min_sup_error > 0.5
    cert = multishadow_search(q, c, 0.1, g, 3)
    assert cert.found and cert.n_orbits == 2
    assert cert.lower_bound == 2 and cert.lower_bound_exact
    assert verify_multishadow(q, c, cert)


def test_multishadow_tamper_is_caught():
    q = zoo("quartic_interval")
    c = crossing_pseudo(q)
    cert = multishadow_search(q, c, 0.1, build_grid(q.space, 0.01), 3)
    bad = dataclasses.replace(cert, assignment=np.zeros_like(cert.assignment))
    assert not verify_multishadow(q, c, bad)
    assert not verify_multishadow(q, c, dataclasses.replace(cert, eps=0.001))


def test_winding_needs_many_orbits():
    s = zoo("sin2_circle")
    w = winding_pseudo(s, 0.01, 10)
    fail = multishadow_search(s, w, 0.05, build_grid(s.space, 0.01), 8)
    assert not fail.found
    assert fail.lower_bound >= 9 and fail.greedy_n >= fail.lower_bound


def test_multishadow_budget_validation():
    r = zoo("rotation")
    ps = noisy_orbit(r, 0.1, 1e-3, 100, 0)
    with pytest.raises(InvalidInputError):
        multishadow_search(r, ps, 0.1, None, 0)
    cert = multishadow_search(r, ps, 0.1, None, 1)
    assert cert.found and cert.n_orbits == 1
    assert cert.to_dict()["N"] == 1


def test_thin_points_spacing():
    s = zoo("rotation")
    pts = np.linspace(0, 0.99, 100)
    kept = thin_points(s.space, pts, 0.05)
    gaps = np.diff(kept)
    assert np.all(gaps > 0.05) and kept[0] == 0.0


@pytest.mark.parametrize("name", ["rotation", "doubling", "north_south", "sin2_circle"])
def test_subsequence_certificate_verifies(name):
    s, g, rep = cached_report(name)
    centers = thin_points(s.space, g.reps[rep.minimal], 0.005)
    ps = noisy_orbit(s, None, 1e-3, 5000, 2)
    cert = subsequence_shadow_search(s, ps, 0.1, 100, centers, True)
    assert cert.density >= 0.01
    assert verify_subsequence(s, ps, cert)
    assert cert.density == pytest.approx(oracles.upper_density(cert.K.tolist(), len(ps) - 1))
    # a perturbed claim fails re-verification
    assert not verify_subsequence(s, ps, dataclasses.replace(cert, density=cert.density / 2))


def test_subsequence_needs_centers():
    r = zoo("rotation")
    ps = noisy_orbit(r, 0.1, 1e-3, 100, 0)
    with pytest.raises(InvalidInputError):
        subsequence_shadow_search(r, ps, 0.1, 10, [])


def test_syndetic_visits():
    s, g, rep = cached_report("north_south")
    ps = noisy_orbit(s, 0.25, 1e-3, 2000, 0)
    v = syndetic_visit_check(s, ps, 0.1, g.reps[rep.minimal])
    assert v.syndetic and v.excursion_is_prefix
    assert len(v.excursions) == v.max_gap - 1
    never = syndetic_visit_check(s, ps, 0.1, [])
    assert never.max_gap == len(ps) + 1 and not never.syndetic
