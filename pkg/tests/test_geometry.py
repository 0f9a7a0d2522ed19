import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radlab.errors import InvalidDimension, OutOfRange, ResourceLimitExceeded
from radlab.geometry import (
    RING_COUNT_BOUNDS, Ball, DyadicCube, RadialCovering, Shell, axis_covered,
    build_radial_covering, multiplicity, omega, ring_centers0, ring_count, scan_level,
    verify_regular,
)

_COV = build_radial_covering(2, 4, 32)


@pytest.fixture(scope="module")
def cov2():
    return _COV


def test_ring_count_examples():
    assert ring_count(2, 0) == 1
    assert ring_count(2, 3) == 7
    c1, c2 = RING_COUNT_BOUNDS[3]
    assert c1 * 100 ** 2 <= ring_count(3, 100) <= c2 * 100 ** 2


def test_ring_count_invalid_dimension():
    with pytest.raises(InvalidDimension):
        ring_count(1, 3)


def test_ring_count_formula_and_bounds():
    assert all(ring_count(2, k) == 2 * k + 1 for k in range(1, 1001))
    for n in (2, 3):
        c1, c2 = RING_COUNT_BOUNDS[n]
        ratios = [ring_count(n, k) / k ** (n - 1) for k in range(1, 1001)]
        assert c1 <= min(ratios) and max(ratios) <= c2


def test_dyadic_cube_geometry():
    Q = DyadicCube(3, (1, -2))
    assert Q.side == 0.125
    assert -math.log2(Q.side) == 3
    np.testing.assert_array_equal(Q.lower, [0.125, -0.25])
    assert DyadicCube(2, (0, -1)).contains(Q)


def test_ball_and_shell():
    with pytest.raises(ValueError):
        Ball((0.0, 0.0), 0.0)
    assert Ball((0.0, 0.0), 1.0).contains((1.0, 0.0))
    s = Shell(1, 3)
    assert s.contains((1.5, 0.0)) and not s.contains((2.0, 0.0))
    assert Shell(0, 0).contains((0.0, 0.0))


def test_level0_ring_five(cov2):
    c = cov2.centers(0, 5)
    assert c.shape == (11, 2)
    np.testing.assert_allclose(np.linalg.norm(c, axis=1), 5.5, rtol=0, atol=1e-13)
    assert cov2.radius(0) == 6.0
    assert cov2.diameter(3) == 12 * 2.0 ** -3


def test_level_scaling_exact(cov2):
    for k in (0, 1, 7, 32):
        np.testing.assert_array_equal(cov2.centers(3, k), cov2.centers(0, k) / 8)
    np.testing.assert_array_equal(cov2.centers(0, 0), [[0.0, 0.0]])


def test_ring_center_norms_equal():
    for n in (2, 3):
        for k in (1, 4, 20):
            c = ring_centers0(n, k)
            np.testing.assert_allclose(np.linalg.norm(c, axis=1), k + 0.5, atol=1e-12)


def test_point_covered_by_ring_seven(cov2):
    c = cov2.centers(0, 7)
    d = np.linalg.norm(c - np.array([7.25, 0.0]), axis=1)
    assert np.count_nonzero(d <= 6.0) >= 1


def test_resource_limit():
    with pytest.raises(ResourceLimitExceeded):
        build_radial_covering(2, 6, 512, cell_budget=1000)


def test_omega_examples(cov2):
    big = DyadicCube(-6, (-1, -1))
    assert omega(big, 0, 5, cov2) == ring_count(2, 5)
    far = DyadicCube(0, (100, 100))
    assert omega(far, 0, 5, cov2) == 0
    for j in range(3):
        for idx in [(0, 0), (3, -2), (-40, 5)]:
            assert omega(DyadicCube(2, idx), j, 0, cov2) in (0, 1)
    with pytest.raises(OutOfRange):
        omega(big, 9, 0, cov2)


@settings(max_examples=60, deadline=None)
@given(st.integers(-3, 3), st.integers(-8, 8), st.integers(-8, 8), st.integers(0, 3),
       st.integers(0, 32))
def test_omega_monotone_under_inclusion(level, i, k1, j, k):
    cov = _COV
    P = DyadicCube(level, (i, k1))
    parent = DyadicCube(level - 1, (i // 2, k1 // 2))
    assert parent.contains(P)
    assert omega(P, j, k, cov) <= omega(parent, j, k, cov)


def test_multiplicity_single_ball():
    cov = RadialCovering(2, 0, 1, (np.zeros((1, 2)), np.zeros((0, 2))))
    assert multiplicity(cov, 0) == 1


def test_multiplicity_uniform_and_stable():
    a = build_radial_covering(2, 4, 64)
    b = build_radial_covering(2, 4, 128)
    m = {multiplicity(a, j) for j in (0, 4)}
    assert len(m) == 1
    assert multiplicity(b, 0) == multiplicity(a, 0)


def test_coverage_and_axis(cov2):
    for j in range(cov2.j_max + 1):
        s = scan_level(cov2, j)
        assert s.shell_misses == 0 and s.union_misses == 0
        assert axis_covered(cov2, j)


def test_verify_regular_passes(cov2):
    rep = verify_regular(cov2)
    assert rep["pass"]
    assert rep["clauses"]["iii"]["diameter_times_2^j"] == 12.0
    assert set(rep["clauses"]["ii"]["enlarged_multiplicity"]) == {"0.5", "0.25", "0.125"}


def test_verify_regular_detects_hole(cov2):
    rep = verify_regular(cov2.without_ring(10), levels=[0, 1])
    assert not rep["clauses"]["i"]["pass"]


def test_verify_regular_three_dimensions():
    cov = build_radial_covering(3, 1, 8)
    rep = verify_regular(cov, density=2, eps_set=(0.5,))
    assert rep["clauses"]["i"]["pass"] and rep["clauses"]["iii"]["pass"]


def test_json_round_trip(cov2):
    text = cov2.to_json()
    doc = json.loads(text)
    assert doc["ball_radius0"] == "6" and doc["rings"][3]["radius0"] == "3.5"
    back = RadialCovering.from_json(text)
    for k in range(cov2.k_max + 1):
        np.testing.assert_array_equal(back.centers(2, k), cov2.centers(2, k))
