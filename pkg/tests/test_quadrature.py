import math

import numpy as np
import pytest

from kitaev_bures.quadrature import (
    GridSpec,
    compensated_sum,
    integrate_bz,
    integrate_bz_refined,
)

FOUR_PI_SQ = 4 * math.pi**2
TIGHT = GridSpec(base_n=64, target_rel_tol=1e-13, max_doublings=5)


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(base_n=8)
    with pytest.raises(ValueError):
        GridSpec(refine_radius_factor=0.0)
    with pytest.raises(ValueError):
        GridSpec(target_rel_tol=-1.0)


def test_constant_integrand():
    res = integrate_bz(lambda px, py: np.ones_like(px + py), TIGHT)
    assert res.converged
    assert res.value == pytest.approx(FOUR_PI_SQ, rel=1e-15)


def test_sin_squared():
    res = integrate_bz(lambda px, py: np.sin(px) ** 2 + 0 * py, TIGHT)
    assert res.value == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_cos_cos_orthogonality():
    res = integrate_bz(lambda px, py: np.cos(px) * np.cos(py), TIGHT)
    assert abs(res.value) < 1e-14


def test_trig_polynomial_exactness():
    # e^{i k p} integrates exactly for |k| below the grid bandwidth
    grid = GridSpec(base_n=32, target_rel_tol=1e-13, max_doublings=1)
    for kx, ky in ((1, 0), (7, 5), (15, 15), (31, 2)):
        res = integrate_bz(
            lambda px, py, kx=kx, ky=ky: np.cos(kx * px) * np.cos(ky * py) + 2.0, grid
        )
        assert res.value == pytest.approx(2.0 * FOUR_PI_SQ, abs=5e-12)


def test_vector_valued_integrand():
    def f(px, py):
        return np.stack([np.ones_like(px + py), np.sin(px) ** 2 + 0 * py])

    res = integrate_bz(f, TIGHT)
    assert res.value.shape == (2,)
    assert res.value[0] == pytest.approx(FOUR_PI_SQ, rel=1e-14)
    assert res.value[1] == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_refined_noop_without_singular_points():
    f = lambda px, py: np.exp(np.cos(px)) * np.cos(py) ** 2
    plain = integrate_bz(f, TIGHT)
    ref = integrate_bz_refined(f, [], 0.1, TIGHT)
    assert ref.value == plain.value  # identical code path, bit-identical


@pytest.mark.parametrize("width", [0.05, 0.2])
def test_refined_matches_plain_on_smooth_integrands(width):
    f = lambda px, py: np.exp(np.cos(px) + 0.5 * np.sin(py))
    plain = integrate_bz(f, TIGHT)
    ref = integrate_bz_refined(f, [(0.3, -1.1), (-2.0, 2.0)], width, TIGHT)
    assert ref.converged
    assert abs(ref.value - plain.value) / abs(plain.value) < 1e-12


def test_refined_near_singular_peak():
    # integrable peak of width 1e-3: the base rule alone cannot resolve it,
    # and the refinement disk must cover the whole 1/r^2 shoulder (radius
    # factor sized so factor * width stays O(0.3))
    w2 = 1e-6
    f = lambda px, py: 1.0 / (px**2 + py**2 + w2)

    def spec(levels):
        return GridSpec(
            base_n=128,
            target_rel_tol=1e-7,
            max_doublings=4,
            refine_levels=levels,
            refine_radius_factor=300.0,
        )

    exact_ref = integrate_bz_refined(f, [(0.0, 0.0)], 1e-3, spec(2))
    coarse = integrate_bz(f, GridSpec(base_n=128, target_rel_tol=1e-10, max_doublings=2))
    assert exact_ref.converged
    assert not coarse.converged
    # self-consistency across refinement levels
    for levels in (3, 4):
        finer = integrate_bz_refined(f, [(0.0, 0.0)], 1e-3, spec(levels))
        assert exact_ref.value == pytest.approx(finer.value, rel=1e-9)


def test_error_estimates_conservative(rng):
    # on smooth integrands, |I(n) - I(2n)| must bound the true error of the
    # returned value (vs a much finer reference) in at least 95% of trials
    wins = 0
    trials = 40
    for _ in range(trials):
        k1, k2 = rng.integers(1, 6, size=2)
        a, b, c = rng.normal(size=3)

        def f(px, py, k1=k1, k2=k2, a=a, b=b, c=c):
            return np.exp(a * np.cos(k1 * px) + b * np.sin(k2 * py)) + c

        res = integrate_bz(f, GridSpec(base_n=16, target_rel_tol=1e-8, max_doublings=2))
        ref = integrate_bz(f, GridSpec(base_n=256, target_rel_tol=1e-13, max_doublings=2))
        true_err = abs(res.value - ref.value)
        if true_err <= max(res.error_estimate, 1e-14 * abs(ref.value)):
            wins += 1
    assert wins >= int(0.95 * trials)


def test_nonconvergence_reported():
    f = lambda px, py: 1.0 / ((px - 0.37) ** 2 + (py + 0.91) ** 2 + 1e-10)
    res = integrate_bz(f, GridSpec(base_n=16, target_rel_tol=1e-10, max_doublings=2))
    assert not res.converged


def test_deterministic_repeatability():
    f = lambda px, py: np.exp(np.cos(3 * px) - np.sin(2 * py))
    g = GridSpec(base_n=32, target_rel_tol=1e-10, max_doublings=3)
    a = integrate_bz(f, g)
    b = integrate_bz(f, g)
    assert a.value == b.value and a.error_estimate == b.error_estimate
    ra = integrate_bz_refined(f, [(0.5, 0.5)], 0.1, g)
    rb = integrate_bz_refined(f, [(0.5, 0.5)], 0.1, g)
    assert ra.value == rb.value


def test_compensated_sum_matches_fsum(rng):
    vals = rng.normal(size=200_001) * np.exp(rng.uniform(-20, 20, size=200_001))
    assert compensated_sum(vals) == pytest.approx(math.fsum(vals.tolist()), rel=1e-15)
    assert compensated_sum(np.array([])) == 0.0


def test_singular_point_dedup_and_momentum_objects():
    from kitaev_bures.spectrum import Momentum

    f = lambda px, py: np.exp(np.cos(px) + 0.5 * np.sin(py))
    plain = integrate_bz(f, TIGHT)
    # duplicated points (one wrapped by 2 pi) collapse to a single disk
    ref = integrate_bz_refined(
        f, [Momentum(0.3, -1.1), (0.3 + 2 * math.pi, -1.1)], 0.1, TIGHT
    )
    assert abs(ref.value - plain.value) / abs(plain.value) < 1e-12
