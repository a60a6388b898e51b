from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from isozaki_kit.experiments import builtin_perturbation
from isozaki_kit.forward import align_bsd, assemble, make_bsd
from isozaki_kit.geometry import inner_omega, norm_omega
from isozaki_kit.potential import from_values, sample
from isozaki_kit.reconstruct import (
    FourierSamples,
    choose_cutoff,
    estimate_lambda,
    fourier_sample,
    frequency_grid,
    h_minus1_norm,
    hypothesis_sum,
    invert,
    reconstruct,
)

from conftest import BUMP1, BUMP2, unit_grid

# ||1||_{H^-1} on the unit square: (2 pi)^-2 int (1 + |xi|^2)^-1 |qhat|^2 dxi
# rewritten as int_{[-1,1]^2} K0(|y|) / (2 pi) (1 - |y_1|)(1 - |y_2|) dy
UNIT_SQUARE_H1 = 0.4089894837366586


@pytest.fixture(scope="module")
def shift_pair():
    grid = unit_grid(15)
    q = sample(BUMP1, grid)
    b1 = make_bsd(grid, q)
    b2 = make_bsd(grid, from_values(q.values + 0.01, grid))
    return grid, b1, align_bsd(b1, b2)


def test_constant_shift_lambda(shift_pair):
    _, b1, b2 = shift_pair
    assert estimate_lambda(b1, b2) == pytest.approx(0.01, abs=1e-10)
    scale = np.sum(b1.trace_norms() ** 2)
    assert hypothesis_sum(b1, b2)[-1] <= 1e-14 * scale


def test_identical_lambda_zero(bump_pair_31):
    b = bump_pair_31["bsd1"]
    assert estimate_lambda(b, b) == 0.0
    assert np.all(hypothesis_sum(b, b) == 0.0)


def test_tail_start_guard(bump_pair_31):
    b = bump_pair_31["bsd1"]
    with pytest.raises(ValueError):
        estimate_lambda(b, b, tail_start=b.K)


def test_lambda_stable_in_tail_start(bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    K = b1.K
    a, b = estimate_lambda(b1, b2, K // 4), estimate_lambda(b1, b2, K // 2)
    assert abs(a - b) <= 0.2 * b


@pytest.mark.xfail(strict=True, reason="trace increments stay flat across the grid spectrum; see notes")
def test_hypothesis_sum_plateaus():
    grid = unit_grid(31)
    q = sample(BUMP1, grid)
    b1 = make_bsd(grid, q)
    dq = builtin_perturbation("gaussian", grid.spec)
    b2 = align_bsd(b1, make_bsd(grid, from_values(q.values + 0.01 * dq, grid)), rotate_clusters=True)
    s = hypothesis_sum(b1, b2)
    assert s[-1] - s[3 * len(s) // 4] < 0.1 * s[-1]


def test_samples_vanish_for_equal_data(bump_pair_31):
    b = bump_pair_31["bsd1"]
    s = fourier_sample(b, b, frequency_grid(2, 1.0, 6.0), tau=20.0)
    assert np.all(s.values == 0)


def test_constant_shift_zero_frequency(shift_pair):
    grid, b1, b2 = shift_pair
    s = fourier_sample(b1, b2, [[0.0, 0.0]], tau=40.0)
    # the grid quadrature of the box sees (n / (n + 1))^2 of its area
    assert s.values[0].real == pytest.approx(-0.01 * (15 / 16) ** 2, rel=0.05)
    assert s.values[0].imag == 0.0


def test_series_and_direct_agree(bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    xi = frequency_grid(2, 1.0, 4.0)
    s = fourier_sample(b1, b2, xi, tau=32.0)
    d = fourier_sample(b1, b2, xi, tau=32.0, method="direct",
                       ops=(bump_pair_31["op1"], bump_pair_31["op2"]))
    assert np.all(np.abs(s.values - d.values) <= 0.02 * np.abs(d.values))


def test_direct_needs_potentials(bump_pair_31):
    b = replace(bump_pair_31["bsd1"], field=None)
    with pytest.raises(ValueError):
        fourier_sample(b, b, [[0.0, 0.0]], tau=4.0, method="direct")


def test_workers_do_not_change_samples(bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    xi = frequency_grid(2, 1.0, 5.0)
    a = fourier_sample(b1, b2, xi, tau=16.0)
    b = fourier_sample(b1, b2, xi, tau=16.0, workers=3)
    assert a.values.tobytes() == b.values.tobytes()


def test_hermitian_symmetry(bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    xi = frequency_grid(2, 1.0, 5.0)
    assert fourier_sample(b1, b2, xi, tau=16.0).hermitian_defect() == 0.0
    # without mirroring the pair mismatch is a finite-tau bias that shrinks like 1/tau
    defects = [fourier_sample(b1, b2, xi, tau=t, symmetrize=False).hermitian_defect() for t in (16.0, 32.0)]
    assert defects[1] <= 0.6 * defects[0]


def test_isozaki_samples_match_quadrature():
    grid = unit_grid(63)
    q1, q2 = sample(BUMP1, grid), sample(BUMP2, grid)
    ops = (assemble(grid, q1), assemble(grid, q2))
    xi = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [0.0, 3.0], [-2.0, 3.0], [4.0, 0.0]])
    s = fourier_sample(make_bsd(grid, q1, 1), make_bsd(grid, q2, 1), xi, tau=64.0, method="direct",
                       ops=ops, symmetrize=False)
    diff = q1.values - q2.values
    oracle = np.array([inner_omega(diff, np.exp(1j * grid.points @ x), grid) for x in xi])
    assert np.all(np.abs(s.values - oracle) <= 0.1 * np.abs(oracle))


@pytest.mark.parametrize("Lam, d, r", [(1e-6, 3, 10 ** 2.4), (1.0, 2, 1.0), (1.0, 3, 1.0)])
def test_cutoff_examples(Lam, d, r):
    assert choose_cutoff(Lam, d) == pytest.approx(r, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(Lam=st.floats(1e-12, 1e6), d=st.sampled_from([2, 3]), c=st.floats(0.1, 10))
def test_cutoff_power_law(Lam, d, c):
    ratio = choose_cutoff(2 * Lam, d, c) / choose_cutoff(Lam, d, c)
    assert ratio == pytest.approx(2 ** (-2 / (d + 2)), rel=1e-12)


def test_cutoff_edge_cases():
    assert choose_cutoff(0.0, 2, r_max=7.5) == 7.5
    with pytest.raises(ValueError):
        choose_cutoff(0.0, 2)
    with pytest.raises(ValueError):
        choose_cutoff(-1.0, 2)
    assert choose_cutoff(16.0, 2, denominator=2) == pytest.approx(0.25)


def _samples(xi, values, grid, r_max):
    return FourierSamples(xi=xi, values=values, tau=np.ones(len(xi)), method="series", grid=grid.spec,
                          r_max=r_max)


def test_invert_zero():
    grid = unit_grid(15)
    xi = frequency_grid(2, 1.0, 10.0)
    assert np.all(invert(_samples(xi, np.zeros(len(xi), complex), grid, 10.0), 10.0, grid) == 0)


def test_invert_rejects_short_coverage():
    grid = unit_grid(15)
    xi = frequency_grid(2, 1.0, 10.0)
    with pytest.raises(ValueError):
        invert(_samples(xi, np.zeros(len(xi), complex), grid, 10.0), 12.0, grid)


def _sine_transform(m, xi):
    """``int_0^1 sin(m pi x) exp(-i xi x) dx``."""
    re = integrate.quad(lambda x: np.sin(m * np.pi * x) * np.cos(xi * x), 0, 1, limit=200)[0]
    im = integrate.quad(lambda x: np.sin(m * np.pi * x) * np.sin(xi * x), 0, 1, limit=200)[0]
    return re - 1j * im


def test_invert_recovers_mode():
    grid = unit_grid(31)
    truth = np.sin(2 * np.pi * grid.points[:, 0]) * np.sin(np.pi * grid.points[:, 1])
    errs = []
    for r in (20.0, 40.0):
        xi = frequency_grid(2, 1.0, r)
        cache = {}
        for a in np.unique(xi):
            cache[(2, a)] = _sine_transform(2, a)
            cache[(1, a)] = _sine_transform(1, a)
        vals = np.array([cache[(2, x[0])] * cache[(1, x[1])] for x in xi])
        rec, residue = invert(_samples(xi, vals, grid, r), r, grid, return_residue=True)
        errs.append(norm_omega(rec - truth, grid) / norm_omega(truth, grid))
        assert residue <= 1e-6
    assert errs[1] < errs[0] < 0.05


def test_h_minus1_zero_and_scaling():
    grid = unit_grid(15)
    q = sample(BUMP1, grid).values
    assert h_minus1_norm(np.zeros(grid.size), grid) == 0.0
    base = h_minus1_norm(q, grid)
    assert h_minus1_norm(-2.5 * q, grid) == pytest.approx(2.5 * base, rel=1e-12)
    assert base < norm_omega(q, grid)


def test_h_minus1_unit_square():
    grid = unit_grid(31)
    val, tail = h_minus1_norm(np.ones(grid.size), grid, return_tail=True)
    assert val == pytest.approx(UNIT_SQUARE_H1, rel=0.01)
    assert tail == pytest.approx((31 / 32) ** 2 * (grid.h / np.pi) ** 2)


@pytest.mark.slow
def test_h_minus1_oracle_value():
    from scipy.special import k0

    def g(b, a):
        return k0(np.hypot(a, b)) / (2 * np.pi) * 4 * (1 - a) * (1 - b)

    val = integrate.dblquad(g, 0, 1, 0, 1, epsabs=1e-12, epsrel=1e-11)[0]
    assert np.sqrt(val) == pytest.approx(UNIT_SQUARE_H1, rel=1e-9)


def test_truncation_inequality(bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    dxi = np.pi
    s = fourier_sample(b1, b2, frequency_grid(2, 1.0, 12.0), tau=32.0)
    sup = np.abs(s.values).max()
    for r in (3.0, 6.0, 12.0):
        inside = np.linalg.norm(s.xi, axis=1) < r
        energy = np.sum(np.abs(s.values[inside]) ** 2) * dxi ** 2
        assert energy <= sup ** 2 * np.pi * r ** 2


def test_csv_round_trip(tmp_path, bump_pair_31):
    b1, b2 = bump_pair_31["bsd1"], bump_pair_31["bsd2"]
    s = fourier_sample(b1, b2, frequency_grid(2, 1.0, 6.0), tau=16.0, Lam=0.3, dxi=np.pi, r_max=6.0)
    path = tmp_path / "samples.csv"
    s.write_csv(path)
    back = FourierSamples.read_csv(path)
    assert back.values.tobytes() == s.values.tobytes()
    assert back.xi.tobytes() == s.xi.tobytes()
    assert back.grid == s.grid and back.Lam == 0.3 and back.method == "series"


def test_reconstruct_scores_against_truth(bump_pair_31):
    d = bump_pair_31
    r_max = 12.0
    s = fourier_sample(d["bsd1"], d["bsd2"], frequency_grid(2, 1.0, r_max), tau=40.0, r_max=r_max)
    truth = d["q1"].values - d["q2"].values
    res = reconstruct(s, Lam=estimate_lambda(d["bsd1"], d["bsd2"]), truth=truth, r=r_max)
    assert res.r == r_max and res.imag_residue <= 1e-6
    assert 0 <= res.h1_error < h_minus1_norm(truth, d["grid"])
    assert res.to_dict()["grid"] == d["grid"].spec.to_dict()
