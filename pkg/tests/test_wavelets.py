import csv
import dataclasses

import numpy as np
import pytest

from cnumbers.wavelets import (
    build_basis,
    coefficients_of_g,
    cube_class,
    daubechies_filter,
    g_component,
    g_norm_squared,
    reconstruct_g,
    relevant_offsets,
)

LEVELS = range(-4, 11)


@pytest.fixture(scope="module")
def basis():
    return build_basis(3, 12, 1)


@pytest.fixture(scope="module")
def table(basis):
    return coefficients_of_g(basis, 0, LEVELS)


def _mirrored(b):
    """The basis built from u -> psi(5 - u)."""
    return dataclasses.replace(b, phi=b.phi[::-1].copy(), psi=b.psi[::-1].copy(),
                               phi_mid=b.phi_mid[::-1].copy(), psi_mid=b.psi_mid[::-1].copy())


def test_filter():
    h = daubechies_filter(3)
    assert len(h) == 6
    assert h.sum() == pytest.approx(np.sqrt(2), abs=1e-10)
    assert (h ** 2).sum() == pytest.approx(1.0, abs=1e-10)
    for m in (1, 2):
        assert abs(h[:-2 * m] @ h[2 * m:]) <= 1e-10
    # three vanishing moments of the high-pass filter
    g = np.array([(-1) ** k * h[5 - k] for k in range(6)])
    for m in range(3):
        assert abs(g @ np.arange(6.0) ** m) <= 1e-9


def test_wavelet_moments_and_norm(basis):
    u, dx, psi = basis.midpoints, basis.dx, basis.psi_mid
    assert abs(psi.sum() * dx) <= 1e-8
    assert (psi ** 2).sum() * dx == pytest.approx(1.0, abs=1e-6)
    assert (basis.phi_mid ** 2).sum() * dx == pytest.approx(1.0, abs=1e-6)
    for m in (1, 2):
        assert abs((u ** m * psi).sum() * dx) <= 1e-6
    # the third moment does not vanish: exactly three moments
    assert abs((u ** 3 * psi).sum() * dx) > 1e-2
    deep = build_basis(3, 14, 1)
    assert abs((deep.midpoints ** 2 * deep.psi_mid).sum() * deep.dx) <= 1e-5


def test_support_and_orthogonality(basis):
    assert basis.grid[-1] == pytest.approx(5.0)
    assert basis.psi[0] == 0 and basis.psi[-1] == 0
    assert np.all(basis.factor(1, [-0.5, 5.5]) == 0)
    u, dx = basis.midpoints, basis.dx
    shifted = np.interp(u - 1, u, basis.psi_mid, left=0, right=0)
    assert abs(basis.psi_mid @ shifted * dx) <= 1e-6
    assert abs(basis.psi_mid @ basis.phi_mid * dx) <= 1e-6


def test_build_errors():
    with pytest.raises(ValueError):
        build_basis(3, 12, 3)
    with pytest.raises(ValueError):
        build_basis(3, 7, 1)
    with pytest.raises(ValueError):
        build_basis(2, 12, 1)
    with pytest.raises(ValueError):
        coefficients_of_g(build_basis(3, 8, 1), 1, [0])


def test_cube_classes():
    assert cube_class(0, (0,)) == "boundary"          # 5I = [-2, 3]
    assert cube_class(4, (0,)) == "interior"          # 5I = [-1/8, 3/16]
    assert cube_class(4, (20,)) == "exterior"
    assert cube_class(4, (-18,)) == "boundary"
    offs = relevant_offsets(3, 1)
    assert all(cube_class(3, k) != "exterior" for k in offs)
    # 5I = [(k-2)/8, (k+3)/8] touches the closed ball for k = -11 .. 10
    assert [k[0] for k in offs] == list(range(-11, 11))


def test_interior_and_exterior_coefficients_vanish(table):
    inner = [abs(a) for _, a in table.items(cls="interior")]
    assert inner and max(inner) <= 1e-6
    assert not list(table.items(cls="exterior"))
    assert table.levels == list(LEVELS)


def test_decay_exponents(table):
    assert table.decay_exponent(range(3, 11), "max") == pytest.approx(0.5, abs=0.1)
    assert table.decay_exponent(range(-4, -2), "l2") == pytest.approx(-1.5, abs=0.15)


def test_parseval(table):
    total = g_norm_squared(1)
    assert total == pytest.approx(2 / 3)
    s = table.sum_of_squares()
    assert s <= total
    assert s >= 0.98 * total
    narrow = coefficients_of_g(build_basis(3, 12, 1), 0, range(-1, 5)).sum_of_squares()
    assert narrow < s


def test_reconstruction(basis, table):
    far = np.array([[2.0 ** 4 * 6], [-2.0 ** 4 * 6], [200.0]])
    assert np.all(np.abs(reconstruct_g(table, basis, far)) <= 1e-6)
    y = np.linspace(-0.5, 0.5, 101)[:, None]
    assert np.max(np.abs(reconstruct_g(table, basis, y) - y[:, 0])) <= 1e-2

    # L2 error on [-1.5, 1.5] by a midpoint Riemann sum oracle
    grid = (np.arange(3000) + 0.5) / 1000 - 1.5

    def err(hi):
        sub = coefficients_of_g(basis, 0, range(-4, hi + 1))
        diff = reconstruct_g(sub, basis, grid[:, None]) - g_component(grid[:, None], 0)
        return np.sqrt(np.sum(diff ** 2) * 1e-3)

    e4, e6 = err(4), err(6)
    assert e6 <= 0.5 * e4


def test_symmetry_under_reflection(basis, table):
    # reflection through the origin maps I = 2^-j [k, k+1) to offset -k-1;
    # for the (asymmetric) wavelet it pairs with the mirrored element
    mirror = coefficients_of_g(_mirrored(basis), 0, LEVELS)
    for (level, k, t), a in table.items():
        b = mirror.entries[(level, (-k[0] - 1,), t)]
        assert abs(abs(a) - abs(b)) <= 1e-6


def test_two_dimensional_tables(tmp_path):
    b2 = build_basis(3, 8, 2)
    assert b2.types == [(0, 1), (1, 0), (1, 1)]
    el = b2.element(0, (0, 0), (1, 1), np.array([[0.5, 0.5], [9.0, 0.0]]))
    assert el[1] == 0.0
    t0 = coefficients_of_g(b2, 0, [0, 1])
    t1 = coefficients_of_g(b2, 1, [0, 1])
    assert len(t0) == 3 * sum(len(relevant_offsets(j, 2)) for j in (0, 1))
    # swapping the coordinates swaps the mixed types
    for (level, k, t), a in t0.items():
        b = t1.entries[(level, (k[1], k[0]), (t[1], t[0]))]
        assert a == pytest.approx(b, abs=1e-12)
    assert g_norm_squared(2) == pytest.approx(np.pi / 4)
    t0.write_csv(tmp_path / "a2.csv")
    rows = list(csv.reader(open(tmp_path / "a2.csv")))
    assert rows[0] == ["level", "offset_0", "offset_1", "type", "a"]
    assert len(rows) == len(t0) + 1


def test_csv_export(table, tmp_path):
    table.write_csv(tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["level", "offset", "a"]
    assert len(rows) == len(table) + 1
    level, k, a = rows[1]
    assert float(a) == table.entries[(int(level), (int(k),), (1,))]
