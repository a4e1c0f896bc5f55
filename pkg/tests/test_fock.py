import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings
from hypothesis import strategies as st

from qdtomo import (
    CountTable,
    PhotonBasisCut,
    ProbeGrid,
    TruncationWarning,
    apd_povm,
    build_probe_matrix,
    mixed_probe_row,
    poisson_weights,
    predict_response,
    tmd_povm,
)
from qdtomo.models import DiagonalPOVM

# E_kk oracle values from adaptive mpmath quadrature of the printed 1-D integral (50 digits)
MIXED_ORACLE = {
    (2.0, 0.3): [0.22650192966051469362, 0.21942374435862361338, 0.18060432184356469842,
                 0.13319407449188439326, 0.091306180093156168708, 0.059362988741147838606,
                 0.037056568505348495661],
    (0.25, 2.5e-05): [0.77879104812246814514, 0.19469776251731277057, 0.024346954290211124322,
                      0.0020305356683750582928, 0.00012706072411336854398, 6.3631970181789109144e-6,
                      2.6566321144470535232e-7],
    (9.0, 0.05): [0.00026667675945608753835, 0.0019956678155990682944, 0.0076481345478859825782,
                  0.019996997938000941611, 0.040099097438839255594, 0.065732998037526937116,
                  0.091696161940266980384],
}


def _trapezoid_row(alpha_sq, sigma_sq, M, n=400001):
    a, s = np.sqrt(alpha_sq), np.sqrt(sigma_sq)
    beta = np.linspace(min(-6.0, a - 14 * s), a + 14 * s + 6.0, n)
    logk = np.cumsum(np.log(np.maximum(np.arange(M + 1), 1)))
    with np.errstate(divide="ignore"):
        lb = np.log(np.abs(beta))
    w = np.exp(-beta**2 - (beta - a) ** 2 / (2 * sigma_sq))
    rows = [trapezoid(np.exp(2 * k * lb - logk[k]) * w, beta) if k else trapezoid(w, beta) for k in range(M + 1)]
    return np.array(rows) / (s * np.sqrt(2 * np.pi))


def test_basis_cut():
    assert PhotonBasisCut(0).size == 1
    with pytest.raises(ValueError):
        PhotonBasisCut(-1)


def test_poisson_vacuum_and_single():
    w = poisson_weights(0.0, 5)
    assert w[0] == 1.0 and np.all(w[1:] == 0)
    assert poisson_weights(1.0, 3)[1] == pytest.approx(0.36787944117144233, rel=1e-15)


def test_poisson_bright_probe_is_finite():
    w = poisson_weights(100.0, 30)
    assert np.all(np.isfinite(w)) and w.min() >= 0
    # sum_{k<=30} 100^k e^-100 / k!, evaluated with 50-digit mpmath
    assert w.sum() == pytest.approx(1.9917900106515279559e-16, rel=1e-10)
    assert w.sum() < 1e-15
    assert np.all(np.isfinite(poisson_weights(1e4, 60)))


@pytest.mark.parametrize("bad", [-1.0, np.nan, np.inf])
def test_poisson_rejects(bad):
    with pytest.raises(ValueError):
        poisson_weights(bad, 3)


@given(st.floats(0, 200), st.integers(0, 80))
@settings(max_examples=60, deadline=None)
def test_poisson_mass_monotone_in_cut(a, M):
    lo, hi = poisson_weights(a, M).sum(), poisson_weights(a, M + 5).sum()
    assert lo <= hi + 1e-15 and hi <= 1 + 1e-12


def test_build_probe_matrix_examples():
    F = build_probe_matrix(ProbeGrid.from_arrays([0.0]), 3)
    assert F.entries.tolist() == [[1.0, 0.0, 0.0, 0.0]] and F.kind == "pure"
    F = build_probe_matrix(ProbeGrid.from_arrays([0.0, 1.0]), 2)
    e = np.exp(-1)
    np.testing.assert_allclose(F.entries, [[1, 0, 0], [e, e, e / 2]], rtol=1e-15)


def test_build_probe_matrix_pure_rows_are_bitwise_poisson():
    a = np.geomspace(0.01, 50, 17)
    F = build_probe_matrix(ProbeGrid.from_arrays(a), 40)
    for i, ai in enumerate(a):
        assert np.array_equal(F.entries[i], poisson_weights(ai, 40))
    assert np.all(F.row_mass <= 1 + 1e-15)


def test_build_probe_matrix_mixed_kind():
    grid = ProbeGrid.from_arrays([1.0, 2.0], [0.0, 0.1])
    F = build_probe_matrix(grid, 5)
    assert F.kind == "mixed"
    assert np.array_equal(F.entries[0], poisson_weights(1.0, 5))
    with pytest.raises(ValueError):
        ProbeGrid((), ())


@pytest.mark.parametrize("key", sorted(MIXED_ORACLE))
def test_mixed_row_matches_high_precision_oracle(key):
    row = mixed_probe_row(key[0], key[1], 6)
    np.testing.assert_allclose(row, MIXED_ORACLE[key], rtol=1e-9, atol=0)


@pytest.mark.parametrize("a2,s2", [(2.0, 0.3), (0.7, 0.01), (5.0, 0.4)])
def test_mixed_row_matches_trapezoid_oracle(a2, s2):
    np.testing.assert_allclose(mixed_probe_row(a2, s2, 12), _trapezoid_row(a2, s2, 12), rtol=1e-8)


def test_mixed_row_origin_closed_form():
    for s2 in (1e-4, 0.1, 0.5, 3.0):
        assert mixed_probe_row(0.0, s2, 4)[0] == pytest.approx(1 / np.sqrt(1 + 2 * s2), rel=1e-12)


def test_mixed_row_noise_law_single_photon_level():
    a2 = 0.25
    mixed, pure = mixed_probe_row(a2, 0.0004 * a2**2, 60), poisson_weights(a2, 60)
    assert np.linalg.norm(mixed - pure) / np.linalg.norm(pure) < 0.01


def test_mixed_row_sigma_to_zero_limit_and_cauchy():
    pure = poisson_weights(3.0, 20)
    rows = [mixed_probe_row(3.0, 0.1 / 2**j, 20) for j in range(12)]
    assert np.abs(rows[-1] - pure).max() < 1e-4
    moves = [np.abs(rows[j + 1] - rows[j]).max() for j in range(len(rows) - 1)]
    assert all(b < a for a, b in zip(moves, moves[1:]))


def test_mixed_row_rejects():
    with pytest.raises(ValueError):
        mixed_probe_row(1.0, 0.0, 3)
    with pytest.raises(ValueError):
        mixed_probe_row(-1.0, 0.1, 3)


def test_predict_vacuum_and_apd_click():
    povm = tmd_povm(basis=20)
    F = build_probe_matrix(ProbeGrid.from_arrays([0.0]), 20)
    np.testing.assert_array_equal(predict_response(povm, F).frequencies[0], povm.theta[0])
    apd = apd_povm(basis=60)
    table = predict_response(apd, build_probe_matrix(ProbeGrid.from_arrays([1.0]), 60))
    assert table.frequencies[0, 1] == pytest.approx(1 - np.exp(-0.568), rel=1e-12)
    assert table.frequencies[0, 1] == pytest.approx(0.4334, abs=1e-4)


def test_predict_identity_gives_truncated_mass():
    grid = ProbeGrid.from_arrays([0.5, 10.0, 40.0])
    F = build_probe_matrix(grid, 30)
    ident = DiagonalPOVM(np.ones((31, 1)))
    with pytest.warns(TruncationWarning):
        table = predict_response(ident, F)
    np.testing.assert_allclose(table.frequencies[:, 0], F.row_mass, rtol=1e-14)
    assert table.predicted and table.meta["truncation_warning"]


def test_predict_is_linear():
    F = build_probe_matrix(ProbeGrid.from_arrays(np.geomspace(0.1, 10, 9)), 25)
    a, b = tmd_povm(basis=25), tmd_povm(loss=0.3, basis=25)
    mix = DiagonalPOVM(0.3 * a.theta + 0.7 * b.theta)
    lhs = predict_response(mix, F).frequencies
    rhs = 0.3 * predict_response(a, F).frequencies + 0.7 * predict_response(b, F).frequencies
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_predict_dimension_mismatch():
    with pytest.raises(ValueError):
        predict_response(apd_povm(basis=10), build_probe_matrix(ProbeGrid.from_arrays([1.0]), 12))


def test_count_table_invariants():
    grid = ProbeGrid.from_arrays([1.0, 2.0], None, 10)
    ok = CountTable(grid, [[0.3, 0.7], [0.1, 0.9]], raw_counts=[[3, 7], [1, 9]])
    assert ok.outcomes == 2
    with pytest.raises(ValueError):
        CountTable(grid, [[0.3, 0.6], [0.1, 0.9]])
    with pytest.raises(ValueError):
        CountTable(grid, [[0.3, 0.7], [0.1, 0.9]], raw_counts=[[3, 6], [1, 9]])
    with pytest.raises(ValueError):
        ProbeGrid.from_arrays([1.0], None, 0)
