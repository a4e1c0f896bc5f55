import itertools

import numpy as np
import pytest

from qdtomo import apd_povm, bin_probabilities, click_distribution, click_table, loss_matrix, tmd_povm
from qdtomo.models import TMD_REFLECTIVITIES, DiagonalPOVM


def _enumerate(bins, q):
    out = np.zeros(len(bins) + 1)
    for cells in itertools.product(range(len(bins)), repeat=q):
        out[len(set(cells))] += np.prod([bins[c] for c in cells])
    return out


def test_loss_matrix_limits():
    np.testing.assert_array_equal(loss_matrix(1.0, 6), np.eye(7))
    L0 = loss_matrix(0.0, 6)
    assert np.all(L0[0] == 1) and np.all(L0[1:] == 0)


def test_loss_matrix_columns_and_triangle():
    L = loss_matrix(0.37, 25)
    np.testing.assert_allclose(L.sum(axis=0), 1, atol=1e-13)
    assert np.all(np.triu(L, 1).T == 0) or np.all(np.tril(L, -1) == 0)
    assert L[5, 3] == 0.0


def test_loss_semigroup():
    np.testing.assert_allclose(loss_matrix(0.8, 20) @ loss_matrix(0.7, 20), loss_matrix(0.56, 20), atol=1e-12)


@pytest.mark.parametrize("eta", [-0.1, 1.1])
def test_loss_matrix_rejects(eta):
    with pytest.raises(ValueError):
        loss_matrix(eta, 3)


def test_bins():
    np.testing.assert_allclose(bin_probabilities([0.5, 0.5, 0.5]), np.full(8, 1 / 8), rtol=0)
    b = bin_probabilities(TMD_REFLECTIVITIES)
    assert b[0] == pytest.approx(0.5018 * 0.5060 * 0.4192, rel=1e-15)
    assert b[0] == pytest.approx(0.10645, abs=5e-5)
    assert abs(b.sum() - 1) < 1e-12 and b.size == 8
    for bad in ([0.0, 0.5, 0.5], [0.5, 1.0, 0.5]):
        with pytest.raises(ValueError):
            bin_probabilities(bad)


def test_click_examples():
    b = bin_probabilities(TMD_REFLECTIVITIES)
    assert click_distribution(b, 0).tolist() == [1.0] + [0.0] * 8
    assert click_distribution(b, 1)[1] == pytest.approx(1.0, abs=1e-14)
    u = np.full(8, 1 / 8)
    d = click_distribution(u, 2)
    assert d[1] == pytest.approx(1 / 8, abs=1e-14) and d[2] == pytest.approx(7 / 8, abs=1e-14)


def test_click_matches_enumeration():
    rng = np.random.default_rng(3)
    for B in range(1, 5):
        for _ in range(3):
            bins = rng.dirichlet(np.ones(B))
            for q in range(7):
                np.testing.assert_allclose(click_distribution(bins, q), _enumerate(bins, q), atol=1e-12)


def test_click_errors():
    with pytest.raises(ValueError):
        click_distribution([0.5, 0.4], 2)
    with pytest.raises(ValueError):
        click_distribution([0.5, 0.5], -1)


def test_click_table_rows_are_distributions():
    t = click_table(bin_probabilities(TMD_REFLECTIVITIES), 200)
    np.testing.assert_allclose(t.sum(axis=1), 1, atol=1e-12)
    assert t.min() >= 0


def test_apd_examples():
    p = apd_povm(0.432, 60)
    assert p.theta[0].tolist() == [1.0, 0.0]
    assert p.theta[2, 0] == pytest.approx(0.186624, rel=1e-14)
    never = apd_povm(1.0, 10)
    np.testing.assert_array_equal(never.theta[:, 0], 1.0)
    with pytest.raises(ValueError):
        apd_povm(1.5)


def test_tmd_examples():
    p = tmd_povm(basis=60)
    assert p.outcomes == 9
    assert p.theta[0, 0] == 1.0
    assert p.theta[1, 1] == pytest.approx(0.478, abs=1e-14)
    for n in range(9):
        assert np.all(p.theta[:n, n] == 0)
    np.testing.assert_allclose(p.theta.sum(axis=1), 1, atol=1e-9)
    assert p.meta["model"] == "tmd"


def test_monotone_in_efficiency():
    etas = np.linspace(0.05, 0.95, 10)
    apd1 = [apd_povm(1 - e, 5).theta[1, 1] for e in etas]
    tmd1 = [tmd_povm(loss=1 - e, basis=5).theta[1, 1:] for e in etas]
    assert np.all(np.diff(apd1) >= 0)
    assert np.all(np.diff(np.array(tmd1), axis=0) >= 0)


def test_diagonal_povm_validation():
    with pytest.raises(ValueError):
        DiagonalPOVM([[0.5, 0.4]])
    with pytest.raises(ValueError):
        DiagonalPOVM([[1.2, -0.2]])
    with pytest.raises(ValueError):
        DiagonalPOVM([[1.0]], basis=3)
    p = DiagonalPOVM([[1.0, 0.0], [0.5, 0.5]])
    assert p.M == 1 and p.element(1).tolist() == [0.0, 0.5]
    with pytest.raises(ValueError):
        p.theta[0, 0] = 0.3
