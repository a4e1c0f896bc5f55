"""Theoretical POVMs for an avalanche photodiode and a time-multiplexed detector.

Both models are phase insensitive, so their POVM elements are diagonal in the
photon-number basis and a :class:`DiagonalPOVM` stores only the diagonals
``theta[k, n] = <k| pi_n |k>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.stats import binom

from .fock import PhotonBasisCut, as_basis
from .kernels import subset_power_sums

__all__ = [
    "DiagonalPOVM",
    "loss_matrix",
    "bin_probabilities",
    "click_distribution",
    "click_table",
    "apd_povm",
    "tmd_povm",
    "TMD_REFLECTIVITIES",
    "TMD_LOSS",
    "APD_LOSS",
]

APD_LOSS = 0.432
TMD_LOSS = 0.522
TMD_REFLECTIVITIES = (0.5018, 0.5060, 0.4192)

COMPLETENESS_TOL = 1e-9
_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class DiagonalPOVM:
    """Diagonal POVM: ``theta`` has shape ``(M+1, N)``, one column per outcome."""

    theta: np.ndarray
    basis: PhotonBasisCut = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[1] < 1:
            raise ValueError(f"theta must be a 2-D (M+1, N) array, got shape {theta.shape}")
        basis = as_basis(theta.shape[0] - 1) if self.basis is None else as_basis(self.basis)
        if theta.shape[0] != basis.size:
            raise ValueError(f"theta has {theta.shape[0]} rows, basis cut needs {basis.size}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        if theta.min() < -_RANGE_TOL or theta.max() > 1 + _RANGE_TOL:
            raise ValueError(f"theta must lie in [0, 1], got range [{theta.min()}, {theta.max()}]")
        violation = np.abs(theta.sum(axis=1) - 1).max()
        if violation > COMPLETENESS_TOL:
            raise ValueError(f"POVM is not complete: max |sum_n theta_k - 1| = {violation:.3g}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "basis", basis)

    @property
    def M(self) -> int:
        return self.basis.M

    @property
    def outcomes(self) -> int:
        return self.theta.shape[1]

    def element(self, n: int) -> np.ndarray:
        return self.theta[:, n]


def loss_matrix(efficiency: float, basis) -> np.ndarray:
    """Binomial loss channel ``L[r, q] = C(q, r) eta^r (1 - eta)^(q - r)``.

    Maps a photon-number distribution over ``q`` to the distribution of
    surviving photons ``r``; every column sums to one.
    """
    basis = as_basis(basis)
    eta = float(efficiency)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {eta!r}")
    n = np.arange(basis.size)
    return binom.pmf(n[:, None], n[None, :], eta)


def bin_probabilities(reflectivities) -> np.ndarray:
    """Bin occupation probabilities of a symmetric beam-splitter cascade.

    Stage ``s`` sends a photon to the reflected branch with probability
    ``r_s``.  Bin index bits read most-significant-first, 0 for reflect, so
    bin 0 is the reflect-at-every-stage path.
    """
    ratios = np.asarray(reflectivities, dtype=np.float64).ravel()
    if ratios.size == 0:
        raise ValueError("need at least one splitting stage")
    if np.any((ratios <= 0) | (ratios >= 1)):
        raise ValueError(f"splitting ratios must lie strictly in (0, 1), got {ratios}")
    bins = np.ones(1)
    for r in ratios:
        bins = np.kron(bins, [r, 1.0 - r])
    return bins


def _click_weights(n_bins):
    # P(n | q) = sum_m (-1)^(n-m) C(B-m, n-m) e_m(q), e_m = sum_{|T|=m} mass(T)^q
    a = np.zeros((n_bins + 1, n_bins + 1))
    for n in range(n_bins + 1):
        for m in range(n + 1):
            a[n, m] = (-1) ** (n - m) * comb(n_bins - m, n - m)
    return a


def click_table(bins, qmax: int) -> np.ndarray:
    """``P(n clicks | q photons)`` for ``q = 0..qmax``; shape ``(qmax+1, B+1)``.

    Exact inclusion-exclusion over bin subsets, assuming each bin is watched
    by a perfect threshold detector.
    """
    bins = np.asarray(bins, dtype=np.float64).ravel()
    if bins.size == 0 or np.any(bins < 0):
        raise ValueError("bin probabilities must be nonnegative")
    if abs(bins.sum() - 1.0) > 1e-9:
        raise ValueError(f"bin probabilities must sum to 1, got {bins.sum()!r}")
    if qmax < 0 or int(qmax) != qmax:
        raise ValueError(f"photon number must be a nonnegative integer, got {qmax!r}")
    sums = subset_power_sums(bins, int(qmax))
    table = sums @ _click_weights(bins.size).T
    # alternating sums leave ~1e-13 rounding; anything worse is a real bug
    if table.min() < -1e-10:
        raise ArithmeticError(f"inclusion-exclusion lost precision (min {table.min():.3g})")
    np.clip(table, 0.0, 1.0, out=table)
    # q photons occupy at most q bins
    q, n = np.indices(table.shape)
    table[n > q] = 0.0
    return table


def click_distribution(bins, photons: int) -> np.ndarray:
    """Distribution of the number of occupied bins for ``photons`` photons."""
    if int(photons) != photons or photons < 0:
        raise ValueError(f"photon number must be a nonnegative integer, got {photons!r}")
    return click_table(bins, int(photons))[int(photons)]


def apd_povm(loss: float = APD_LOSS, basis=60) -> DiagonalPOVM:
    """Binary detector with no dark counts behind a loss channel."""
    basis = as_basis(basis)
    loss = float(loss)
    if not 0.0 <= loss <= 1.0:
        raise ValueError(f"loss must lie in [0, 1], got {loss!r}")
    no_click = loss ** np.arange(basis.size, dtype=np.float64)
    theta = np.column_stack([no_click, 1.0 - no_click])
    return DiagonalPOVM(theta, basis, meta={"model": "apd", "loss": loss})


def tmd_povm(reflectivities=TMD_REFLECTIVITIES, loss: float = TMD_LOSS, basis=60) -> DiagonalPOVM:
    """Time-multiplexed detector: lumped loss, splitting cascade, threshold bins.

    Binomial loss commutes with passive splitting, so the whole loss is
    applied first and the surviving photons are binned.
    """
    basis = as_basis(basis)
    loss = float(loss)
    if not 0.0 <= loss <= 1.0:
        raise ValueError(f"loss must lie in [0, 1], got {loss!r}")
    bins = bin_probabilities(reflectivities)
    clicks = click_table(bins, basis.M)
    survive = loss_matrix(1.0 - loss, basis)
    theta = survive.T @ clicks
    return DiagonalPOVM(
        theta,
        basis,
        meta={
            "model": "tmd",
            "loss": loss,
            "reflectivities": [float(r) for r in np.ravel(reflectivities)],
        },
    )
