"""Fock-basis kernel: probe grids, Poisson weights and the probe design matrix.

The design matrix maps photon-number content to probe responses.  Row ``i``
holds the photon-number distribution of probe ``i`` truncated at ``M``:
Poissonian for a coherent state, or the diagonal of a Gaussian mixture of
coherent states when the probe carries amplitude noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import gammaln

__all__ = [
    "PhotonBasisCut",
    "ProbeAmplitude",
    "ProbeGrid",
    "ProbeMatrix",
    "CountTable",
    "TruncationWarning",
    "QuadratureError",
    "as_basis",
    "poisson_weights",
    "mixed_probe_row",
    "build_probe_matrix",
    "predict_response",
    "TRUNCATION_THRESHOLD",
]

# Probes whose truncated Poisson mass falls below this are flagged.
TRUNCATION_THRESHOLD = 0.999
ROW_SUM_TOL = 1e-12


class TruncationWarning(UserWarning):
    """A probe has noticeable photon-number mass above the basis cut."""


class QuadratureError(RuntimeError):
    """The mixed-probe quadrature failed its self-consistency check."""


@dataclass(frozen=True)
class PhotonBasisCut:
    """Truncated photon-number basis ``|0>, ..., |M>``."""

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 0:
            raise ValueError(f"basis cut M must be a nonnegative integer, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def size(self) -> int:
        return self.M + 1


def as_basis(basis) -> PhotonBasisCut:
    if isinstance(basis, PhotonBasisCut):
        return basis
    return PhotonBasisCut(int(basis))


@dataclass(frozen=True)
class ProbeAmplitude:
    """A coherent probe of mean photon number ``|alpha|^2``.

    ``noise_sigma_sq`` is the variance of the amplitude in phase space; zero
    means a pure coherent state.
    """

    mean_photon_number: float
    noise_sigma_sq: float = 0.0

    def __post_init__(self):
        for name in ("mean_photon_number", "noise_sigma_sq"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class ProbeGrid:
    """Ordered probes with per-probe trial counts ``J_i``.

    ``trials`` entries may be ``None`` for the noiseless (infinite-trial) mode.
    """

    probes: tuple
    trials: tuple

    def __post_init__(self):
        probes = tuple(
            p if isinstance(p, ProbeAmplitude) else ProbeAmplitude(*np.atleast_1d(p))
            for p in self.probes
        )
        if not probes:
            raise ValueError("probe grid must not be empty")
        trials = tuple(self.trials)
        if len(trials) != len(probes):
            raise ValueError("need one trial count per probe")
        clean = []
        for j in trials:
            if j is None:
                clean.append(None)
                continue
            if int(j) != j or j <= 0:
                raise ValueError(f"trial counts must be positive integers, got {j!r}")
            clean.append(int(j))
        object.__setattr__(self, "probes", probes)
        object.__setattr__(self, "trials", tuple(clean))

    @classmethod
    def from_arrays(cls, alpha_sq, sigma_sq=None, trials=None) -> "ProbeGrid":
        alpha_sq = np.atleast_1d(np.asarray(alpha_sq, dtype=np.float64))
        if sigma_sq is None:
            sigma_sq = np.zeros_like(alpha_sq)
        sigma_sq = np.broadcast_to(np.asarray(sigma_sq, dtype=np.float64), alpha_sq.shape)
        if trials is None or np.isscalar(trials):
            trials = [trials] * len(alpha_sq)
        probes = tuple(ProbeAmplitude(a, s) for a, s in zip(alpha_sq, sigma_sq))
        return cls(probes, tuple(trials))

    def __len__(self):
        return len(self.probes)

    @property
    def alpha_sq(self) -> np.ndarray:
        return np.array([p.mean_photon_number for p in self.probes])

    @property
    def sigma_sq(self) -> np.ndarray:
        return np.array([p.noise_sigma_sq for p in self.probes])

    @property
    def exact(self) -> bool:
        return all(j is None for j in self.trials)

    def n_distinct(self) -> int:
        return len(np.unique(self.alpha_sq))

    def with_trials(self, trials) -> "ProbeGrid":
        if trials is None or np.isscalar(trials):
            trials = [trials] * len(self)
        return ProbeGrid(self.probes, tuple(trials))

    def with_sigma_law(self, c: float) -> "ProbeGrid":
        """Same magnitudes with amplitude noise ``sigma^2 = c |alpha|^4``."""
        a = self.alpha_sq
        return ProbeGrid.from_arrays(a, c * a**2, list(self.trials))


@dataclass(frozen=True)
class ProbeMatrix:
    """The ``D x (M+1)`` design matrix."""

    entries: np.ndarray
    basis: PhotonBasisCut
    kind: str = "pure"
    grid: Optional[ProbeGrid] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("pure", "mixed"):
            raise ValueError(f"kind must be 'pure' or 'mixed', got {self.kind!r}")
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[1] != self.basis.size:
            raise ValueError(f"expected shape (D, {self.basis.size}), got {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def row_mass(self) -> np.ndarray:
        return self.entries.sum(axis=1)


@dataclass(frozen=True)
class CountTable:
    """Outcome frequencies, one row per probe.

    Measured and simulated tables have rows summing to one.  Tables made by
    :func:`predict_response` are marked ``predicted`` and their rows sum to
    the truncated photon-number mass of the probe instead.
    """

    grid: ProbeGrid
    frequencies: np.ndarray
    raw_counts: Optional[np.ndarray] = None
    predicted: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        freq = np.array(self.frequencies, dtype=np.float64)
        if freq.ndim != 2 or freq.shape[0] != len(self.grid):
            raise ValueError(f"frequencies must be (D={len(self.grid)}, N), got {freq.shape}")
        if not np.all(np.isfinite(freq)):
            raise ValueError("frequencies must be finite")
        if freq.min() < -ROW_SUM_TOL or freq.max() > 1 + ROW_SUM_TOL:
            raise ValueError("frequencies must lie in [0, 1]")
        sums = freq.sum(axis=1)
        if self.predicted:
            if sums.max() > 1 + 1e-9:
                raise ValueError("predicted row sums exceed 1")
        elif np.abs(sums - 1).max() > ROW_SUM_TOL:
            bad = int(np.argmax(np.abs(sums - 1)))
            raise ValueError(f"row {bad} of frequencies sums to {sums[bad]!r}, not 1")
        freq.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)
        if self.raw_counts is not None:
            counts = np.array(self.raw_counts, dtype=np.int64)
            if counts.shape != freq.shape or counts.min() < 0:
                raise ValueError("raw_counts must be nonnegative with the shape of frequencies")
            for i, j in enumerate(self.grid.trials):
                if j is None or counts[i].sum() != j:
                    raise ValueError(f"raw counts of row {i} do not sum to its trial count")
            counts.setflags(write=False)
            object.__setattr__(self, "raw_counts", counts)

    @property
    def shape(self):
        return self.frequencies.shape

    @property
    def outcomes(self) -> int:
        return self.frequencies.shape[1]


@lru_cache(maxsize=64)
def _log_factorials(M: int) -> np.ndarray:
    table = gammaln(np.arange(M + 1) + 1.0)
    table.setflags(write=False)
    return table


def poisson_weights(alpha_sq: float, basis) -> np.ndarray:
    """Truncated Poisson distribution ``alpha_sq**k exp(-alpha_sq) / k!``.

    Evaluated in log space so bright probes and large cuts do not overflow.
    """
    basis = as_basis(basis)
    alpha_sq = float(alpha_sq)
    if not np.isfinite(alpha_sq):
        raise ValueError(f"alpha_sq must be finite, got {alpha_sq!r}")
    if alpha_sq < 0:
        raise ValueError(f"alpha_sq must be >= 0, got {alpha_sq!r}")
    k = np.arange(basis.size)
    if alpha_sq == 0.0:
        out = np.zeros(basis.size)
        out[0] = 1.0
        return out
    return np.exp(k * np.log(alpha_sq) - alpha_sq - _log_factorials(basis.M))


def _hermite_moments(mu, var, basis, order):
    """``E[X**(2k)] / k!`` for ``X ~ N(mu, var)``, k = 0..M, in log space."""
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    x = mu + np.sqrt(2.0 * var) * nodes
    k = np.arange(basis.size)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(np.abs(x))[None, :]
        log_terms = np.where(k == 0, 0.0, 2.0 * k * logx) + np.log(weights)[None, :]
    peak = log_terms.max(axis=1, keepdims=True)
    log_sum = peak[:, 0] + np.log(np.exp(log_terms - peak).sum(axis=1))
    return log_sum - 0.5 * np.log(np.pi) - _log_factorials(basis.M)


def mixed_probe_row(alpha_sq: float, sigma_sq: float, basis, rtol: float = 1e-9) -> np.ndarray:
    """Diagonal photon-number weights of a Gaussian mixture of coherent states.

    Computes ``E_k = (sigma sqrt(2 pi) k!)^-1 int beta^(2k) exp(-beta^2 -
    (beta - alpha)^2 / (2 sigma^2)) d beta`` over real ``beta`` with
    ``alpha = sqrt(alpha_sq)``.  The two Gaussian factors merge into a single
    normal density, which leaves a polynomial moment that a Gauss-Hermite
    rule of ``M + 2`` nodes integrates exactly; a rule with more nodes is
    evaluated as a convergence check.
    """
    basis = as_basis(basis)
    alpha_sq, sigma_sq = float(alpha_sq), float(sigma_sq)
    if not (np.isfinite(alpha_sq) and np.isfinite(sigma_sq)):
        raise ValueError("alpha_sq and sigma_sq must be finite")
    if alpha_sq < 0:
        raise ValueError(f"alpha_sq must be >= 0, got {alpha_sq!r}")
    if sigma_sq <= 0:
        raise ValueError(f"sigma_sq must be > 0, got {sigma_sq!r}")
    denom = 1.0 + 2.0 * sigma_sq
    mu = np.sqrt(alpha_sq) / denom
    var = sigma_sq / denom
    prefactor = -alpha_sq / denom - 0.5 * np.log(denom)
    log_e = _hermite_moments(mu, var, basis, basis.M + 2)
    check = _hermite_moments(mu, var, basis, basis.M + 12)
    err = np.abs(np.expm1(check - log_e))
    if not np.all(np.isfinite(log_e)) or err.max() > rtol:
        raise QuadratureError(
            f"mixed-probe quadrature did not converge (relative error {err.max():.3g})"
        )
    return np.exp(prefactor + log_e)


def build_probe_matrix(grid: ProbeGrid, basis) -> ProbeMatrix:
    """Stack one photon-number row per probe into a :class:`ProbeMatrix`."""
    basis = as_basis(basis)
    if not isinstance(grid, ProbeGrid):
        grid = ProbeGrid.from_arrays(grid)
    if len(grid) == 0:
        raise ValueError("probe grid must not be empty")
    rows = []
    mixed = False
    for probe in grid.probes:
        if probe.noise_sigma_sq > 0:
            mixed = True
            rows.append(mixed_probe_row(probe.mean_photon_number, probe.noise_sigma_sq, basis))
        else:
            rows.append(poisson_weights(probe.mean_photon_number, basis))
    return ProbeMatrix(np.vstack(rows), basis, "mixed" if mixed else "pure", grid)


def predict_response(povm, probe_matrix: ProbeMatrix) -> CountTable:
    """Outcome probabilities ``F @ theta`` for every probe.

    No renormalization is applied: each row sums to the truncated mass of its
    probe.  A :class:`TruncationWarning` is emitted when that mass is below
    ``TRUNCATION_THRESHOLD``.
    """
    theta = np.asarray(povm.theta)
    if probe_matrix.basis.M != povm.basis.M:
        raise ValueError(
            f"basis mismatch: probe matrix has M={probe_matrix.basis.M}, POVM has M={povm.basis.M}"
        )
    probs = probe_matrix.entries @ theta
    mass = probe_matrix.row_mass
    low = mass < TRUNCATION_THRESHOLD
    if low.any():
        warnings.warn(
            f"{int(low.sum())} probe(s) keep less than {TRUNCATION_THRESHOLD} of their "
            f"photon-number mass below M={povm.basis.M} (min {mass.min():.4g})",
            TruncationWarning,
            stacklevel=2,
        )
    if probe_matrix.grid is None:
        raise ValueError("probe matrix carries no probe grid; build it with build_probe_matrix")
    np.clip(probs, 0.0, 1.0, out=probs)
    return CountTable(
        probe_matrix.grid.with_trials(None),
        probs,
        predicted=True,
        meta={"truncated_mass": mass, "truncation_warning": bool(low.any())},
    )
