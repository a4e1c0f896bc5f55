"""Fidelities, POVM distances, Wigner functions and response curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fock import CountTable, ProbeGrid, build_probe_matrix, predict_response
from .kernels import scaled_laguerre_series
from .models import DiagonalPOVM

__all__ = [
    "fidelity",
    "outcome_fidelities",
    "PovmDistance",
    "povm_distance",
    "compare_povms",
    "WignerGrid",
    "WignerTailWarning",
    "wigner_element",
    "wigner_series",
    "response_overlay",
]

DISTANCE_FLOOR = 1e-6
TAIL_WARN = 1e-6


class WignerTailWarning(UserWarning):
    """Grid reaches where photon numbers above the cut matter."""


def _element(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("a POVM element is a 1-D vector of diagonal entries")
    if not np.all(np.isfinite(x)) or x.min() < 0:
        raise ValueError("POVM element entries must be finite and nonnegative")
    return x


def fidelity(a, b) -> float:
    """``(sum_k sqrt(a_k b_k))^2`` after normalizing both elements to unit trace."""
    a, b = _element(a), _element(b)
    if a.shape != b.shape:
        raise ValueError(f"elements live on different cuts: {a.shape} vs {b.shape}")
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise ValueError("fidelity is undefined for a zero-trace element")
    f = np.sum(np.sqrt(a / ta * (b / tb))) ** 2
    return float(min(f, 1.0))


def outcome_fidelities(a: DiagonalPOVM, b: DiagonalPOVM) -> np.ndarray:
    if a.theta.shape != b.theta.shape:
        raise ValueError(f"POVM shapes differ: {a.theta.shape} vs {b.theta.shape}")
    return np.array([fidelity(a.theta[:, n], b.theta[:, n]) for n in range(a.outcomes)])


@dataclass(frozen=True)
class PovmDistance:
    relative_norm: float
    max_relative_entry: float

    def __float__(self):
        return self.relative_norm


def povm_distance(a: DiagonalPOVM, b: DiagonalPOVM, floor: float = DISTANCE_FLOOR) -> PovmDistance:
    """Distance of ``a`` from the reference ``b``.

    ``relative_norm = ||a - b|| / ||b||`` (entrywise 2-norm) and
    ``max_relative_entry`` is the largest ``|a - b| / |b|`` over entries with
    ``|b| > floor``.
    """
    A, B = np.asarray(a.theta), np.asarray(b.theta)
    if A.shape != B.shape:
        raise ValueError(f"POVM shapes differ: {A.shape} vs {B.shape}")
    diff = A - B
    ref = np.linalg.norm(B)
    rel = float(np.linalg.norm(diff) / ref) if ref > 0 else float(np.linalg.norm(diff))
    big = np.abs(B) > floor
    entry = float(np.max(np.abs(diff[big]) / np.abs(B[big]))) if big.any() else 0.0
    return PovmDistance(rel, entry)


def compare_povms(a: DiagonalPOVM, b: DiagonalPOVM) -> dict:
    d = povm_distance(a, b)
    return {
        "fidelity": [float(f) for f in outcome_fidelities(a, b)],
        "relative_norm": d.relative_norm,
        "max_relative_entry": d.max_relative_entry,
    }


@dataclass(frozen=True)
class WignerGrid:
    """Values of one element's Wigner function.

    Radial grids have ``re``/``im`` set to ``None``; planar grids carry the
    two meshgrid coordinate arrays.  ``abs_alpha`` always matches ``values``.
    """

    abs_alpha: np.ndarray
    values: np.ndarray
    re: Optional[np.ndarray] = None
    im: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def planar(self) -> bool:
        return self.re is not None


def wigner_series(coeffs, abs_alpha) -> np.ndarray:
    """``(2/pi) sum_k c_k (-1)^k L_k(4r^2) exp(-2r^2)`` for ``r = abs_alpha``."""
    c = np.asarray(coeffs, dtype=np.float64)
    r = np.asarray(abs_alpha, dtype=np.float64)
    signs = np.where(np.arange(c.size) % 2 == 0, 1.0, -1.0)
    flat = np.atleast_1d(r).ravel()
    return ((2.0 / np.pi) * scaled_laguerre_series(c * signs, 4.0 * flat * flat)).reshape(r.shape)


def wigner_element(povm: DiagonalPOVM, n: int, grid_spec, tail: str = "constant") -> WignerGrid:
    """Wigner function of outcome ``n`` with the convention ``int W d^2 alpha = tr``.

    ``grid_spec`` is a 1-D array of ``|alpha|`` values (radial) or a pair
    ``(re_values, im_values)`` (planar meshgrid).

    A Fock-diagonal element does not decay in ``k`` at the origin, so the
    finite sum depends on the parity of the cut.  ``tail="constant"`` assumes
    ``theta_k = theta_M`` for ``k > M``, which sums in closed form because the
    Fock Wigner functions sum to ``1/pi``.  ``tail="truncate"`` uses the
    literal finite sum.
    """
    if not 0 <= int(n) < povm.outcomes:
        raise ValueError(f"outcome {n} out of range for a POVM with {povm.outcomes} outcomes")
    if tail not in ("constant", "truncate"):
        raise ValueError(f"tail must be 'constant' or 'truncate', got {tail!r}")
    re = im = None
    if isinstance(grid_spec, tuple):
        if len(grid_spec) != 2:
            raise ValueError("planar grid_spec must be a (re_values, im_values) pair")
        re, im = np.meshgrid(np.asarray(grid_spec[0], float), np.asarray(grid_spec[1], float))
        r = np.hypot(re, im)
    else:
        r = np.abs(np.asarray(grid_spec, dtype=np.float64))
        if r.ndim != 1:
            raise ValueError("radial grid_spec must be a 1-D array of |alpha|")
    if not np.all(np.isfinite(r)):
        raise ValueError("grid must be finite")
    theta = povm.theta[:, int(n)]
    M = povm.M
    if tail == "constant":
        coeffs = theta - theta[-1]
        values = wigner_series(coeffs, r) + theta[-1] / np.pi
        last = abs(theta[-1] - theta[-2]) if M > 0 else 0.0
    else:
        coeffs = theta
        values = wigner_series(coeffs, r)
        last = abs(theta[-1])
    # size of the last retained term, a proxy for the neglected ones
    if r.size:
        edge = (2.0 / np.pi) * last * np.abs(scaled_laguerre_series(np.eye(M + 1)[-1], 4.0 * r.ravel() ** 2)).max()
    else:
        edge = 0.0
    rmax = float(r.max()) if r.size else 0.0
    if edge > TAIL_WARN or rmax * rmax > M:
        warnings.warn(
            f"Wigner grid may need photon numbers above M={M}: last-term estimate {edge:.2g}, "
            f"max |alpha|^2 = {rmax * rmax:.3g}",
            WignerTailWarning,
            stacklevel=2,
        )
    return WignerGrid(r, values, re, im, meta={"outcome": int(n), "tail": tail, "tail_estimate": float(edge)})


def response_overlay(povm: DiagonalPOVM, grid: ProbeGrid) -> CountTable:
    """Predicted outcome probabilities of ``povm`` along ``grid``."""
    return predict_response(povm, build_probe_matrix(grid, povm.basis))
