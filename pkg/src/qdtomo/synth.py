"""Synthetic experiments: finite-trial click counts, amplitude jitter, calibration.

Randomness comes from numpy's counter-based Philox generator.  Every probe
gets its own stream keyed by ``(seed, stream, probe_index)`` so results do
not depend on evaluation order and are reproducible across platforms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import constants
from scipy.stats import poisson

from .fock import CountTable, ProbeGrid, build_probe_matrix, predict_response
from .models import DiagonalPOVM, apd_povm, tmd_povm

__all__ = [
    "ExperimentConfig",
    "CalibrationInput",
    "default_apd_grid",
    "default_tmd_grid",
    "geometric_grid",
    "simulation_basis",
    "resolve_povm",
    "perturb_amplitudes",
    "simulate_counts",
    "alpha_from_power",
    "RNG_NAME",
]

log = logging.getLogger(__name__)

RNG_NAME = "numpy.random.Philox"
DEFAULT_M = 60
# Poisson mass allowed above the simulation cut at the brightest probe
SIM_TAIL = 1e-12
_REMAINDER_TOL = 1e-9

_COUNT_STREAM = 0
_JITTER_STREAM = 1


def geometric_grid(lo: float, hi: float, n: int, trials=None, sigma_sq=None) -> ProbeGrid:
    if not (0 < lo <= hi) or n < 1:
        raise ValueError(f"need 0 < lo <= hi and n >= 1, got lo={lo}, hi={hi}, n={n}")
    return ProbeGrid.from_arrays(np.geomspace(lo, hi, int(n)), sigma_sq, trials)


def default_apd_grid(trials=None) -> ProbeGrid:
    """50 magnitudes, geometric in ``|alpha|^2`` over [0.01, 20]."""
    return geometric_grid(0.01, 20.0, 50, trials)


def default_tmd_grid(trials=None) -> ProbeGrid:
    """50 magnitudes, geometric in ``|alpha|^2`` over [0.05, 40].

    The upper end is kept where a 61-state cut still holds most of the
    Poisson mass; brighter probes carry no information about ``k <= 60``.
    """
    return geometric_grid(0.05, 40.0, 50, trials)


def _rng(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream, int(index)))
    return np.random.Generator(np.random.Philox(ss))


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


@dataclass(frozen=True)
class ExperimentConfig:
    """What to simulate.

    ``povm_source`` is ``"apd"``, ``"tmd"`` or a :class:`DiagonalPOVM`;
    ``model_params`` are passed to the model constructor (``loss``,
    ``reflectivities``).  ``basis`` overrides the automatic simulation cut.
    """

    povm_source: Union[str, DiagonalPOVM]
    grid: ProbeGrid
    seed: int = 0
    amplitude_noise_delta: Optional[float] = None
    model_params: dict = field(default_factory=dict)
    basis: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "seed", _check_seed(self.seed))
        if isinstance(self.povm_source, str) and self.povm_source not in ("apd", "tmd"):
            raise ValueError(f"unknown model {self.povm_source!r}; expected 'apd' or 'tmd'")
        d = self.amplitude_noise_delta
        if d is not None and (not np.isfinite(d) or d < 0):
            raise ValueError(f"amplitude_noise_delta must be >= 0, got {d!r}")


@dataclass(frozen=True)
class CalibrationInput:
    gamma: float
    power: float
    wavelength: float
    rep_rate: float

    def __post_init__(self):
        for name in ("gamma", "power", "wavelength", "rep_rate"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)


def alpha_from_power(cal: CalibrationInput) -> float:
    """Mean photon number per pulse ``gamma P lambda / (2 pi R hbar c)``."""
    return cal.gamma * cal.power * cal.wavelength / (
        2.0 * np.pi * cal.rep_rate * constants.hbar * constants.c
    )


def simulation_basis(grid: ProbeGrid, minimum: int = DEFAULT_M, tail: float = SIM_TAIL) -> int:
    """Smallest cut ``>= minimum`` leaving at most ``tail`` probe mass above it."""
    amax = float(grid.alpha_sq.max())
    M = max(int(minimum), int(poisson.isf(tail, amax)) + 1 if amax > 0 else 0)
    while True:
        mass = build_probe_matrix(grid, M).row_mass
        if 1.0 - mass.min() <= tail or M > 4000:
            return M
        M = int(M * 1.25) + 1


def resolve_povm(config: ExperimentConfig, grid: Optional[ProbeGrid] = None) -> DiagonalPOVM:
    source = config.povm_source
    if isinstance(source, DiagonalPOVM):
        return source
    M = config.basis if config.basis is not None else simulation_basis(grid or config.grid)
    builder = apd_povm if source == "apd" else tmd_povm
    return builder(basis=M, **config.model_params)


def _jitter(grid: ProbeGrid, delta: float, seed: int):
    a = grid.alpha_sq
    factors = np.array([1.0 + _rng(seed, _JITTER_STREAM, i).normal(0.0, delta) for i in range(len(a))])
    clamped = factors < 0
    factors[clamped] = 0.0
    return a * factors**2, int(clamped.sum())


def perturb_amplitudes(grid: ProbeGrid, delta: float, seed: int) -> ProbeGrid:
    """Multiply each ``|alpha|`` by ``1 + d`` with ``d ~ N(0, delta^2)`` per probe.

    Amplitudes that would turn negative are clamped to zero and the number of
    clamped probes is logged.
    """
    delta = float(delta)
    if not np.isfinite(delta) or delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta!r}")
    seed = _check_seed(seed)
    if delta == 0:
        return grid
    alpha_sq, clamped = _jitter(grid, delta, seed)
    if clamped:
        log.warning("perturb_amplitudes clamped %d negative amplitude(s) to zero", clamped)
    return ProbeGrid.from_arrays(alpha_sq, grid.sigma_sq, list(grid.trials))


def simulate_counts(config: ExperimentConfig) -> CountTable:
    """Sample outcome counts for every probe of ``config.grid``.

    Poisson mass above the simulation cut is credited to outcome 0 (recorded
    as ``meta["remainder"]``).  Probes with ``trials=None`` return exact
    probabilities.  The returned table lists the nominal probe magnitudes even
    when the data were generated from a jittered grid.
    """
    grid = config.grid
    if any(j is None for j in grid.trials) and not grid.exact:
        raise ValueError("mix of finite and infinite trial counts is not supported")
    true_grid, clamped = grid, 0
    if config.amplitude_noise_delta:
        alpha_sq, clamped = _jitter(grid, config.amplitude_noise_delta, config.seed)
        if clamped:
            log.warning("amplitude jitter clamped %d negative amplitude(s) to zero", clamped)
        true_grid = ProbeGrid.from_arrays(alpha_sq, grid.sigma_sq, list(grid.trials))
    povm = resolve_povm(config, true_grid)
    probs = np.array(predict_response(povm, build_probe_matrix(true_grid, povm.basis)).frequencies)
    remainder = 1.0 - probs.sum(axis=1)
    probs[:, 0] += remainder
    if np.abs(probs.sum(axis=1) - 1.0).max() > _REMAINDER_TOL or probs.min() < 0:
        raise ArithmeticError("outcome probabilities do not form a distribution after remainder assignment")
    probs /= probs.sum(axis=1, keepdims=True)
    meta = {
        "rng": RNG_NAME,
        "seed": config.seed,
        "simulation_M": povm.M,
        "remainder": remainder,
        "remainder_flag": bool(np.abs(remainder).max() > 1e-6),
        "amplitude_noise_delta": config.amplitude_noise_delta,
        "true_alpha_sq": true_grid.alpha_sq,
        "clamped": clamped,
    }
    if grid.exact:
        return CountTable(grid, probs, meta=meta)
    counts = np.empty(probs.shape, dtype=np.int64)
    for i, J in enumerate(grid.trials):
        counts[i] = _rng(config.seed, _COUNT_STREAM, i).multinomial(J, probs[i])
    trials = np.array(grid.trials, dtype=np.float64)[:, None]
    return CountTable(grid, counts / trials, raw_counts=counts, meta=meta)
