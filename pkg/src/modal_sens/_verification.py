"""Finite-difference oracle and the comparison metrics."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike

from ._characteristic import Characteristic
from ._eigen import EigenPair, solve_modes
from ._errors import DimensionError, InvalidInputError, ModeCrossingError
from ._sparse import FloatArray, SymSparseMatrix

logger = logging.getLogger(__name__)

THREADS_ENV = "MODAL_SENS_THREADS"
DEFAULT_STEP = 1e-6


def thread_limit() -> int:
    """Worker cap from ``MODAL_SENS_THREADS``, else the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise InvalidInputError(
            f"{THREADS_ENV} must be an integer, got {raw!r}"
        ) from None
    if value < 1:
        raise InvalidInputError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value


class ParametricModel(Protocol):
    """Anything that assembles ``(K, M)`` from a parameter vector."""

    @property
    def parameter_upper_bound(self) -> float: ...

    def assemble(self, p: ArrayLike) -> tuple[SymSparseMatrix, SymSparseMatrix]: ...


@dataclass(frozen=True)
class FdConfig:
    """Relative step ``h`` (scaled by ``max(1, |p_k|)``) and worker count."""

    step: float = DEFAULT_STEP
    workers: int | None = None

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise InvalidInputError(
                f"finite-difference step must be positive, got {self.step}"
            )
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError(f"need at least one worker, got {self.workers}")


class _ModeTracker:
    """Re-solves a perturbed model and follows the baseline mode."""

    def __init__(
        self,
        model: ParametricModel,
        characteristic: Characteristic,
        mode_index: int,
        baseline: EigenPair,
        m_phi: FloatArray,
        n_modes: int,
        gap: float,
    ) -> None:
        self.model = model
        self.characteristic = characteristic
        self.mode_index = mode_index
        self.baseline = baseline
        self.m_phi = m_phi
        self.n_modes = n_modes
        self.gap = gap

    def __call__(self, p: FloatArray) -> float:
        k, m = self.model.assemble(p)
        pairs = solve_modes(k, m, self.n_modes).pairs
        distance = np.abs(
            np.array([pair.eigenvalue for pair in pairs]) - self.baseline.eigenvalue
        )
        nearest = int(np.argmin(distance))
        if nearest != self.mode_index - 1 or distance[nearest] >= 0.5 * self.gap:
            raise ModeCrossingError(
                f"mode {self.mode_index} is no longer the nearest to "
                f"lambda={self.baseline.eigenvalue:.9g} under perturbation"
            )
        pair = pairs[nearest]
        phi = pair.phi if pair.phi @ self.m_phi >= 0 else -pair.phi
        return self.characteristic.value(p, pair.eigenvalue, phi)


def _stencil(
    evaluate: _ModeTracker, p: FloatArray, k: int, h: float, upper: float, centre: float
) -> float:
    def shifted(offset: float) -> float:
        perturbed = p.copy()
        perturbed[k] += offset
        return evaluate(perturbed)

    if p[k] + h <= upper and p[k] - h > 0:
        return (shifted(h) - shifted(-h)) / (2.0 * h)
    if p[k] + h > upper:
        if p[k] - 2.0 * h <= 0:
            raise InvalidInputError(
                f"parameter {k} = {p[k]} leaves no room for a step of {h}"
            )
        return (3.0 * centre - 4.0 * shifted(-h) + shifted(-2.0 * h)) / (2.0 * h)
    return (-3.0 * centre + 4.0 * shifted(h) - shifted(2.0 * h)) / (2.0 * h)


def fd_sensitivity(
    model: ParametricModel,
    p: ArrayLike,
    characteristic: Characteristic,
    mode_index: int,
    cfg: FdConfig | None = None,
) -> FloatArray:
    """Differentiate ``F`` numerically, one parameter at a time.

    Central differences are used where the step stays inside the parameter
    bounds, the second-order one-sided stencil elsewhere. Each perturbed
    eigenvector is sign-aligned with the baseline through ``phi.T M phi'``.
    """
    cfg = FdConfig() if cfg is None else cfg
    params = np.array(getattr(p, "densities", p), dtype=np.float64).ravel()
    if mode_index < 1:
        raise InvalidInputError(f"mode numbers start at 1, got {mode_index}")

    k0, m0 = model.assemble(params)
    n_modes = min(mode_index + 1, k0.order)
    pairs = solve_modes(k0, m0, n_modes).pairs
    baseline = pairs[mode_index - 1]
    neighbours = [pair.eigenvalue for pair in pairs if pair.index != mode_index]
    gap = (
        min(abs(lam - baseline.eigenvalue) for lam in neighbours)
        if neighbours
        else np.inf
    )
    evaluate = _ModeTracker(
        model,
        characteristic,
        mode_index,
        baseline,
        m0.matvec(baseline.phi),
        n_modes,
        gap,
    )
    centre = characteristic.value(params, baseline.eigenvalue, baseline.phi)
    upper = float(model.parameter_upper_bound)
    workers = cfg.workers or thread_limit()

    def one(k: int) -> float:
        h = cfg.step * max(1.0, abs(params[k]))
        value = _stencil(evaluate, params, k, h, upper, centre)
        logger.debug("finite difference of parameter %d: %.9g", k, value)
        return value

    with ThreadPoolExecutor(max_workers=workers) as pool:
        values = list(pool.map(one, range(params.size)))
    logger.info(
        "finite differences of %d parameters for mode %d with %d workers",
        params.size,
        mode_index,
        workers,
    )
    return np.array(values)


@dataclass(frozen=True)
class ErrorReport:
    s_p: float
    s_n: float
    e_r: float

    @classmethod
    def compare(cls, s_p: float, s_n: float) -> ErrorReport:
        return cls(s_p, s_n, relative_error(s_p, s_n))


def relative_error(s_p: float, s_n: float) -> float:
    """Return ``|s_p - s_n| / |s_n|`` in percent.

    >>> round(relative_error(1.1, 1.0), 10)
    10.0
    """
    if s_n == 0:
        raise InvalidInputError("relative error against a zero reference is undefined")
    return abs(s_p - s_n) / abs(s_n) * 100.0


def efficiency_ratio(t_a: float, t_b: float) -> float:
    """Return ``t_a / t_b``."""
    if not t_b > 0:
        raise InvalidInputError(f"reference time must be positive, got {t_b}")
    if t_a < 0:
        raise InvalidInputError(f"time must not be negative, got {t_a}")
    return t_a / t_b


def linf_entry(values: ArrayLike) -> tuple[float, int]:
    """Return the signed entry of largest magnitude and its index."""
    vector = np.asarray(values, dtype=np.float64).ravel()
    if vector.size == 0:
        raise DimensionError("cannot take the largest entry of an empty vector")
    index = int(np.argmax(np.abs(vector)))
    return float(vector[index]), index


def normalized_error(values: ArrayLike, reference: ArrayLike) -> float:
    """Return ``max_k |s_k - ref_k| / max_k |ref_k|`` in percent."""
    s = np.asarray(values, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if s.shape != ref.shape:
        raise DimensionError(f"vectors of length {s.size} and {ref.size}")
    scale = float(np.max(np.abs(ref), initial=0.0))
    if scale == 0.0:
        raise InvalidInputError(
            "normalized error against a zero reference is undefined"
        )
    return float(np.max(np.abs(s - ref))) / scale * 100.0
