"""Deterministic parameter optimization for the slow-basis key-rate model.

For each candidate ``nu_th`` (scanned in ascending order, with optional
early stopping once the rate has decayed for three consecutive values),
``mu`` is maximized on a coarse logarithmic grid followed by golden-section
refinement in log(mu).  ``M`` is picked from an explicit candidate list.
No randomness is involved anywhere, so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from ._env import worker_count
from .keyrate import KeyRateResult, ProtocolParams, key_rate

__all__ = [
    "MU_MIN",
    "MU_MAX",
    "M_CANDIDATES_DEFAULT",
    "Optimum",
    "CurveSpec",
    "mu_grid",
    "optimize_point",
    "optimize_with_M",
    "heuristic_M",
    "sweep_curves",
]

MU_MIN = 1e-6
MU_MAX = 1.0
POINTS_PER_DECADE = 20

# Sequence lengths {1, 2, 5} x 10^k, k = 0..6, in ascending order.
M_CANDIDATES_DEFAULT = tuple(a * 10**k for k in range(7) for a in (1, 2, 5))

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_REFINE_ITERS = 32
_EARLY_STOP_RUN = 3


@dataclass(frozen=True)
class Optimum:
    """Best operating point found for one (eta, M)."""

    eta: float
    M: int
    mu_opt: float
    nu_th_opt: int
    result: KeyRateResult


@dataclass(frozen=True)
class CurveSpec:
    """A family of key-rate curves: one per M value, swept over eta_grid."""

    base: ProtocolParams
    eta_grid: tuple[float, ...]
    M_values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.eta_grid) == 0:
            raise ValueError("eta_grid must be non-empty")
        if any(not 0.0 < e <= 1.0 for e in self.eta_grid):
            raise ValueError("eta_grid entries must lie in (0, 1]")
        if any(b <= a for a, b in zip(self.eta_grid, self.eta_grid[1:])):
            raise ValueError("eta_grid must be strictly increasing")
        if len(self.M_values) == 0 or any(m < 1 for m in self.M_values):
            raise ValueError("M_values must be positive integers")


def mu_grid(points_per_decade: int = POINTS_PER_DECADE) -> list[float]:
    """Logarithmic mu scan grid covering [MU_MIN, MU_MAX]."""
    if points_per_decade < 1:
        raise ValueError(f"points_per_decade must be >= 1, got {points_per_decade}")
    lo = math.log10(MU_MIN)
    hi = math.log10(MU_MAX)
    n = round((hi - lo) * points_per_decade)
    return [10.0 ** (lo + (hi - lo) * i / n) for i in range(n + 1)]


def _g(base: ProtocolParams, eta: float, M: int, mu: float, nu_th: int) -> float:
    p = replace(base, eta=eta, M=M, mu=mu, nu_th=nu_th)
    return key_rate(p).G


def _best_mu(
    base: ProtocolParams, eta: float, M: int, nu_th: int, grid: list[float]
) -> tuple[float, float]:
    """Maximize clamped G over mu: coarse grid, then golden-section in log(mu).

    Returns (G, mu); ties keep the smaller mu, so a flat-zero landscape
    reports the grid's lower boundary.
    """
    best_g = -1.0
    best_i = 0
    for i, mu in enumerate(grid):
        g = _g(base, eta, M, mu, nu_th)
        if g > best_g:
            best_g, best_i = g, i
    best_mu = grid[best_i]

    a = math.log10(grid[max(best_i - 1, 0)])
    b = math.log10(grid[min(best_i + 1, len(grid) - 1)])
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    gc = _g(base, eta, M, 10.0**c, nu_th)
    gd = _g(base, eta, M, 10.0**d, nu_th)
    for _ in range(_REFINE_ITERS):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = _g(base, eta, M, 10.0**c, nu_th)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = _g(base, eta, M, 10.0**d, nu_th)
        for g, logmu in ((gc, c), (gd, d)):
            if g > best_g:
                best_g, best_mu = g, 10.0**logmu
    return best_g, best_mu


def optimize_point(
    base: ProtocolParams,
    eta: float,
    M: int,
    *,
    points_per_decade: int = POINTS_PER_DECADE,
    full_scan: bool = False,
) -> Optimum:
    """Maximize the clamped key rate over (mu, nu_th) at one (eta, M).

    nu_th runs over 0..L-1 in ascending order.  The rate is unimodal in
    nu_th in practice, so unless ``full_scan`` is set the scan stops after
    the per-nu_th maximum has decreased three times in a row.  Ties prefer
    the smaller nu_th (and the smaller mu within one nu_th).  When no
    positive rate exists anywhere the reported point sits at the grid
    boundaries (mu = MU_MIN, nu_th = 0) with G = 0.
    """
    grid = mu_grid(points_per_decade)
    best_g = -1.0
    best_nu = 0
    best_mu = grid[0]
    prev = None
    run = 0
    for nu in range(base.L):
        g, mu = _best_mu(base, eta, M, nu, grid)
        if g > best_g:
            best_g, best_nu, best_mu = g, nu, mu
        if prev is not None:
            if g < prev:
                run += 1
                if run >= _EARLY_STOP_RUN and not full_scan:
                    break
            else:
                run = 0
        prev = g
    if best_g <= 0.0:
        best_mu, best_nu = grid[0], 0
    final = key_rate(replace(base, eta=eta, M=M, mu=best_mu, nu_th=best_nu))
    return Optimum(eta=eta, M=M, mu_opt=best_mu, nu_th_opt=best_nu, result=final)


def optimize_with_M(
    base: ProtocolParams,
    eta: float,
    M_candidates: tuple[int, ...] = M_CANDIDATES_DEFAULT,
    *,
    points_per_decade: int = POINTS_PER_DECADE,
    full_scan: bool = False,
) -> Optimum:
    """Best Optimum across candidate sequence lengths (ties keep the smaller M)."""
    if len(M_candidates) == 0:
        raise ValueError("M_candidates must be non-empty")
    best: Optimum | None = None
    for M in M_candidates:
        opt = optimize_point(
            base, eta, M, points_per_decade=points_per_decade, full_scan=full_scan
        )
        if best is None or opt.result.G > best.result.G:
            best = opt
    return best


def heuristic_M(L: int, c_d: int) -> int:
    """Sequence length balancing dead-time overhead against sequence cost.

    round(c_d / L) (banker's rounding), at least 1: make the M*L pulses of
    a sequence comparable to the c_d pulses lost to dead time.
    """
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if c_d < 0:
        raise ValueError(f"c_d must be >= 0, got {c_d}")
    return max(1, round(c_d / L))


def _sweep_task(args: tuple) -> Optimum:
    base, eta, M, points_per_decade, full_scan = args
    return optimize_point(
        base, eta, M, points_per_decade=points_per_decade, full_scan=full_scan
    )


def sweep_curves(
    spec: CurveSpec,
    *,
    points_per_decade: int = POINTS_PER_DECADE,
    full_scan: bool = False,
) -> list[Optimum]:
    """Optimize every (M, eta) point of the spec, in (M, eta) lexicographic order.

    Points are independent; set QKD_THREADS > 1 to spread them over a
    process pool.  The output does not depend on the worker count.
    """
    tasks = [
        (spec.base, eta, M, points_per_decade, full_scan)
        for M in sorted(spec.M_values)
        for eta in spec.eta_grid
    ]
    workers = worker_count()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (4 * workers))
            return list(pool.map(_sweep_task, tasks, chunksize=chunk))
    return [_sweep_task(t) for t in tasks]
