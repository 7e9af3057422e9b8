"""Resource estimation: correctness-bound evaluation and its minimisation.

The accepted-output error bound splits as eps_max = eps_ver + eps_rej, where
eps_ver is the larger of two branches, each a sum of two exponentials in the
number of rounds n, and eps_rej = exp(-2 (Phi - p_max)^2 tau n).  All of it
is parameterised by five free quantities (tau, psi, eps1, eps2, eps3) under
a block of strict inequality constraints; the threshold Phi and the exponent
helper eps4 are derived.

Two minimisation modes: the best achievable eps_max for a given n, and the
smallest n achieving a target eps_max.  Both use a deterministic multi-start
coordinate descent (quasi-random starts, shrinking steps, rejection of
infeasible moves); mode two wraps mode one in exponential bracketing plus
bisection over n, re-using every parameter point found at one n as a warm
start at the next, which makes the optimised bound monotone in n by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import qmc

N_CEILING_DEFAULT = 10**7
_LOG_TINY = -745.0  # exp() underflows below this

STATUS_DONE = "done"
STATUS_ABORT = "abort"


@dataclass(frozen=True)
class BoundInputs:
    """Fixed problem data for the bound: colouring size, inherent error, noise cap."""

    k: int
    p: float = 0.0
    p_max: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if not 0.0 <= self.p < 0.5:
            raise ValueError("inherent error probability p must be in [0, 1/2)")
        if not 0.0 <= self.p_max < 1.0:
            raise ValueError("p_max must be in [0, 1)")

    @property
    def ratio(self) -> float:
        """(2p - 1) / (2p - 2), in (0, 1/2] for p in [0, 1/2)."""
        return (2.0 * self.p - 1.0) / (2.0 * self.p - 2.0)


@dataclass(frozen=True)
class FreeParams:
    tau: float
    psi: float
    eps1: float
    eps2: float
    eps3: float

    @property
    def delta(self) -> float:
        return 1.0 - self.tau

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.tau, self.psi, self.eps1, self.eps2, self.eps3)

    def to_dict(self) -> dict[str, float]:
        return {
            "tau": self.tau,
            "psi": self.psi,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "eps3": self.eps3,
        }


def eps4_of(params: FreeParams, inputs: BoundInputs) -> float:
    """Derived exponent parameter; must come out positive to be usable."""
    r = inputs.ratio
    lead = 1.0 - r + params.psi - params.eps3
    return (0.5 - r + params.psi - params.eps3) / lead - inputs.p


def phi_of(params: FreeParams, inputs: BoundInputs) -> float:
    """Failure-rate threshold (1/k - eps2) * (r - psi - eps1)."""
    return (1.0 / inputs.k - params.eps2) * (inputs.ratio - params.psi - params.eps1)


def feasible(params: FreeParams, inputs: BoundInputs) -> list[str]:
    """Every violated constraint of the bound's condition block (all strict)."""
    r = inputs.ratio
    t, psi, e1, e2, e3 = params.as_tuple()
    bad: list[str] = []
    if not 0.0 < t < 1.0:
        bad.append("tau outside (0, 1)")
    if not 0.0 < psi < r:
        bad.append("psi outside (0, r)")
    if not 0.0 < e1 < 0.5 - psi:
        bad.append("eps1 outside (0, 1/2 - psi)")
    if not 0.0 < e2 < 1.0 / inputs.k:
        bad.append("eps2 outside (0, 1/k)")
    if not 0.0 < e3 < psi:
        bad.append("eps3 outside (0, psi)")
    if eps4_of(params, inputs) <= 0.0:
        bad.append("derived eps4 not positive")
    phi = phi_of(params, inputs)
    if not inputs.p_max < phi:
        bad.append("p_max >= Phi")
    if not phi < r / inputs.k:
        bad.append("Phi >= r/k")
    return bad


def _branch_exponents(
    params: FreeParams, inputs: BoundInputs, n: float
) -> tuple[float, float, float, float]:
    """The four (positive) exponents of the two eps_ver branches."""
    r = inputs.ratio
    t, psi, e1, e2, e3 = params.as_tuple()
    d = 1.0 - t
    e4 = eps4_of(params, inputs)
    rp = r - psi
    exp11 = 2.0 * (1.0 - r + psi - e3) * d * e4 * e4 * n
    exp12 = 2.0 * d * d * e3 * e3 * n / rp
    exp21 = 2.0 * (r - psi - e1) * t * e2 * e2 * n
    exp22 = 2.0 * t * t * e1 * e1 * n / rp
    return exp11, exp12, exp21, exp22


def _exp(x: float) -> float:
    return math.exp(x) if x > _LOG_TINY else 0.0


def epsilon_ver(params: FreeParams, inputs: BoundInputs, n: float) -> float:
    """max of the two verification branches (each a sum of two exponentials).

    Branch magnitudes are compared in log space so that underflow to zero
    cannot corrupt the max.
    """
    b1, b2, _ = _epsilon_ver_detail(params, inputs, n)
    b1_log, b2_log = _branch_logs(params, inputs, n)
    return b1 if b1_log >= b2_log else b2


def _branch_logs(params: FreeParams, inputs: BoundInputs, n: float) -> tuple[float, float]:
    exp11, exp12, exp21, exp22 = _branch_exponents(params, inputs, n)
    return (
        float(np.logaddexp(-exp11, -exp12)),
        float(np.logaddexp(-exp21, -exp22)),
    )


def _epsilon_ver_detail(
    params: FreeParams, inputs: BoundInputs, n: float
) -> tuple[float, float, float]:
    exp11, exp12, exp21, exp22 = _branch_exponents(params, inputs, n)
    b1 = _exp(-exp11) + _exp(-exp12)
    b2 = _exp(-exp21) + _exp(-exp22)
    return b1, b2, max(b1, b2)


def epsilon_rej(params: FreeParams, inputs: BoundInputs, n: float) -> float:
    """exp(-2 (Phi - p_max)^2 tau n); requires Phi > p_max."""
    phi = phi_of(params, inputs)
    if phi <= inputs.p_max:
        raise ValueError("epsilon_rej requires Phi > p_max")
    gap = phi - inputs.p_max
    return _exp(-2.0 * gap * gap * params.tau * n)


def epsilon_max(params: FreeParams, inputs: BoundInputs, n: float) -> float:
    return epsilon_ver(params, inputs, n) + epsilon_rej(params, inputs, n)


@dataclass(frozen=True)
class EstimationResult:
    status: str
    reason: str | None
    inputs: BoundInputs
    n: int | None = None
    eps_max: float | None = None
    eps_ver: float | None = None
    eps_rej: float | None = None
    branch1: float | None = None
    branch2: float | None = None
    phi: float | None = None
    tau: float | None = None
    t: int | None = None
    d: int | None = None
    params: FreeParams | None = None

    @property
    def done(self) -> bool:
        return self.status == STATUS_DONE

    def to_dict(self) -> dict:
        out: dict = {"status": self.status, "reason": self.reason}
        out["inputs"] = {"k": self.inputs.k, "p": self.inputs.p, "p_max": self.inputs.p_max}
        for name in ("n", "eps_max", "eps_ver", "eps_rej", "branch1", "branch2",
                     "phi", "tau", "t", "d"):
            out[name] = getattr(self, name)
        out["params"] = self.params.to_dict() if self.params else None
        return out


Trace = Callable[[int, FreeParams, float | None], None]


def _objective(
    params: FreeParams, inputs: BoundInputs, n: float, trace: Trace | None
) -> float:
    if feasible(params, inputs):
        if trace:
            trace(int(n), params, None)
        return math.inf
    value = epsilon_max(params, inputs, n)
    if trace:
        trace(int(n), params, value)
    return value


def _sobol_starts(inputs: BoundInputs, count: int, tau_fixed: float | None) -> list[FreeParams]:
    """Quasi-random feasible-box starts (deterministic scramble seed)."""
    r = inputs.ratio
    sampler = qmc.Sobol(d=5, scramble=True, seed=2024)
    raw = sampler.random(4 * count)
    starts: list[FreeParams] = []
    for row in raw:
        tau = tau_fixed if tau_fixed is not None else 0.02 + 0.96 * row[0]
        psi = r * (0.02 + 0.96 * row[1])
        e1_hi = min(0.5 - psi, r - psi)
        eps1 = e1_hi * (0.02 + 0.9 * row[2])
        eps2 = (1.0 / inputs.k) * (0.02 + 0.9 * row[3])
        eps3 = psi * (0.05 + 0.9 * row[4])
        starts.append(FreeParams(tau, psi, eps1, eps2, eps3))
        if len(starts) >= 4 * count:
            break
    feasible_starts = [s for s in starts if not feasible(s, inputs)]
    return feasible_starts[:count] if feasible_starts else []


def _greedy_start(inputs: BoundInputs, tau_fixed: float | None) -> FreeParams | None:
    """A small-parameter corner that maximises Phi headroom, if one exists."""
    r = inputs.ratio
    for shrink in (0.02, 0.005, 0.001):
        psi = r * shrink * 5.0
        cand = FreeParams(
            tau=tau_fixed if tau_fixed is not None else 0.9,
            psi=psi,
            eps1=shrink * r,
            eps2=shrink / inputs.k,
            eps3=psi * 0.5,
        )
        if not feasible(cand, inputs):
            return cand
    return None


def _coordinate_descent(
    start: FreeParams,
    inputs: BoundInputs,
    n: float,
    tau_fixed: float | None,
    trace: Trace | None,
    max_sweeps: int = 400,
    step_floor: float = 1e-7,
) -> tuple[float, FreeParams]:
    r = inputs.ratio
    scales = np.array([1.0, r, 0.5, 1.0 / inputs.k, r])
    free = [i for i in range(5) if not (i == 0 and tau_fixed is not None)]
    x = np.array(start.as_tuple())
    best = _objective(start, inputs, n, trace)
    step = 0.25
    sweeps = 0
    while step > step_floor and sweeps < max_sweeps:
        improved = False
        for i in free:
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] += sign * step * scales[i]
                cand = FreeParams(*trial)
                val = _objective(cand, inputs, n, trace)
                if val < best:
                    best = val
                    x = trial
                    improved = True
        sweeps += 1
        if not improved:
            step *= 0.5
    return best, FreeParams(*x)


def _best_point(
    inputs: BoundInputs,
    n: float,
    tau_fixed: float | None,
    warm_starts: Sequence[FreeParams],
    num_starts: int,
    trace: Trace | None,
) -> tuple[float, FreeParams] | None:
    starts: list[FreeParams] = []
    greedy = _greedy_start(inputs, tau_fixed)
    if greedy is not None:
        starts.append(greedy)
    starts.extend(_sobol_starts(inputs, num_starts, tau_fixed))
    for w in warm_starts:
        if tau_fixed is not None and w.tau != tau_fixed:
            w = FreeParams(tau_fixed, w.psi, w.eps1, w.eps2, w.eps3)
        if not feasible(w, inputs):
            starts.append(w)
    if not starts:
        return None
    best: tuple[float, tuple[float, ...], FreeParams] | None = None
    for s in starts:
        val, point = _coordinate_descent(s, inputs, n, tau_fixed, trace)
        key = (val, point.as_tuple())
        if best is None or key < (best[0], best[1]):
            best = (val, point.as_tuple(), point)
    if best is None or not math.isfinite(best[0]):
        return None
    return best[0], best[2]


def _result_at(
    inputs: BoundInputs, n: int, point: FreeParams, eps: float
) -> EstimationResult:
    b1, b2, ever = _epsilon_ver_detail(point, inputs, float(n))
    erej = epsilon_rej(point, inputs, float(n))
    return EstimationResult(
        status=STATUS_DONE,
        reason=None,
        inputs=inputs,
        n=n,
        eps_max=eps,
        eps_ver=ever,
        eps_rej=erej,
        branch1=b1,
        branch2=b2,
        phi=phi_of(point, inputs),
        tau=point.tau,
        t=round(point.tau * n),
        d=round((1.0 - point.tau) * n),
        params=point,
    )


def minimize_eps_given_n(
    inputs: BoundInputs,
    n: int,
    tau: float | None = None,
    warm_starts: Sequence[FreeParams] = (),
    num_starts: int = 64,
    trace: Trace | None = None,
) -> EstimationResult:
    """Best achievable eps_max for a fixed total round count n.

    ``tau`` pins the test-round proportion (it is then removed from the
    search); ``warm_starts`` join the quasi-random start set, which makes
    chained calls monotone in n.  Aborts when no feasible point exists or
    the best bound is not below 1/2.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if inputs.p_max >= inputs.ratio / inputs.k:
        return EstimationResult(
            status=STATUS_ABORT, reason="p_max >= r/k (threshold condition unsatisfiable)",
            inputs=inputs, n=n,
        )
    found = _best_point(inputs, float(n), tau, warm_starts, num_starts, trace)
    if found is None:
        return EstimationResult(
            status=STATUS_ABORT, reason="no feasible parameter point found",
            inputs=inputs, n=n,
        )
    eps, point = found
    if eps >= 0.5:
        return EstimationResult(
            status=STATUS_ABORT, reason="best achievable eps_max is not below 1/2",
            inputs=inputs, n=n, eps_max=eps, params=point, tau=point.tau,
        )
    return _result_at(inputs, n, point, eps)


def minimize_n_given_eps(
    inputs: BoundInputs,
    eps_target: float,
    tau: float | None = None,
    n_ceiling: int = N_CEILING_DEFAULT,
    num_starts: int = 64,
    trace: Trace | None = None,
) -> EstimationResult:
    """Smallest n whose optimised eps_max reaches the target.

    Exponential bracketing then bisection over n.  Every parameter point
    found along the way is kept in a warm-start pool, and the pool is also
    evaluated directly at each n, so the effective bound is non-increasing
    in n and the bisection is well-founded.
    """
    if not 0.0 < eps_target < 0.5:
        raise ValueError("eps_target must be in (0, 1/2)")
    if inputs.p_max >= inputs.ratio / inputs.k:
        return EstimationResult(
            status=STATUS_ABORT, reason="p_max >= r/k (threshold condition unsatisfiable)",
            inputs=inputs,
        )
    pool: list[FreeParams] = []

    def eval_at(n: int) -> tuple[float, FreeParams] | None:
        found = _best_point(inputs, float(n), tau, tuple(pool), num_starts, trace)
        if found is None:
            return None
        # the pool is n-independent: keep the best point for later warm starts
        pool.append(found[1])
        return found

    n = 64
    best = eval_at(n)
    while (best is None or best[0] > eps_target) and n < n_ceiling:
        n *= 2
        best = eval_at(n)
    if best is None or best[0] > eps_target:
        return EstimationResult(
            status=STATUS_ABORT,
            reason=f"target not reachable below the n ceiling ({n_ceiling})",
            inputs=inputs,
        )
    lo, hi = n // 2, n
    hi_best = best
    while hi - lo > 1:
        mid = (lo + hi) // 2
        got = eval_at(mid)
        if got is not None and got[0] <= eps_target:
            hi, hi_best = mid, got
        else:
            lo = mid
    eps, point = hi_best
    return _result_at(inputs, hi, point, eps)
