"""The error-mitigation protocol: schedule, baskets, certification, updating.

Pipeline: a uniformly random interleaving of test and computation rounds is
executed under the time-dependent noise schedule; a rolling window gives the
test failure rate at every round; contiguous stretches where that rate stays
under the tolerated level (and which are long enough) become baskets; each
basket is majority-voted, then certified by the resource estimator at its
own size and test proportion; certified baskets update a two-outcome
posterior until the confidence target is met.  If the baskets run out before
the target, a fresh schedule is executed (the noise walk keeps advancing),
up to a repetition cap.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimate import (
    BoundInputs,
    EstimationResult,
    FreeParams,
    minimize_eps_given_n,
    minimize_n_given_eps,
)
from .noise import NoiseSchedule, scale_model
from .rounds import (
    KIND_COMPUTATION,
    KIND_TEST,
    ComputationRoundSpec,
    RoundTranscript,
    TestRoundSpec,
    run_computation_round,
    run_test_round,
)
from .sim import NoiseModel

_SCHEDULE_STREAM = 0x53434845
_ROUND_STREAM = 0x524F554E

VERDICT_TRUE = "true"
VERDICT_FALSE = "false"
VERDICT_ABORT = "abort"

ABORT_NO_BASKETS = "no-baskets"
ABORT_ESTIMATION = "estimation-infeasible"
ABORT_REPETITION_CAP = "repetition-cap"


@dataclass(frozen=True)
class Schedule:
    """A fixed random interleaving of test/computation rounds, in groups."""

    n_total: int
    kinds: np.ndarray  # uint8 per round: 1 = test, 0 = computation
    groups: tuple[tuple[int, int], ...]  # half-open [start, end) per group
    tau: float

    @property
    def n_tests(self) -> int:
        return int(self.kinds.sum())

    @property
    def n_computations(self) -> int:
        return self.n_total - self.n_tests


def make_schedule(
    n_total: int,
    tau: float,
    groups: int,
    rng: np.random.Generator,
    min_group_size: int | None = None,
) -> Schedule:
    """Uniformly random order of round(tau*n) tests among n_total rounds.

    Groups are contiguous, equal-sized batches (remainder to the last); a
    minimum group size can be enforced up front.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be in (0, 1)")
    if groups < 1:
        raise ValueError("need at least one group")
    if n_total < groups:
        raise ValueError("more groups than rounds")
    if min_group_size is not None and n_total < groups * min_group_size:
        raise ValueError(
            f"{groups} group(s) of at least {min_group_size} rounds need "
            f"{groups * min_group_size} rounds, got {n_total}"
        )
    n_tests = round(tau * n_total)
    kinds = np.zeros(n_total, dtype=np.uint8)
    kinds[:n_tests] = 1
    rng.shuffle(kinds)
    size = n_total // groups
    bounds = []
    for g in range(groups):
        start = g * size
        end = (g + 1) * size if g < groups - 1 else n_total
        bounds.append((start, end))
    return Schedule(n_total=n_total, kinds=kinds, groups=tuple(bounds), tau=tau)


def _run_chunk(args) -> list[RoundTranscript]:
    (comp_spec, test_spec, base, kinds_chunk, s_chunk, seed, start, offset) = args
    out = []
    for j, kind in enumerate(kinds_chunk):
        i = start + j
        eff = scale_model(base, float(s_chunk[j])).effective
        rng = np.random.default_rng([seed, _ROUND_STREAM, offset + i])
        if kind == 1:
            out.append(run_test_round(test_spec, eff, rng, round_index=i))
        else:
            out.append(run_computation_round(comp_spec, eff, rng, round_index=i))
    return out


def run_schedule(
    schedule: Schedule,
    comp_spec: ComputationRoundSpec,
    test_spec: TestRoundSpec,
    base_model: NoiseModel,
    noise_schedule: NoiseSchedule,
    seed: int,
    round_offset: int = 0,
    workers: int = 1,
) -> list[RoundTranscript]:
    """Execute every scheduled round under the round-indexed noise scale.

    Round i draws its own generator from (seed, round_offset + i), so the
    transcript stream is reproducible and independent of chunking or worker
    count.  ``round_offset`` positions this schedule on the noise walk's
    absolute clock (repetitions keep advancing it).
    """
    n = schedule.n_total
    s_values = noise_schedule.s_series(n, offset=round_offset)
    if workers <= 1:
        chunk = (comp_spec, test_spec, base_model, schedule.kinds, s_values, seed, 0, round_offset)
        return _run_chunk(chunk)
    bounds = np.linspace(0, n, 4 * workers + 1, dtype=int)
    tasks = [
        (
            comp_spec,
            test_spec,
            base_model,
            schedule.kinds[a:b],
            s_values[a:b],
            seed,
            int(a),
            round_offset,
        )
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    out: list[RoundTranscript] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, tasks):
            out.extend(part)
    return out


# --- rolling statistics and baskets ----------------------------------------


def rolling_failure_rate(
    kinds: np.ndarray,
    failures: np.ndarray,
    window: int,
    groups: Sequence[tuple[int, int]],
) -> tuple[np.ndarray, np.ndarray]:
    """Windowed test failure rate phi_i around every round i.

    The window [i - T/2, i + T/2] is clamped to the stream and intersected
    with round i's group; only test rounds inside it count.  Returns
    (phi, had_tests); windows that contain no test round get phi = 0 and a
    False flag.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    n = len(kinds)
    phi = np.zeros(n, dtype=np.float64)
    had = np.ones(n, dtype=bool)
    half = window // 2
    kinds = np.asarray(kinds)
    failures = np.asarray(failures)
    for start, end in groups:
        tests = (kinds[start:end] == 1).astype(np.int64)
        fails = (failures[start:end] & (kinds[start:end] == 1)).astype(np.int64)
        cum_t = np.concatenate([[0], np.cumsum(tests)])
        cum_f = np.concatenate([[0], np.cumsum(fails)])
        idx = np.arange(end - start)
        lo = np.maximum(idx - half, 0)
        hi = np.minimum(idx + half, end - start - 1)
        t_count = cum_t[hi + 1] - cum_t[lo]
        f_count = cum_f[hi + 1] - cum_f[lo]
        empty = t_count == 0
        t_safe = np.where(empty, 1, t_count)
        phi[start:end] = f_count / t_safe
        had[start:end] = ~empty
    return phi, had


@dataclass
class Basket:
    """A certified-candidate run of consecutive low-noise rounds."""

    group: int
    start: int
    end: int  # half-open
    n_tests: int = 0
    n_computations: int = 0
    failed_tests: int = 0
    majority_sum: int = 0
    vote: int | None = None
    discard_reason: str | None = None
    eps: float | None = None
    phi_threshold: float | None = None
    estimation: EstimationResult | None = None

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def tau(self) -> float:
        return self.n_tests / self.size if self.size else 0.0

    @property
    def test_failure_fraction(self) -> float:
        return self.failed_tests / self.n_tests if self.n_tests else 0.0

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "start": self.start,
            "end": self.end,
            "size": self.size,
            "n_tests": self.n_tests,
            "n_computations": self.n_computations,
            "failed_tests": self.failed_tests,
            "tau": self.tau,
            "test_failure_fraction": self.test_failure_fraction,
            "majority_sum": self.majority_sum,
            "vote": self.vote,
            "discard_reason": self.discard_reason,
            "eps": self.eps,
            "phi_threshold": self.phi_threshold,
        }


def find_baskets(
    phi: np.ndarray,
    p_tilde: float,
    n_expected: int,
    groups: Sequence[tuple[int, int]],
) -> list[Basket]:
    """Maximal runs with phi <= p_tilde inside one group, of size >= N/2."""
    out: list[Basket] = []
    min_size = n_expected / 2.0
    for g, (start, end) in enumerate(groups):
        below = phi[start:end] <= p_tilde
        i = 0
        length = end - start
        while i < length:
            if not below[i]:
                i += 1
                continue
            j = i
            while j < length and below[j]:
                j += 1
            if (j - i) >= min_size:
                out.append(Basket(group=g, start=start + i, end=start + j))
            i = j
    return out


def fill_basket_counts(basket: Basket, kinds: np.ndarray, verdicts: np.ndarray) -> None:
    sl = slice(basket.start, basket.end)
    k = np.asarray(kinds)[sl]
    v = np.asarray(verdicts)[sl]
    basket.n_tests = int((k == 1).sum())
    basket.n_computations = int((k == 0).sum())
    basket.failed_tests = int(((k == 1) & (v == 0)).sum())
    basket.majority_sum = int(v[k == 0].sum())


def basket_vote(basket: Basket) -> int | None:
    """Majority vote over the basket's computation-round decision bits.

    Returns the vote, or None after marking the basket discarded (tie or no
    computation rounds).
    """
    d_j = basket.n_computations
    if d_j == 0:
        basket.discard_reason = "no computation rounds"
        return None
    mu = basket.majority_sum
    if mu * 2 == d_j:
        basket.discard_reason = "tied majority vote"
        return None
    basket.vote = 1 if mu * 2 > d_j else 0
    return basket.vote


def basket_certify(
    basket: Basket,
    p_inherent: float,
    p_tilde: float,
    k: int,
    num_starts: int = 64,
) -> bool:
    """Certify a voted basket with the estimator at its own (n, tau).

    Discards the basket when the estimation aborts, the bound is not below
    1/2, or the observed test failure fraction reaches the returned
    threshold.  On success attaches (eps_j, Phi_j).
    """
    if basket.vote is None:
        raise ValueError("basket must be voted before certification")
    inputs = BoundInputs(k=k, p=p_inherent, p_max=p_tilde)
    result = minimize_eps_given_n(
        inputs, basket.size, tau=basket.tau, num_starts=num_starts
    )
    basket.estimation = result
    if not result.done:
        basket.discard_reason = f"estimation abort: {result.reason}"
        return False
    if result.eps_max >= 0.5:
        basket.discard_reason = "certified bound not below 1/2"
        return False
    if basket.test_failure_fraction >= result.phi:
        basket.discard_reason = "observed failure fraction at or above threshold"
        return False
    basket.eps = result.eps_max
    basket.phi_threshold = result.phi
    return True


# --- Bayesian combination ---------------------------------------------------


@dataclass(frozen=True)
class Posterior:
    """Two-outcome belief state, tracked as log-odds of outcome 1."""

    log_odds: float = 0.0
    updates: int = 0

    @property
    def p_one(self) -> float:
        if self.log_odds >= 0:
            z = math.exp(-self.log_odds)
            return 1.0 / (1.0 + z)
        z = math.exp(self.log_odds)
        return z / (1.0 + z)

    @property
    def p_zero(self) -> float:
        return 1.0 - self.p_one

    def as_pair(self) -> tuple[float, float]:
        return (self.p_zero, self.p_one)


def bayes_update(posterior: Posterior, q_zero: float, q_one: float) -> Posterior:
    """One multiplicative update with the basket's outcome likelihoods.

    Requires q_zero + q_one = 1 with both strictly inside (0, 1): an exact
    0/1 would collapse the posterior irreversibly.
    """
    if not math.isclose(q_zero + q_one, 1.0, abs_tol=1e-9):
        raise ValueError("q values must sum to 1")
    if not (0.0 < q_zero < 1.0 and 0.0 < q_one < 1.0):
        raise ValueError("q values must lie strictly inside (0, 1)")
    return Posterior(
        log_odds=posterior.log_odds + math.log(q_one) - math.log(q_zero),
        updates=posterior.updates + 1,
    )


# --- the full protocol -------------------------------------------------------


@dataclass
class ProtocolOutcome:
    status: str  # "true" | "false" | "abort"
    confidence: float | None
    reason: str | None
    repetitions: int
    baskets: list[Basket] = field(default_factory=list)
    posterior_trail: list[tuple[float, float]] = field(default_factory=list)
    estimation: EstimationResult | None = None
    n_expected: int | None = None
    tau: float | None = None

    @property
    def decided(self) -> bool:
        return self.status in (VERDICT_TRUE, VERDICT_FALSE)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "confidence": self.confidence,
            "reason": self.reason,
            "repetitions": self.repetitions,
            "n_expected": self.n_expected,
            "tau": self.tau,
            "baskets": [b.to_dict() for b in self.baskets],
            "posterior_trail": [list(p) for p in self.posterior_trail],
            "estimation": self.estimation.to_dict() if self.estimation else None,
        }


@dataclass
class ProtocolConfig:
    """Everything drive_protocol needs; see the experiment-config schema."""

    comp_spec: ComputationRoundSpec
    test_spec: TestRoundSpec
    base_model: NoiseModel
    noise_schedule: NoiseSchedule
    n_total: int
    eps_target: float | None = None
    n_expected: int | None = None
    tau: float | None = None
    window: int = 1000
    p_tilde: float = 0.15
    groups: int = 1
    seed: int = 0
    p_inherent: float = 0.0
    max_repetitions: int = 5
    workers: int = 1
    estimator_starts: int = 64

    @property
    def k(self) -> int:
        return self.test_spec.colouring.k


def analyse_transcripts(
    transcripts: Sequence[RoundTranscript],
    config: ProtocolConfig,
    groups: Sequence[tuple[int, int]],
    posterior: Posterior,
    stop_at: float | None,
) -> tuple[list[Basket], Posterior, list[tuple[float, float]]]:
    """Steps 5-8 on one executed schedule: rolling stats, baskets, votes,
    certification and Bayesian updates (early stop at the confidence target).
    Pure function of the transcript stream, so re-running it on persisted
    transcripts replays the identical outcome."""
    kinds = np.fromiter(
        (1 if t.kind == KIND_TEST else 0 for t in transcripts), np.uint8, len(transcripts)
    )
    verdicts = np.fromiter((t.verdict for t in transcripts), np.uint8, len(transcripts))
    phi, _ = rolling_failure_rate(kinds, verdicts == 0, config.window, groups)
    baskets = find_baskets(phi, config.p_tilde, config.n_expected or 0, groups)
    trail: list[tuple[float, float]] = []
    for basket in baskets:
        fill_basket_counts(basket, kinds, verdicts)
        if basket_vote(basket) is None:
            continue
        if not basket_certify(
            basket, config.p_inherent, config.p_tilde, config.k, config.estimator_starts
        ):
            continue
        eps = basket.eps
        q_one = 1.0 - eps if basket.vote == 1 else eps
        posterior = bayes_update(posterior, 1.0 - q_one, q_one)
        trail.append(posterior.as_pair())
        if stop_at is not None and max(posterior.as_pair()) >= stop_at:
            break
    return baskets, posterior, trail


def drive_protocol(
    config: ProtocolConfig,
    transcript_sink: Callable[[int, list[RoundTranscript]], None] | None = None,
) -> ProtocolOutcome:
    """Run the whole protocol and return the decision with its confidence.

    Step 1 sizes the experiment (resource estimation for N, tau, or the
    caller fixes them); steps 2-4 execute a fresh random schedule under the
    advancing noise walk; steps 5-8 analyse it.  Without a confidence target
    a single pass is analysed and the leading outcome returned; with one,
    schedules repeat until the target or the repetition cap is reached.
    """
    inputs = BoundInputs(k=config.k, p=config.p_inherent, p_max=config.p_tilde)
    estimation: EstimationResult | None = None
    tau = config.tau
    n_expected = config.n_expected
    if n_expected is None:
        if config.eps_target is None:
            raise ValueError("need either eps_target or n_expected")
        estimation = minimize_n_given_eps(
            inputs, config.eps_target, tau=tau, num_starts=config.estimator_starts
        )
        if not estimation.done:
            return ProtocolOutcome(
                status=VERDICT_ABORT, confidence=None,
                reason=f"{ABORT_ESTIMATION}: {estimation.reason}",
                repetitions=0, estimation=estimation,
            )
        n_expected = estimation.n
        tau = tau if tau is not None else estimation.tau
    else:
        estimation = minimize_eps_given_n(
            inputs, n_expected, tau=tau, num_starts=config.estimator_starts
        )
        if not estimation.done:
            return ProtocolOutcome(
                status=VERDICT_ABORT, confidence=None,
                reason=f"{ABORT_ESTIMATION}: {estimation.reason}",
                repetitions=0, estimation=estimation,
            )
        tau = tau if tau is not None else estimation.tau

    stop_at = 1.0 - config.eps_target if config.eps_target is not None else None
    posterior = Posterior()
    all_baskets: list[Basket] = []
    trail: list[tuple[float, float]] = []
    repetitions = 0
    saw_basket = False
    max_reps = config.max_repetitions if config.eps_target is not None else 1
    while repetitions < max_reps:
        rep = repetitions
        schedule_rng = np.random.default_rng([config.seed, _SCHEDULE_STREAM, rep])
        schedule = make_schedule(
            config.n_total, tau, config.groups, schedule_rng,
            min_group_size=n_expected,
        )
        offset = rep * config.n_total
        transcripts = run_schedule(
            schedule, config.comp_spec, config.test_spec, config.base_model,
            config.noise_schedule, config.seed, round_offset=offset,
            workers=config.workers,
        )
        if transcript_sink is not None:
            transcript_sink(rep, transcripts)
        baskets, posterior, rep_trail = analyse_transcripts(
            transcripts, _with_expected(config, n_expected), schedule.groups,
            posterior, stop_at,
        )
        all_baskets.extend(baskets)
        trail.extend(rep_trail)
        saw_basket = saw_basket or any(b.eps is not None for b in baskets)
        repetitions += 1
        p0, p1 = posterior.as_pair()
        if stop_at is not None and max(p0, p1) >= stop_at:
            break
        if stop_at is None:
            break

    p0, p1 = posterior.as_pair()
    decided = posterior.updates > 0 and (
        stop_at is None or max(p0, p1) >= stop_at
    )
    if decided and max(p0, p1) > 0.5:
        status = VERDICT_TRUE if p1 > p0 else VERDICT_FALSE
        return ProtocolOutcome(
            status=status, confidence=max(p0, p1), reason=None,
            repetitions=repetitions, baskets=all_baskets,
            posterior_trail=trail, estimation=estimation,
            n_expected=n_expected, tau=tau,
        )
    reason = ABORT_REPETITION_CAP if saw_basket else ABORT_NO_BASKETS
    return ProtocolOutcome(
        status=VERDICT_ABORT, confidence=None, reason=reason,
        repetitions=repetitions, baskets=all_baskets,
        posterior_trail=trail, estimation=estimation,
        n_expected=n_expected, tau=tau,
    )


def _with_expected(config: ProtocolConfig, n_expected: int) -> ProtocolConfig:
    if config.n_expected == n_expected:
        return config
    return dataclasses.replace(config, n_expected=n_expected)
