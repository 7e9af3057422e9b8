"""Dense statevector simulation with Monte-Carlo (trajectory) noise.

The gate set is intentionally small: Hadamard, Z-rotation, CZ, Pauli flips
and destructive computational-basis measurement, which is everything a
measurement pattern needs.  Noise is unravelled per trajectory: each noisy
site either applies a uniformly random non-identity Pauli on its support or
does nothing, and readout noise flips the classical result.

Qubit ``k`` corresponds to bit ``k`` of the amplitude index (little-endian).
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-10

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Non-identity single-qubit Pauli labels, and the 15 non-identity two-qubit ones.
_PAULI_1Q = ("X", "Y", "Z")
_PAULI_2Q = tuple(
    a + b for a in "IXYZ" for b in "IXYZ" if not (a == "I" and b == "I")
)


class SimulationError(RuntimeError):
    """Internal inconsistency in the simulator (e.g. zero-norm collapse)."""


@dataclass(frozen=True)
class NoiseModel:
    """Per-site error probabilities for trajectory noise.

    ``single_qubit_depolarizing`` / ``two_qubit_depolarizing`` apply per gate,
    ``readout_flip`` per measured qubit (classical flip) and
    ``state_prep_flip`` per prepared qubit (X before the preparation
    rotations).
    """

    single_qubit_depolarizing: float = 0.0
    two_qubit_depolarizing: float = 0.0
    readout_flip: float = 0.0
    state_prep_flip: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def as_dict(self) -> dict[str, float]:
        return {
            "single_qubit_depolarizing": self.single_qubit_depolarizing,
            "two_qubit_depolarizing": self.two_qubit_depolarizing,
            "readout_flip": self.readout_flip,
            "state_prep_flip": self.state_prep_flip,
        }

    @property
    def is_noiseless(self) -> bool:
        return all(v == 0.0 for v in self.as_dict().values())

    def readout_prob(self, qubit: int) -> float:
        """Readout flip probability for ``qubit``.

        Uniform by default; subclasses may override per qubit (useful for
        fault-injection tests).
        """
        return self.readout_flip

    @classmethod
    def from_json(cls, path: str | Path) -> "NoiseModel":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(**{k: float(raw[k]) for k in cls().as_dict()})

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class PauliError:
    """A concrete Pauli fault applied during one trajectory."""

    qubits: tuple[int, ...]
    labels: str

    def __post_init__(self) -> None:
        if len(self.qubits) != len(self.labels):
            raise ValueError("label count must equal target count")
        if any(c not in "IXYZ" for c in self.labels):
            raise ValueError(f"invalid Pauli labels {self.labels!r}")


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def norm_error(self) -> float:
        """|<psi|psi> - 1| for invariant checks."""
        return abs(float(np.vdot(self.amplitudes, self.amplitudes).real) - 1.0)


def new_state(num_qubits: int) -> StateVector:
    """All-zeros register |0...0> on ``num_qubits`` qubits."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.zeros(2**num_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def product_state(qubit_states: list[np.ndarray]) -> StateVector:
    """Tensor product of single-qubit states, qubit 0 first (little-endian)."""
    n = len(qubit_states)
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"need 1..{MAX_QUBITS} qubit states, got {n}")
    amps = np.asarray(qubit_states[0], dtype=np.complex128)
    for q in qubit_states[1:]:
        # outer product with the new qubit as the most significant factor
        # keeps qubit k on index bit k
        amps = np.multiply.outer(np.asarray(q, dtype=np.complex128), amps).reshape(-1)
    return StateVector(n, amps)


def plus_state(angle: float) -> np.ndarray:
    """Single-qubit |+_angle> = (|0> + e^{i angle}|1>)/sqrt(2)."""
    return np.array([_INV_SQRT2, _INV_SQRT2 * cmath.exp(1j * angle)])


def basis_state(bit: int) -> np.ndarray:
    return np.array([1.0 - bit, float(bit)], dtype=np.complex128)


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.num_qubits}-qubit state")


def _split(state: StateVector, qubit: int) -> np.ndarray:
    """View with axis 1 indexing ``qubit`` (shape: high bits, 2, low bits)."""
    n = state.num_qubits
    return state.amplitudes.reshape(2 ** (n - 1 - qubit), 2, 2**qubit)


def apply_h(state: StateVector, qubit: int) -> StateVector:
    _check_qubit(state, qubit)
    view = _split(state, qubit)
    a = view[:, 0, :] + view[:, 1, :]
    view[:, 1, :] *= -1.0
    view[:, 1, :] += view[:, 0, :]
    view[:, 0, :] = a
    state.amplitudes *= _INV_SQRT2
    return state


def apply_rz(state: StateVector, qubit: int, angle: float) -> StateVector:
    """diag(1, e^{i angle}) on ``qubit`` (global-phase convention)."""
    _check_qubit(state, qubit)
    if angle != 0.0:
        _split(state, qubit)[:, 1, :] *= cmath.exp(1j * angle)
    return state


def apply_cz(state: StateVector, qubit_a: int, qubit_b: int) -> StateVector:
    _check_qubit(state, qubit_a)
    _check_qubit(state, qubit_b)
    if qubit_a == qubit_b:
        raise ValueError("CZ requires two distinct qubits")
    hi, lo = max(qubit_a, qubit_b), min(qubit_a, qubit_b)
    n = state.num_qubits
    view = state.amplitudes.reshape(
        2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2**lo
    )
    view[:, 1, :, 1, :] *= -1.0
    return state


def apply_pauli(state: StateVector, error: PauliError) -> StateVector:
    for qubit, label in zip(error.qubits, error.labels):
        _check_qubit(state, qubit)
        if label == "I":
            continue
        view = _split(state, qubit)
        if label == "Z":
            view[:, 1, :] *= -1.0
            continue
        tmp = view[:, 0, :].copy()
        view[:, 0, :] = view[:, 1, :]
        view[:, 1, :] = tmp
        if label == "Y":
            view[:, 0, :] *= -1j
            view[:, 1, :] *= 1j
    return state


def born_probability(state: StateVector, qubit: int) -> float:
    """Probability of outcome 1 on ``qubit``."""
    _check_qubit(state, qubit)
    slab = _split(state, qubit)[:, 1, :]
    return float(np.real(np.einsum("ij,ij->", slab, np.conj(slab))))


def measure_z(state: StateVector, qubit: int, rng: np.random.Generator) -> int:
    """Sample a computational-basis outcome and collapse in place.

    The measured qubit is left in the observed basis state.
    """
    p_one = born_probability(state, qubit)
    outcome = 1 if rng.random() < p_one else 0
    p_branch = p_one if outcome else 1.0 - p_one
    if p_branch <= 1e-15:
        raise SimulationError(
            f"collapse onto zero-norm branch (qubit {qubit}, outcome {outcome})"
        )
    view = _split(state, qubit)
    view[:, 1 - outcome, :] = 0.0
    state.amplitudes *= 1.0 / math.sqrt(p_branch)
    return outcome


def measure_xy(
    state: StateVector,
    qubit: int,
    angle: float,
    rng: np.random.Generator | None = None,
    *,
    uniform: float | None = None,
    remove: bool = False,
) -> int:
    """Destructive measurement in the basis {|+_angle>, |-_angle>}.

    Trajectory-identical to ``apply_rz(-angle)`` then ``apply_h`` then
    :func:`measure_z`, fused into one pass.  ``uniform`` lets callers supply
    a pre-drawn uniform variate instead of a generator.  With ``remove`` the
    measured qubit is dropped from the register (higher qubits shift down
    one position), which keeps long measurement cascades cheap.
    """
    _check_qubit(state, qubit)
    top = qubit == state.num_qubits - 1
    if top:
        half = state.amplitudes.shape[0] // 2
        a0 = state.amplitudes[:half]
        a1 = state.amplitudes[half:]
        cross_raw = complex(np.vdot(a0, a1))
    else:
        view = _split(state, qubit)
        a0 = view[:, 0, :]
        a1 = view[:, 1, :]
        cross_raw = complex(np.einsum("ij,ij->", np.conj(a0), a1))
    phase = cmath.exp(-1j * angle)
    cross = phase * cross_raw
    p_one = min(1.0, max(0.0, 0.5 - cross.real))
    if uniform is None:
        if rng is None:
            raise ValueError("measure_xy needs a generator or a pre-drawn uniform")
        uniform = rng.random()
    outcome = 1 if uniform < p_one else 0
    p_branch = p_one if outcome else 1.0 - p_one
    if p_branch <= 1e-15:
        raise SimulationError(
            f"collapse onto zero-norm branch (qubit {qubit}, outcome {outcome})"
        )
    scale = 1.0 / math.sqrt(2.0 * p_branch)
    factor = phase if outcome == 0 else -phase
    if remove and top:
        # survivor overwrites the (contiguous) upper half in place
        a1 *= factor
        a1 += a0
        a1 *= scale
        state.amplitudes = a1
        state.num_qubits -= 1
        return outcome
    survivor = a1 * factor
    survivor += a0
    survivor *= scale
    if remove:
        state.amplitudes = survivor.reshape(-1)
        state.num_qubits -= 1
        return outcome
    view[:, outcome, :] = survivor
    view[:, 1 - outcome, :] = 0.0
    return outcome


def apply_noise(
    state: StateVector,
    model: NoiseModel,
    site: tuple[str, tuple[int, ...]],
    rng: np.random.Generator,
) -> PauliError | None:
    """Maybe apply the trajectory fault for one site; returns what was applied.

    Site kinds: ``prep`` (X flip before preparation rotations), ``gate1``
    (uniform X/Y/Z) and ``gate2`` (uniform over the 15 non-identity two-qubit
    Paulis).  Readout noise acts on classical bits; see :func:`flip_readout`.
    """
    kind, qubits = site
    if kind == "prep":
        if rng.random() < model.state_prep_flip:
            error = PauliError(tuple(qubits), "X" * len(qubits))
            apply_pauli(state, error)
            return error
        return None
    if kind == "gate1":
        if rng.random() < model.single_qubit_depolarizing:
            error = PauliError(tuple(qubits), _PAULI_1Q[rng.integers(3)])
            apply_pauli(state, error)
            return error
        return None
    if kind == "gate2":
        if rng.random() < model.two_qubit_depolarizing:
            error = PauliError(tuple(qubits), _PAULI_2Q[rng.integers(15)])
            apply_pauli(state, error)
            return error
        return None
    raise ValueError(f"unknown noise site kind {kind!r}")


def flip_readout(
    bit: int, model: NoiseModel, qubit: int, rng: np.random.Generator
) -> int:
    """Classical readout error on a freshly measured bit."""
    if rng.random() < model.readout_prob(qubit):
        return bit ^ 1
    return bit
