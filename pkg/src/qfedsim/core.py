"""Statevector simulation: states, gates, expectations, sampling, noise.

Conventions, fixed project-wide:
  - Qubit ordering is little-endian: qubit 0 is the least significant bit of
    the basis index, so basis state |j> assigns qubit q the bit (j >> q) & 1.
  - States are complex amplitude vectors of length 2**n_qubits, unit norm.
  - The only circuit gates are Ry rotations and CX; depolarizing noise is
    realized as stochastic Pauli insertion (quantum trajectories), keeping the
    engine a pure statevector simulator.

The private kernel functions operate in place on arrays of shape (..., 2**n),
acting on the last axis; the public operations wrap them with immutable
QuantumState values. Batched evaluation (model module) reuses the same
kernels on 2-D arrays, so there is exactly one implementation of each gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import CapacityError, ConfigError, ContractError, ShapeError

MAX_QUBITS = 20

_SQRT1_2 = np.sqrt(0.5)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
_PAULI_BY_LABEL = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}
_PAULI_BY_INDEX = (PAULI_X, PAULI_Y, PAULI_Z)

# Basis changes mapping the X/Y eigenbases onto the computational basis:
# measuring P on |psi> is measuring Z on ROT_P |psi>.
_ROT_X = _SQRT1_2 * np.array([[1, 1], [1, -1]], dtype=np.complex128)
_ROT_Y = _SQRT1_2 * np.array([[1, -1j], [1, 1j]], dtype=np.complex128)


@dataclass(frozen=True)
class QuantumState:
    """Immutable n-qubit pure state; amplitudes indexed little-endian."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.n_qubits < 1:
            raise CapacityError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if amps.shape != (1 << self.n_qubits,):
            raise ShapeError(
                f"amplitude vector of length {amps.shape} does not match "
                f"{self.n_qubits} qubits (expected {1 << self.n_qubits})"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise ContractError(f"state norm {norm!r} is not 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits


@dataclass(frozen=True)
class Observable:
    """Hermitian operator as a real-weighted sum of Pauli strings.

    Each term is (coefficient, pauli_string); pauli_string[q] in "IXYZ" is the
    factor acting on qubit q. Real coefficients keep the sum Hermitian.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(c), str(s)) for c, s in self.terms)
        if not terms:
            raise ShapeError("observable needs at least one term")
        width = len(terms[0][1])
        for coef, string in terms:
            if not np.isfinite(coef):
                raise ContractError(f"non-finite coefficient {coef!r}")
            if len(string) != width:
                raise ShapeError(
                    f"pauli string {string!r} has {len(string)} labels, expected {width}"
                )
            if any(ch not in "IXYZ" for ch in string):
                raise ContractError(f"invalid pauli label in {string!r}")
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][1])


@dataclass(frozen=True)
class NoiseSpec:
    """Per-gate depolarizing noise: with probability epsilon, a uniformly
    chosen Pauli (X, Y or Z) hits each qubit a gate touched."""

    epsilon: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @classmethod
    def off(cls) -> "NoiseSpec":
        return cls(0.0, False)

    @property
    def active(self) -> bool:
        return self.enabled and self.epsilon > 0.0


@dataclass(frozen=True)
class ShotSpec:
    """Measurement budget: a finite shot count M, or None for exact mode."""

    shots: int | None = None

    def __post_init__(self):
        if self.shots is not None and self.shots < 1:
            raise ConfigError(f"shots must be >= 1 when finite, got {self.shots}")

    @classmethod
    def exact(cls) -> "ShotSpec":
        return cls(None)

    @property
    def is_exact(self) -> bool:
        return self.shots is None


# ---------------------------------------------------------------------------
# In-place kernels on raw amplitude arrays of shape (..., 2**n), last axis.

def apply_one_qubit_kernel(amps: np.ndarray, qubit: int, mat: np.ndarray) -> None:
    """Apply a 2x2 matrix to one qubit of every state in `amps`, in place."""
    dim = amps.shape[-1]
    stride = 1 << qubit
    view = amps.reshape(amps.shape[:-1] + (dim >> (qubit + 1), 2, stride))
    lo = view[..., 0, :].copy()
    hi = view[..., 1, :]
    view[..., 0, :] = mat[0, 0] * lo + mat[0, 1] * hi
    view[..., 1, :] = mat[1, 0] * lo + mat[1, 1] * hi


@lru_cache(maxsize=None)
def _cx_permutation(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    flipped = idx ^ (1 << target)
    return np.where((idx >> control) & 1 == 1, flipped, idx)


def apply_cx_kernel(amps: np.ndarray, n_qubits: int, control: int, target: int) -> None:
    """Apply CX in place; a pure index permutation (self-inverse)."""
    perm = _cx_permutation(n_qubits, control, target)
    amps[...] = amps[..., perm]


def depolarize_kernel(amps: np.ndarray, qubit: int, epsilon: float,
                      rng: np.random.Generator) -> None:
    """One trajectory sample of the depolarizing channel on a batch, in place.

    Draws one uniform and one Pauli choice per row (the choice is drawn even
    for rows that take no error, keeping the draw count data-independent).
    """
    rows = amps.shape[0]
    u = rng.random(rows)
    which = rng.integers(0, 3, size=rows)
    hit = u < epsilon
    if not hit.any():
        return
    for k in range(3):
        sel = hit & (which == k)
        if sel.any():
            sub = amps[sel]
            apply_one_qubit_kernel(sub, qubit, _PAULI_BY_INDEX[k])
            amps[sel] = sub


# ---------------------------------------------------------------------------
# Public operations on immutable states.

def zero_state(n_qubits: int) -> QuantumState:
    """The all-zeros computational basis state |0...0>."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise CapacityError(
            f"n_qubits must lie in [1, {MAX_QUBITS}], got {n_qubits}"
        )
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return QuantumState(n_qubits, amps)


def _check_qubit(state: QuantumState, qubit: int) -> None:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits} qubits")


def apply_ry(state: QuantumState, qubit: int, angle: float) -> QuantumState:
    """Rotate one qubit by Ry(angle) = [[cos a/2, -sin a/2], [sin a/2, cos a/2]]."""
    _check_qubit(state, qubit)
    half = 0.5 * angle
    c, s = np.cos(half), np.sin(half)
    mat = np.array([[c, -s], [s, c]], dtype=np.complex128)
    amps = state.amplitudes.copy()
    apply_one_qubit_kernel(amps, qubit, mat)
    return QuantumState(state.n_qubits, amps)


def apply_cx(state: QuantumState, control: int, target: int) -> QuantumState:
    """Flip `target` on the basis states where `control` is 1."""
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise IndexError(f"control and target must differ, both were {control}")
    amps = state.amplitudes.copy()
    apply_cx_kernel(amps, state.n_qubits, control, target)
    return QuantumState(state.n_qubits, amps)


def probabilities(state: QuantumState) -> np.ndarray:
    """Computational-basis outcome probabilities |amplitude|^2."""
    amps = state.amplitudes
    return (amps.real * amps.real + amps.imag * amps.imag)


def expectation(state: QuantumState, obs: Observable) -> float:
    """<psi| H |psi> for a Pauli-sum H; O(2^n) per non-identity term."""
    if obs.n_qubits != state.n_qubits:
        raise ShapeError(
            f"observable on {obs.n_qubits} qubits does not match "
            f"state on {state.n_qubits}"
        )
    total = 0.0
    for coef, string in obs.terms:
        vec = state.amplitudes.copy()
        for q, label in enumerate(string):
            if label != "I":
                apply_one_qubit_kernel(vec, q, _PAULI_BY_LABEL[label])
        total += coef * np.vdot(state.amplitudes, vec).real
    return float(total)


def normalized_probabilities(raw: np.ndarray) -> np.ndarray:
    """Clip float dust and renormalize so sampling sees an exact distribution."""
    probs = np.clip(raw, 0.0, None)
    return probs / probs.sum(axis=-1, keepdims=True)


def sample_counts(state: QuantumState, shots: ShotSpec,
                  rng: np.random.Generator) -> np.ndarray:
    """Histogram of `shots` i.i.d. computational-basis measurements."""
    if shots.is_exact:
        raise ContractError("sample_counts needs finite shots; exact mode has no histogram")
    probs = normalized_probabilities(probabilities(state))
    return rng.multinomial(shots.shots, probs)


def apply_depolarizing(state: QuantumState, qubit: int, noise: NoiseSpec,
                       rng: np.random.Generator) -> QuantumState:
    """One trajectory sample of the single-qubit depolarizing channel.

    With probability 1 - epsilon the state is returned unchanged; otherwise a
    uniformly chosen X, Y or Z is applied to `qubit`. One uniform draw is
    consumed per call, plus one integer draw when an error fires.
    """
    _check_qubit(state, qubit)
    if not noise.active:
        return state
    if rng.random() >= noise.epsilon:
        return state
    which = int(rng.integers(0, 3))
    amps = state.amplitudes.copy()
    apply_one_qubit_kernel(amps, qubit, _PAULI_BY_INDEX[which])
    return QuantumState(state.n_qubits, amps)


def _parity_signs(n_qubits: int, mask: int) -> np.ndarray:
    """(-1)^popcount(j & mask) over all basis indices j."""
    signs = np.ones(1 << n_qubits)
    for q in range(n_qubits):
        if (mask >> q) & 1:
            signs *= 1.0 - 2.0 * ((np.arange(1 << n_qubits) >> q) & 1)
    return signs


def estimate_expectation(state: QuantumState, obs: Observable, shots: ShotSpec,
                         rng: np.random.Generator) -> float:
    """Shot estimate of <H>: each Pauli term is measured in its own eigenbasis
    with M fresh shots (distinct Pauli bases are incompatible measurements, so
    shots are never shared across terms). Identity terms contribute exactly.
    """
    if shots.is_exact:
        return expectation(state, obs)
    if obs.n_qubits != state.n_qubits:
        raise ShapeError(
            f"observable on {obs.n_qubits} qubits does not match "
            f"state on {state.n_qubits}"
        )
    total = 0.0
    for coef, string in obs.terms:
        mask = 0
        vec = None
        for q, label in enumerate(string):
            if label == "I":
                continue
            mask |= 1 << q
            if label == "X":
                vec = state.amplitudes.copy() if vec is None else vec
                apply_one_qubit_kernel(vec, q, _ROT_X)
            elif label == "Y":
                vec = state.amplitudes.copy() if vec is None else vec
                apply_one_qubit_kernel(vec, q, _ROT_Y)
        if mask == 0:
            total += coef
            continue
        if vec is None:
            vec = state.amplitudes
        probs = normalized_probabilities(vec.real * vec.real + vec.imag * vec.imag)
        counts = rng.multinomial(shots.shots, probs)
        signs = _parity_signs(state.n_qubits, mask)
        total += coef * float(counts @ signs) / shots.shots
    return float(total)
