"""
Entangling individual attack: Eve couples every slot state to a 9-dimensional ancilla.

Eve's isometry sends the signal slot ``|j>`` (j = 3, 4, 5) to
``sum_l |l> (x) |E_{j,l}>`` with ``l`` in ``{j-1, j, j+1}``. Bob's slot
statistics give the QBER, his interferometer gives the contrast, and Eve's
ancilla, conditioned on Bob validating the detection, is what she measures
after the bit reconciliation.

The curve of Eve's best information against the QBER is found numerically
with a multi-start penalized Powell search polished by SLSQP.
"""

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .attacks import improved_intercept_resend_point
from .exceptions import InvalidStateError
from .exceptions import IsometryError
from .exceptions import QKDError
from .exceptions import UndefinedQBERError
from .exceptions import ValidationError
from .utils.parallel import run_jobs
from .utils.parallel import spawn_seeds

logger = logging.getLogger(__name__)

SIGNAL_SLOTS = (3, 4, 5)
OUTPUT_SLOTS = (2, 3, 4, 5, 6)
ANCILLA_DIMENSION = 9
ISOMETRY_TOLERANCE = 1e-8
STATE_TOLERANCE = 1e-8

# bit 0 occupies slots {3, 4}, bit 1 slots {4, 5}; indexes into SIGNAL_SLOTS
BIT_INPUTS = ((0, 1), (1, 2))
# validated slots 3 and 5 and the improved protocol's selected slots 4 and 5,
# as indexes into OUTPUT_SLOTS
VALIDATED = (1, 3)
CORRECT = (1, 3)
WRONG = (3, 1)
SELECTED = (2, 3)

# ancilla states used by the hand-built couplings; the layout is mirror
# symmetric under index reversal
_UNTOUCHED = 4
_TAG_LOW = 1
_TAG_HIGH = 7
_SIDE_PAIR = (0, 8)


def _embed(couplings: np.ndarray) -> np.ndarray:
    columns = np.zeros((len(SIGNAL_SLOTS), len(OUTPUT_SLOTS), couplings.shape[-1]), dtype=couplings.dtype)
    for i in range(len(SIGNAL_SLOTS)):
        columns[i, i : i + 3] = couplings[i]
    return columns


def _extract(columns: np.ndarray) -> np.ndarray:
    return np.stack([columns[i, i : i + 3] for i in range(len(SIGNAL_SLOTS))])


def isometry_residual(couplings: np.ndarray) -> float:
    """Largest deviation of the column Gram matrix from the identity."""
    flat = _embed(couplings).reshape(len(SIGNAL_SLOTS), -1)
    gram = flat.conj() @ flat.T
    return float(np.max(np.abs(gram - np.eye(len(SIGNAL_SLOTS)))))


def structured_gram_schmidt(couplings: np.ndarray) -> np.ndarray:
    """
    Orthonormalize Eve's columns without leaving the nearest-neighbour pattern.

    Each column is corrected only inside its own three output slots: the
    correction is the combination of the earlier columns, restricted to that
    window, that removes every overlap with them.

    Args:
        couplings: Array of shape (3, 3, d) indexed by signal slot, output
            offset (j-1, j, j+1) and ancilla component

    Returns:
        Couplings of an isometry with the same support pattern

    Raises:
        IsometryError: If a column collapses to zero
    """
    columns = _embed(np.asarray(couplings))
    if not np.iscomplexobj(columns):
        columns = columns.astype(float)
    for i in range(columns.shape[0]):
        column = columns[i]
        if i:
            previous = columns[:i]
            restricted = np.zeros_like(previous)
            restricted[:, i : i + 3] = previous[:, i : i + 3]
            basis = restricted.reshape(i, -1).T
            gram = basis.conj().T @ basis
            overlaps = previous.reshape(i, -1).conj() @ column.reshape(-1)
            coefficients = np.linalg.lstsq(gram, overlaps, rcond=None)[0]
            column = column - (basis @ coefficients).reshape(column.shape)
        norm = np.linalg.norm(column)
        if norm < 1e-12:
            raise IsometryError(f"column for slot {SIGNAL_SLOTS[i]} vanished during orthonormalization", residual=1.0)
        columns[i] = column / norm
    return _extract(columns)


def parameter_count(complex_mode: bool = False, symmetric: bool = False) -> int:
    size = len(SIGNAL_SLOTS) * 3 * ANCILLA_DIMENSION
    if symmetric:
        size = size // 2 + 1
    return 2 * size if complex_mode else size


def _expand_symmetric(half: np.ndarray) -> np.ndarray:
    # mirror symmetry (slot j -> 8 - j, ancilla index reversed) makes the
    # flattened couplings a palindrome
    return np.concatenate([half, half[:-1][::-1]])


@dataclass(frozen=True, eq=False)
class EveUnitaryParams:
    """
    Eve's coupling vectors E_{j,l}.

    ``couplings[i, o]`` is E_{j, j-1+o} for ``j = SIGNAL_SLOTS[i]``. Real
    couplings are the default; complex arrays switch on the complex mode.
    """

    couplings: np.ndarray
    residual: float = field(init=False)

    def __post_init__(self):
        couplings = np.array(self.couplings)
        if couplings.ndim != 3 or couplings.shape[:2] != (3, 3):
            raise ValidationError(f"couplings must have shape (3, 3, d) (got {couplings.shape}).")
        couplings.setflags(write=False)
        object.__setattr__(self, "couplings", couplings)
        residual = isometry_residual(couplings)
        object.__setattr__(self, "residual", residual)
        if residual > ISOMETRY_TOLERANCE:
            raise IsometryError(f"Eve's map is not an isometry (residual {residual:.3e})", residual=residual)

    @property
    def complex_mode(self) -> bool:
        return bool(np.iscomplexobj(self.couplings))

    @property
    def ancilla_dimension(self) -> int:
        return self.couplings.shape[-1]

    def columns(self) -> np.ndarray:
        """Images of |3>, |4>, |5> over output slots 2..6, shape (3, 5, d)."""
        return _embed(self.couplings)

    def to_vector(self, symmetric: bool = False) -> np.ndarray:
        flat = self.couplings.reshape(-1)
        if symmetric:
            flat = ((flat + flat[::-1]) / 2)[: flat.size // 2 + 1]
        if self.complex_mode:
            return np.concatenate([flat.real, flat.imag])
        return flat.astype(float)

    @classmethod
    def from_couplings(cls, couplings, orthonormalize: bool = True) -> "EveUnitaryParams":
        couplings = np.asarray(couplings)
        if orthonormalize:
            couplings = structured_gram_schmidt(couplings)
        return cls(couplings)

    @classmethod
    def from_vector(cls, vector, complex_mode: bool = False, symmetric: bool = False) -> "EveUnitaryParams":
        """Build from an optimizer vector; the result is orthonormalized."""
        vector = np.asarray(vector, dtype=float)
        expected = parameter_count(complex_mode, symmetric)
        if vector.size != expected:
            raise ValidationError(f"expected {expected} parameters, got {vector.size}")
        if complex_mode:
            half = vector.size // 2
            vector = vector[:half] + 1j * vector[half:]
        if symmetric:
            vector = _expand_symmetric(vector)
        return cls.from_couplings(vector.reshape(3, 3, ANCILLA_DIMENSION))

    @classmethod
    def identity(cls) -> "EveUnitaryParams":
        couplings = np.zeros((3, 3, ANCILLA_DIMENSION))
        couplings[:, 1, _UNTOUCHED] = 1.0
        return cls(couplings)

    @classmethod
    def scrambler(cls) -> "EveUnitaryParams":
        """Moves slot 3 and 5 to slot 4 and splits slot 4 evenly between 3 and 5."""
        couplings = np.zeros((3, 3, ANCILLA_DIMENSION))
        couplings[0, 2, _TAG_LOW] = 1.0
        couplings[1, 0, 2] = math.sqrt(0.5)
        couplings[1, 2, 6] = math.sqrt(0.5)
        couplings[2, 0, _TAG_HIGH] = 1.0
        return cls(couplings)

    @classmethod
    def from_intercept_resend(cls, m: float, x: float) -> "EveUnitaryParams":
        """
        Coherent version of the maximum-coherence intercept-resend attack.

        With amplitude sqrt(1 - m) the photon passes untouched; with
        amplitude sqrt(m) Eve records the slot in an orthogonal ancilla state
        and the photon leaves in the three-slot state of spread ``x``.
        """
        for name, value in (("m", m), ("x", x)):
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1] (got {value}).")
        tags = np.zeros((3, ANCILLA_DIMENSION))
        tags[0, _TAG_LOW] = 1.0
        tags[1, list(_SIDE_PAIR)] = math.sqrt(0.5)
        tags[2, _TAG_HIGH] = 1.0
        untouched = np.zeros(ANCILLA_DIMENSION)
        untouched[_UNTOUCHED] = 1.0

        side = math.sqrt(m * x / 2)
        centre = math.sqrt(m * (1 - x))
        couplings = np.zeros((3, 3, ANCILLA_DIMENSION))
        for i in range(3):
            couplings[i, 0] = side * tags[i]
            couplings[i, 1] = math.sqrt(1 - m) * untouched + centre * tags[i]
            couplings[i, 2] = side * tags[i]
        return cls(couplings)


@dataclass(frozen=True, eq=False)
class EntanglingOutcome:
    """
    What Bob and Eve see after the entangling attack.

    ``slot_probabilities[b, k]`` is the probability that a photon carrying
    bit ``b`` is found in ``OUTPUT_SLOTS[k]``. ``eve_states[b]`` is Eve's
    ancilla state given bit ``b`` and a validated detection at Bob.
    """

    Q: float
    selected_contrast: float
    raw_contrast: float
    validation_probability: float
    slot_probabilities: np.ndarray
    eve_states: np.ndarray
    priors: np.ndarray


def simulate_entangled_attack(params: EveUnitaryParams) -> EntanglingOutcome:
    """
    Apply Eve's isometry to both bit states.

    Args:
        params: Eve's couplings

    Returns:
        EntanglingOutcome

    Raises:
        UndefinedQBERError: If one of the bits is never validated
    """
    columns = params.columns()
    fields = np.stack([columns[list(inputs)].sum(axis=0) for inputs in BIT_INPUTS]) / math.sqrt(2)
    probabilities = np.sum(np.abs(fields) ** 2, axis=-1)

    # interferometer: the long arm brings slot k-1 on top of slot k
    overlaps = np.einsum("bkd,bkd->bk", fields[:, :-1].conj(), fields[:, 1:])
    raw = abs(overlaps.sum()) / 2
    selected_overlap = sum(overlaps[b, SELECTED[b] - 1] for b in range(2))
    selected_intensity = sum(probabilities[b, SELECTED[b]] + probabilities[b, SELECTED[b] - 1] for b in range(2))
    selected = 2 * abs(selected_overlap) / selected_intensity if selected_intensity > 0 else 0.0

    validated = probabilities[:, list(VALIDATED)].sum(axis=1)
    if np.any(validated < 1e-15):
        raise UndefinedQBERError("one of the bits is never detected in slot 3 or 5")
    errors = sum(probabilities[b, WRONG[b]] for b in range(2))

    states = []
    for b in range(2):
        kets = fields[b, list(VALIDATED)]
        rho = np.einsum("ki,kj->ij", kets, kets.conj()) / validated[b]
        states.append(rho)

    return EntanglingOutcome(
        Q=float(errors / validated.sum()),
        selected_contrast=float(min(selected, 1.0)),
        raw_contrast=float(min(raw, 1.0)),
        validation_probability=float(validated.mean()),
        slot_probabilities=probabilities,
        eve_states=np.stack(states),
        priors=validated / validated.sum(),
    )


# Eve's information
# ------------------------------------------------------------------------------

@dataclass(frozen=True)
class EveInformation:
    holevo: float
    discrimination: float


def _check_density(rho: np.ndarray, name: str) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"{name} is not a square matrix (shape {rho.shape})")
    if np.max(np.abs(rho - rho.conj().T)) > STATE_TOLERANCE:
        raise InvalidStateError(f"{name} is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1) > STATE_TOLERANCE:
        raise InvalidStateError(f"{name} has trace {trace}")
    lowest = np.linalg.eigvalsh(rho)[0]
    if lowest < -STATE_TOLERANCE:
        raise InvalidStateError(f"{name} has a negative eigenvalue {lowest}")
    return rho


def von_neumann_entropy(rho: np.ndarray) -> float:
    eigenvalues = np.linalg.eigvalsh(rho)
    eigenvalues = eigenvalues[eigenvalues > 1e-15]
    return float(-np.sum(eigenvalues * np.log2(eigenvalues)))


def _shannon(p: np.ndarray) -> float:
    p = p[p > 1e-15]
    return float(-np.sum(p * np.log2(p)))


def measurement_information(reduced: np.ndarray, priors: np.ndarray, basis: np.ndarray) -> float:
    """Mutual information between the bit and the outcome of a projective measurement."""
    outcome = np.einsum("ik,bij,jk->bk", basis.conj(), reduced, basis).real
    joint = np.clip(priors[:, None] * outcome, 0.0, None)
    return _shannon(priors) + _shannon(joint.sum(axis=0)) - _shannon(joint.ravel())


def _rotation(generator: np.ndarray, size: int, complex_mode: bool) -> np.ndarray:
    upper = np.triu_indices(size, 1)
    if complex_mode:
        n_pairs = upper[0].size
        skew = np.zeros((size, size), dtype=complex)
        skew[upper] = generator[:n_pairs] + 1j * generator[n_pairs : 2 * n_pairs]
        skew = skew - skew.conj().T
        skew[np.diag_indices(size)] = 1j * generator[2 * n_pairs :]
    else:
        skew = np.zeros((size, size))
        skew[upper] = generator
        skew = skew - skew.T
    return expm(skew)


def _best_measurement(reduced: np.ndarray, priors: np.ndarray, complex_mode: bool) -> float:
    size = reduced.shape[-1]
    starts = [
        np.linalg.eigh(priors[0] * reduced[0] - priors[1] * reduced[1])[1],
        np.linalg.eigh(reduced[0])[1],
        np.linalg.eigh(reduced[1])[1],
    ]
    best = max(measurement_information(reduced, priors, basis) for basis in starts)
    if size < 2:
        return best
    n_generators = size * size if complex_mode else size * (size - 1) // 2
    for start in starts:
        result = minimize(
            lambda g, start=start: -measurement_information(
                reduced,
                priors,
                start @ _rotation(g, size, complex_mode),
            ),
            np.zeros(n_generators),
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 400 * n_generators},
        )
        best = max(best, -float(result.fun))
    return best


def eve_information(rho0, rho1, priors=(0.5, 0.5)) -> EveInformation:
    """
    Eve's information about the bit from her two conditional ancilla states.

    The Holevo quantity bounds any measurement from above. The
    discrimination value is the information of the best projective
    measurement found on the support of the states, starting from the
    eigenbasis of ``p0 rho0 - p1 rho1`` and of each state.

    Args:
        rho0: Eve's state given bit 0
        rho1: Eve's state given bit 1
        priors: Probabilities of the two bits

    Returns:
        EveInformation in bits

    Raises:
        InvalidStateError: If either matrix is not a density operator
    """
    rho0 = _check_density(rho0, "rho0")
    rho1 = _check_density(rho1, "rho1")
    if rho0.shape != rho1.shape:
        raise InvalidStateError(f"state shapes differ: {rho0.shape} and {rho1.shape}")
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (2,) or np.any(priors < 0) or not math.isclose(priors.sum(), 1.0, abs_tol=1e-12):
        raise ValidationError(f"priors must be two probabilities summing to one (got {priors}).")

    average = priors[0] * rho0 + priors[1] * rho1
    holevo = von_neumann_entropy(average) - priors[0] * von_neumann_entropy(rho0) - priors[1] * von_neumann_entropy(rho1)
    holevo = float(np.clip(holevo, 0.0, 1.0))

    eigenvalues, eigenvectors = np.linalg.eigh(average)
    support = eigenvectors[:, eigenvalues > 1e-12]
    if support.shape[1] == 0:
        return EveInformation(holevo=0.0, discrimination=0.0)
    reduced = np.stack([support.conj().T @ rho @ support for rho in (rho0, rho1)])
    complex_mode = bool(np.iscomplexobj(reduced) and np.max(np.abs(reduced.imag)) > 1e-14)
    if not complex_mode:
        reduced = reduced.real
    discrimination = _best_measurement(reduced, priors, complex_mode)
    return EveInformation(holevo=holevo, discrimination=float(np.clip(discrimination, 0.0, holevo)))


# Optimization
# ------------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    """Budget and mode of the entangling-attack search."""

    starts: int = 20
    max_evaluations: int = 4000
    polish_iterations: int = 200
    penalty: float = 1e4
    qber_tolerance: float = 1e-4
    complex_mode: bool = False
    symmetric: bool = False
    seed: int = 20070101

    def __post_init__(self):
        if self.starts < 1:
            raise ValidationError(f"starts must be at least 1 (got {self.starts}).")
        if self.max_evaluations < 1 or self.polish_iterations < 0:
            raise ValidationError("max_evaluations must be positive and polish_iterations non-negative.")
        if self.penalty <= 0 or self.qber_tolerance <= 0:
            raise ValidationError("penalty and qber_tolerance must be positive.")


@dataclass(frozen=True, eq=False)
class EntanglingCurvePoint:
    """
    Best entangling attack found at one QBER.

    ``I_AE`` is the discrimination value, ``I_AE_holevo`` the Holevo bound of
    the same couplings. Infeasible points carry NaN information values.
    """

    Q: float
    delta_constraint: float
    I_AE: float
    I_AE_holevo: float
    selected_contrast: float
    qber_residual: float
    isometry_residual: float
    starts: int
    evaluations: int
    feasible: bool
    params: Optional[EveUnitaryParams] = field(default=None, repr=False)

    def as_row(self) -> dict:
        return {
            "Q": self.Q,
            "delta": self.delta_constraint,
            "I_AE": self.I_AE,
            "I_AE_holevo": self.I_AE_holevo,
            "selected_contrast": self.selected_contrast,
            "qber_residual": self.qber_residual,
            "isometry_residual": self.isometry_residual,
            "starts": self.starts,
            "evaluations": self.evaluations,
            "feasible": self.feasible,
        }


class _Evaluator:
    """Caches the last evaluated vector; SLSQP asks for objective and constraints separately."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.evaluations = 0
        self._key: Optional[bytes] = None
        self._value: Optional[Tuple[float, float, float]] = None

    def __call__(self, vector: np.ndarray) -> Optional[Tuple[float, float, float]]:
        key = np.asarray(vector, dtype=float).tobytes()
        if key == self._key:
            return self._value
        self.evaluations += 1
        try:
            params = EveUnitaryParams.from_vector(vector, self.config.complex_mode, self.config.symmetric)
            outcome = simulate_entangled_attack(params)
            rho = outcome.eve_states
            p = outcome.priors
            average = p[0] * rho[0] + p[1] * rho[1]
            holevo = von_neumann_entropy(average) - p[0] * von_neumann_entropy(rho[0]) - p[1] * von_neumann_entropy(rho[1])
            value = (outcome.Q, outcome.selected_contrast, holevo)
        except QKDError:
            value = None
        self._key, self._value = key, value
        return value


def _start_vectors(q: float, delta: float, config: OptimizerConfig, seed: np.random.SeedSequence) -> List[np.ndarray]:
    size = parameter_count(config.complex_mode, config.symmetric)
    starts = []
    try:
        m, x = improved_intercept_resend_point(q, delta)
        emulation = EveUnitaryParams.from_intercept_resend(m, x)
        vector = emulation.to_vector(config.symmetric)
        if config.complex_mode:
            vector = np.concatenate([vector, np.zeros_like(vector)])
        starts.append(vector)
    except QKDError as e:
        logger.debug(f"no intercept-resend start at Q = {q}: {e}")
    for stream in seed.spawn(config.starts - len(starts)):
        starts.append(np.random.default_rng(stream).normal(size=size))
    return starts


def _optimize_point(task) -> EntanglingCurvePoint:
    q, delta, config, seed = task
    evaluate = _Evaluator(config)
    contrast_floor = 1 - delta

    def penalized(vector):
        value = evaluate(vector)
        if value is None:
            return 1e6
        Q, contrast, holevo = value
        shortfall = max(0.0, contrast_floor - contrast)
        return -holevo + config.penalty * ((Q - q) ** 2 + shortfall**2)

    def feasible(value) -> bool:
        return value is not None and abs(value[0] - q) <= config.qber_tolerance and value[1] >= contrast_floor - 1e-9

    starts = _start_vectors(q, delta, config, seed)
    candidates = list(starts)
    for start in starts:
        result = minimize(
            penalized,
            start,
            method="Powell",
            options={"maxfev": config.max_evaluations, "xtol": 1e-6, "ftol": 1e-10},
        )
        candidates.append(result.x)

    candidates.sort(key=penalized)
    if config.polish_iterations:
        polished = minimize(
            lambda v: -evaluate(v)[2] if evaluate(v) is not None else 1e6,
            candidates[0],
            method="SLSQP",
            constraints=[
                {"type": "eq", "fun": lambda v: evaluate(v)[0] - q if evaluate(v) is not None else 1.0},
                {"type": "ineq", "fun": lambda v: evaluate(v)[1] - contrast_floor if evaluate(v) is not None else -1.0},
            ],
            options={"maxiter": config.polish_iterations, "ftol": 1e-10},
        )
        candidates.append(polished.x)

    scored = [(vector, evaluate(vector)) for vector in candidates]
    valid = [(vector, value) for vector, value in scored if feasible(value)]
    if not valid:
        _, best_value = min(scored, key=lambda item: penalized(item[0]))
        logger.warning(f"entangling attack infeasible at Q = {q:.4f}, delta = {delta:.4f}")
        residual = abs(best_value[0] - q) if best_value is not None else math.nan
        return EntanglingCurvePoint(
            Q=q,
            delta_constraint=delta,
            I_AE=math.nan,
            I_AE_holevo=math.nan,
            selected_contrast=best_value[1] if best_value is not None else math.nan,
            qber_residual=residual,
            isometry_residual=math.nan,
            starts=len(starts),
            evaluations=evaluate.evaluations,
            feasible=False,
        )

    informed = []
    for vector, _ in valid:
        params = EveUnitaryParams.from_vector(vector, config.complex_mode, config.symmetric)
        outcome = simulate_entangled_attack(params)
        information = eve_information(outcome.eve_states[0], outcome.eve_states[1], outcome.priors)
        informed.append((information, params, outcome))
    # the intercept-resend start stays a candidate, so I_AE never drops below it
    information, params, outcome = max(informed, key=lambda item: item[0].discrimination)
    logger.debug(
        f"Q = {q:.4f}, delta = {delta:.4f}: I_AE {information.discrimination:.4f} "
        f"(Holevo {information.holevo:.4f}) after {evaluate.evaluations} evaluations",
    )
    return EntanglingCurvePoint(
        Q=q,
        delta_constraint=delta,
        I_AE=information.discrimination,
        I_AE_holevo=information.holevo,
        selected_contrast=outcome.selected_contrast,
        qber_residual=abs(outcome.Q - q),
        isometry_residual=params.residual,
        starts=len(starts),
        evaluations=evaluate.evaluations,
        feasible=True,
        params=params,
    )


def optimize_curve(
    q_grid,
    delta: float,
    config: OptimizerConfig | None = None,
    jobs: int = 1,
) -> List[EntanglingCurvePoint]:
    """
    Eve's best entangling attack along a QBER grid.

    For each Q the Holevo information of Eve is maximized over the couplings
    subject to QBER = Q and selected contrast >= 1 - delta. One start is the
    coherent intercept-resend attack at the same (Q, delta), the others are
    random. Of the feasible candidates the one with the largest
    discrimination value is reported. The reported values are lower bounds
    on what an optimal attack achieves, not proofs of optimality.

    Args:
        q_grid: QBER values in (0, 0.5)
        delta: Coherence loss Bob tolerates
        config: Optimizer budget and mode
        jobs: Worker processes over grid points

    Returns:
        One EntanglingCurvePoint per grid value, in grid order
    """
    config = config or OptimizerConfig()
    q_values = [float(q) for q in q_grid]
    for q in q_values:
        if not 0 < q < 0.5:
            raise ValidationError(f"QBER grid values must lie in (0, 0.5) (got {q}).")
    if delta < 0:
        raise ValidationError(f"delta must be non-negative (got {delta}).")

    seeds = spawn_seeds(config.seed, len(q_values))
    tasks = [(q, float(delta), config, seed) for q, seed in zip(q_values, seeds)]
    logger.info(f"Optimizing entangling attack on {len(tasks)} QBER values at delta = {delta}")
    points = run_jobs(_optimize_point, tasks, jobs)
    infeasible = sum(not point.feasible for point in points)
    if infeasible:
        logger.warning(f"{infeasible} of {len(points)} entangling points are infeasible")
    return points
