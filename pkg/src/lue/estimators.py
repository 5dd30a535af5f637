"""Linear unbiased estimators: constraints, atomic constructions, and the affine basis.

A linear estimator is a sparse map from exposures to weights; its value is
w(e_obs) * Y_obs.  Unbiasedness for the effect of the first component at its
maximum level is a linear constraint system on the weights (one row per
parameter), and the whole solution set is spanned affinely by a small family
of two-term and four-term inverse-probability estimators plus zero
estimators.  Weights are stored against exposures, never allocations, which
rules out estimators whose weights depend on other units' exposures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .design import ExposureDistribution, uniform_distribution
from .exposure import (
    Exposure,
    ExposureSpec,
    ParameterIndex,
    enumerate_exposures,
    exposure_positions,
    indicator_matrix,
    indicator_vector,
    parameter_order,
    target_position,
)

UNBIASED_TOL = 1e-10
DECOMPOSE_TOL = 1e-8
RANK_RTOL = 1e-10


@dataclass
class LinearEstimator:
    """Sparse exposure->weight map estimating the first component's maximum effect."""

    spec: ExposureSpec
    weights: dict[Exposure, float]
    name: str = ""
    target: ParameterIndex = field(default=None)  # defaults to theta_{1,m_1}

    def __post_init__(self):
        cleaned = {}
        for e, w in self.weights.items():
            e = self.spec.validate_exposure(e)
            if w != 0.0:
                cleaned[e] = float(w)
        self.weights = cleaned
        if self.target is None:
            self.target = ParameterIndex("effect", 1, self.spec.levels[0])

    def support(self) -> set[Exposure]:
        return set(self.weights)

    def weight(self, e: Exposure) -> float:
        return self.weights.get(tuple(e), 0.0)

    def as_vector(self, exposures=None) -> np.ndarray:
        """Dense weight vector in canonical (or given) exposure order."""
        if exposures is None:
            positions = exposure_positions(self.spec)
        else:
            positions = {e: j for j, e in enumerate(exposures)}
        vec = np.zeros(len(positions))
        for e, w in self.weights.items():
            vec[positions[e]] = w
        return vec

    def to_text(self) -> str:
        """One ``e1,...,eK<TAB>weight`` line per support exposure, canonical order."""
        lines = []
        for e in enumerate_exposures(self.spec):
            w = self.weight(e)
            if w != 0.0:
                lines.append(f"{','.join(str(v) for v in e)}\t{w!r}")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, spec: ExposureSpec, text: str, name: str = "") -> "LinearEstimator":
        weights = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            key, value = line.split("\t")
            weights[tuple(int(v) for v in key.split(","))] = float(value)
        return cls(spec, weights, name=name)


def evaluate_estimator(est: LinearEstimator, observed_exposure: Exposure,
                       observed_outcome: float) -> float:
    """w(e_obs) * Y_obs; zero when the observed exposure is outside the support."""
    return est.weight(observed_exposure) * observed_outcome


@dataclass(frozen=True)
class ConstraintMatrix:
    """Dense unbiasedness constraints: rows are parameters, columns exposures.

    Entry (t, e) is p(e) when parameter t contributes to Y(e) and 0 otherwise,
    so the baseline row is exactly the probability vector.  An estimator is
    unbiased iff C w equals the target vector (1 at the estimand row).
    """

    spec: ExposureSpec
    matrix: np.ndarray
    exposures: tuple[Exposure, ...]
    parameters: tuple[ParameterIndex, ...]

    def target_vector(self) -> np.ndarray:
        t = np.zeros(self.spec.num_parameters)
        t[target_position(self.spec)] = 1.0
        return t


def constraint_matrix(spec: ExposureSpec, probs: ExposureDistribution) -> ConstraintMatrix:
    """Assemble the unbiasedness constraint system for the given exposure probabilities."""
    exposures = tuple(enumerate_exposures(spec))
    mat = indicator_matrix(spec, exposures) * probs.vector()
    return ConstraintMatrix(spec, mat, exposures, tuple(parameter_order(spec)))


def check_unbiased(est: LinearEstimator, probs: ExposureDistribution) -> float:
    """Max-norm residual of the unbiasedness constraints; 0 means unbiased."""
    c = constraint_matrix(est.spec, probs)
    return float(np.abs(c.matrix @ est.as_vector(c.exposures) - c.target_vector()).max())


def check_zero_expectation(est: LinearEstimator, probs: ExposureDistribution) -> float:
    """Max-norm residual of C w against the all-zero target (zero estimators)."""
    c = constraint_matrix(est.spec, probs)
    return float(np.abs(c.matrix @ est.as_vector(c.exposures)).max())


@lru_cache(maxsize=None)
def _target_parameter(spec: ExposureSpec) -> ParameterIndex:
    return ParameterIndex("effect", 1, spec.levels[0])


def _ht_combination(spec, probs, terms, name) -> LinearEstimator:
    """Materialize signed inverse-probability terms into an estimator.

    The builders construct term exposures in range and pairwise distinct, so
    this skips the constructor's re-validation.
    """
    if probs is None:
        probs = uniform_distribution(spec)
    weights: dict[Exposure, float] = {}
    for sign, e in terms:
        weights[e] = sign / probs[e]
    est = object.__new__(LinearEstimator)
    est.spec = spec
    est.weights = weights
    est.name = name
    est.target = _target_parameter(spec)
    return est


def build_two_term_alue(spec: ExposureSpec, fixed_tail: tuple[int, ...],
                        probs: ExposureDistribution | None = None) -> LinearEstimator:
    """Two-term estimator contrasting (m_1, tail) against (0, tail).

    Weights are +1/p and -1/p on the two exposures; unbiased for any positive
    exposure probabilities (uniform when ``probs`` is omitted).
    """
    tail = tuple(int(v) for v in fixed_tail)
    if len(tail) != spec.num_components - 1:
        raise ValueError(f"tail {tail} must fix components 2..{spec.num_components}")
    m1 = spec.levels[0]
    spec.validate_exposure((m1,) + tail)
    terms = [(+1, (m1,) + tail), (-1, (0,) + tail)]
    return _ht_combination(spec, probs, terms, name=f"two_term{tail}")


def build_four_term_alue(spec: ExposureSpec, e: Exposure,
                         probs: ExposureDistribution | None = None) -> LinearEstimator:
    """Four-term estimator identified by an exposure with intermediate first component.

    Requires 0 < e_1 < m_1 and a nonzero tail.  The second pair of terms
    zeroes the first nonzero tail component, so the telescoping sum leaves
    only the estimand.
    """
    e = spec.validate_exposure(e)
    m1 = spec.levels[0]
    if not 0 < e[0] < m1:
        raise ValueError(f"first component of {e} must be strictly between 0 and {m1}")
    nonzero = [k for k in range(1, spec.num_components) if e[k] != 0]
    if not nonzero:
        raise ValueError(f"exposure {e} needs a nonzero tail component")
    reduced = list(e)
    reduced[nonzero[0]] = 0
    reduced = tuple(reduced)
    terms = [
        (+1, (m1,) + e[1:]),
        (-1, e),
        (+1, (e[0],) + reduced[1:]),
        (-1, (0,) + reduced[1:]),
    ]
    return _ht_combination(spec, probs, terms, name=f"four_term{e}")


def build_zero_estimator(spec: ExposureSpec, e: Exposure,
                         probs: ExposureDistribution | None = None) -> LinearEstimator:
    """Zero-expectation four-term combination identified by a baseline-first exposure.

    Requires e_1 = 0 and at least two nonzero tail components; the middle
    terms split the tail into the first nonzero component versus the rest.
    """
    e = spec.validate_exposure(e)
    if e[0] != 0:
        raise ValueError(f"zero estimators need first component 0, got {e}")
    nonzero = [k for k in range(1, spec.num_components) if e[k] != 0]
    if len(nonzero) < 2:
        raise ValueError(f"exposure {e} needs at least two nonzero tail components")
    k_star = nonzero[0]
    only = [0] * spec.num_components
    only[k_star] = e[k_star]
    rest = list(e)
    rest[k_star] = 0
    terms = [
        (+1, e),
        (-1, tuple(only)),
        (-1, tuple(rest)),
        (+1, (0,) * spec.num_components),
    ]
    return _ht_combination(spec, probs, terms, name=f"zero{e}")


@lru_cache(maxsize=None)
def identifying_exposures(spec: ExposureSpec) -> tuple[tuple[Exposure, ...], tuple[Exposure, ...]]:
    """Identifying exposures of the basis in canonical order.

    Returns (malue identifiers, zero identifiers): intermediate-first-component
    exposures with nonzero tails followed by maximum-first-component
    exposures, then baseline-first exposures with two or more nonzero tail
    components.
    """
    m1 = spec.levels[0]
    malue_ids = []
    zero_ids = []
    for e in enumerate_exposures(spec):
        tail_nonzero = sum(1 for v in e[1:] if v != 0)
        if e[0] == m1:
            malue_ids.append(e)
        elif 0 < e[0] < m1 and tail_nonzero >= 1:
            malue_ids.append(e)
        elif e[0] == 0 and tail_nonzero >= 2:
            zero_ids.append(e)
    return tuple(malue_ids), tuple(zero_ids)


def build_malue_set(spec: ExposureSpec,
                    probs: ExposureDistribution | None = None) -> list[LinearEstimator]:
    """The affine-independent monotonic atomic estimators, one per identifying exposure."""
    if probs is None:
        probs = uniform_distribution(spec)
    m1 = spec.levels[0]
    out = []
    for e in identifying_exposures(spec)[0]:
        if e[0] == m1:
            out.append(build_two_term_alue(spec, e[1:], probs))
        else:
            out.append(build_four_term_alue(spec, e, probs))
    return out


def build_zero_estimators(spec: ExposureSpec,
                          probs: ExposureDistribution | None = None) -> list[LinearEstimator]:
    """All zero estimators in canonical order."""
    if probs is None:
        probs = uniform_distribution(spec)
    return [build_zero_estimator(spec, e, probs) for e in identifying_exposures(spec)[1]]


def build_affine_basis(spec: ExposureSpec,
                       probs: ExposureDistribution | None = None) -> list[LinearEstimator]:
    """Affine basis of the unbiased-estimator set: the atomic family plus zero estimators."""
    if probs is None:
        probs = uniform_distribution(spec)
    return build_malue_set(spec, probs) + build_zero_estimators(spec, probs)


def malue_count(spec: ExposureSpec) -> int:
    """Closed-form size of the atomic family."""
    tail = 1
    for m in spec.levels[1:]:
        tail *= m + 1
    return tail + (spec.levels[0] - 1) * (tail - 1)


def zero_count(spec: ExposureSpec) -> int:
    """Closed-form number of zero estimators."""
    tail = 1
    for m in spec.levels[1:]:
        tail *= m + 1
    return tail - 1 - sum(spec.levels[1:])


def basis_count(spec: ExposureSpec) -> int:
    """Closed-form basis size: exposures minus effect parameters."""
    return spec.num_exposures - sum(spec.levels)


def lue_dimension(spec: ExposureSpec) -> int:
    """Dimension of the unbiased-estimator solution set."""
    return spec.num_exposures - sum(spec.levels) - 1


def basis_matrix(basis: list[LinearEstimator], exposures=None) -> np.ndarray:
    """Stack of basis weight vectors, one row per estimator."""
    if exposures is None:
        positions = exposure_positions(basis[0].spec)
    else:
        positions = {e: j for j, e in enumerate(exposures)}
    mat = np.zeros((len(basis), len(positions)))
    for i, b in enumerate(basis):
        for e, w in b.weights.items():
            mat[i, positions[e]] = w
    return mat


def affine_rank(basis: list[LinearEstimator]) -> int:
    """Rank of the weight vectors augmented with a constant-1 coefficient column."""
    mat = basis_matrix(basis)
    aug = np.hstack([mat, np.ones((mat.shape[0], 1))])
    return int(np.linalg.matrix_rank(aug, rtol=RANK_RTOL))


def affine_rank_is_full(basis: list[LinearEstimator]) -> bool:
    """Exact full-rank certificate for a canonically ordered basis.

    Restricted to its identifying exposures, the basis weight matrix must be
    triangular with nonzero diagonal (each member is the last one whose
    support contains its identifier), which certifies full affine rank with
    no floating-point tolerance.  Any other pattern falls back to the SVD
    rank.
    """
    spec = basis[0].spec
    malue_ids, zero_ids = identifying_exposures(spec)
    ids = malue_ids + zero_ids
    if len(ids) == len(basis):
        id_position = {e: i for i, e in enumerate(ids)}
        triangular = True
        diagonal_nonzero = 0
        for j, b in enumerate(basis):
            for e, w in b.weights.items():
                i = id_position.get(e)
                if i is None:
                    continue
                if i < j:
                    triangular = False
                    break
                if i == j and w != 0.0:
                    diagonal_nonzero += 1
            if not triangular:
                break
        if triangular and diagonal_nonzero == len(basis):
            return True
    return affine_rank(basis) == len(basis)


def decompose_in_basis(est: LinearEstimator, basis: list[LinearEstimator],
                       probs: ExposureDistribution | None = None) -> np.ndarray:
    """Coefficients reproducing ``est`` from the basis.

    The coefficients on the unbiased members must sum to one (they carry the
    estimand), while zero-expectation members enter as free displacements:
    their expectation vanishes, so they cannot contribute to the
    normalization.  Raises when the input is biased or the residual exceeds
    tolerance.
    """
    if probs is None:
        probs = uniform_distribution(est.spec)
    residual = check_unbiased(est, probs)
    if residual > UNBIASED_TOL:
        raise ValueError(f"estimator is not unbiased (constraint residual {residual:.3e})")
    c = constraint_matrix(est.spec, probs)
    target = c.target_vector()
    normalized = np.zeros(len(basis))
    for i, member in enumerate(basis):
        image = c.matrix @ member.as_vector(c.exposures)
        if np.abs(image - target).max() < UNBIASED_TOL:
            normalized[i] = 1.0
        elif np.abs(image).max() >= UNBIASED_TOL:
            raise ValueError(
                f"basis member {member.name or i} is neither unbiased nor zero-expectation"
            )
    exposures = enumerate_exposures(est.spec)
    mat = basis_matrix(basis, exposures)
    a = np.vstack([mat.T, normalized])
    b = np.concatenate([est.as_vector(exposures), [1.0]])
    coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
    fit = float(np.abs(a @ coeffs - b).max())
    if fit > DECOMPOSE_TOL:
        raise ValueError(f"decomposition residual {fit:.3e} exceeds {DECOMPOSE_TOL:.1e}")
    return coeffs


def sample_random_lue(spec: ExposureSpec, probs: ExposureDistribution,
                      rng: np.random.Generator, scale: float = 1.0) -> LinearEstimator:
    """Random unbiased estimator: particular solution plus constraint-null-space noise."""
    c = constraint_matrix(spec, probs)
    w0, *_ = np.linalg.lstsq(c.matrix, c.target_vector(), rcond=None)
    null = null_space_basis(c.matrix)
    w = w0
    if null.shape[1]:
        w = w0 + null @ rng.normal(scale=scale, size=null.shape[1])
    return LinearEstimator(spec, dict(zip(c.exposures, w)), name="random_lue")


def null_space_basis(matrix: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space, columns as directions."""
    _, s, vt = np.linalg.svd(matrix)
    tol = (s[0] if s.size else 0.0) * RANK_RTOL
    rank = int((s > tol).sum())
    return vt[rank:].T


@dataclass(frozen=True)
class SupportCheck:
    valid: bool
    reason: str | None = None

    def __bool__(self):
        return self.valid


def check_support_condition(candidate_support, spec: ExposureSpec,
                            probs: ExposureDistribution) -> SupportCheck:
    """Decide whether a support can carry a minimum-integrated-variance estimator.

    Valid iff (a) the constraints restricted to the support are solvable, so
    an unbiased estimator with that support exists, and (b) no indicator
    vector of an exposure outside the support lies in the span of the
    support's indicator vectors.  Both are rank computations with a relative
    singular-value threshold.
    """
    support = [spec.validate_exposure(e) for e in candidate_support]
    if not support:
        return SupportCheck(False, "empty support")
    c = constraint_matrix(spec, probs)
    cols = [c.exposures.index(e) for e in support]
    restricted = c.matrix[:, cols]
    target = c.target_vector()
    rank = np.linalg.matrix_rank(restricted, rtol=RANK_RTOL)
    rank_aug = np.linalg.matrix_rank(np.hstack([restricted, target[:, None]]), rtol=RANK_RTOL)
    if rank_aug > rank:
        return SupportCheck(False, "no unbiased estimator with this support")
    span = np.vstack([indicator_vector(spec, e) for e in support]).T
    support_set = set(support)
    for e in c.exposures:
        if e in support_set:
            continue
        v = indicator_vector(spec, e)
        coeff, *_ = np.linalg.lstsq(span, v, rcond=None)
        if np.abs(span @ coeff - v).max() < RANK_RTOL:
            return SupportCheck(False, f"indicator of exposure {e} lies in the support span")
    return SupportCheck(True)
