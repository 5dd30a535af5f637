"""Outcome generation, the five estimator families, and integrated-MSE computation.

The harness targets the average interference effect on a directed network:
for every unit, the contrast between all in-neighbors treated and none
treated.  Potential outcomes are additive by default; the interaction model
adds a direct-by-interference term that breaks additivity by a controlled
amount, and the dilated model makes all parameters perfectly correlated with
the baseline.  Integrated MSE is the squared error of the per-allocation
estimate against each draw's true average effect, averaged over parameter
draws, with the allocation expectation taken exactly (full enumeration) or
over a shared Monte-Carlo sample.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .design import (
    BernoulliDesign,
    ExposureDistribution,
    allocation_matrix,
    bernoulli_exposure_distribution,
    exposure_distribution_exact,
)
from .estimators import LinearEstimator
from .mivlue import PriorSpec, identity_prior, solve_mivlue
from .networks import Network, gen_erdos_renyi_directed, gen_k_regular_directed

ESTIMATOR_NAMES = ("HT0", "HT1", "HTAvg", "MInd", "MDil")
MDIL_RIDGE = 1e-8
IMSE_DECOMPOSITION_TOL = 1e-9

# Sub-stream labels hung off (master_seed, draw): changing the interaction
# level must not disturb the common parameters or the allocation sample.
_STREAM_COMMON = 0
_STREAM_INTERACTION = 1
_STREAM_ALLOCATIONS = 2
_STREAM_NETWORK = 3


@dataclass
class UnitParameters:
    """Potential-outcome parameters of one unit.

    ``interference[d - 1]`` is the effect of exactly d treated in-neighbors;
    ``interaction`` is absent exactly when additivity holds.
    """

    alpha: float
    direct: float
    interference: np.ndarray
    interaction: np.ndarray | None = None

    def __post_init__(self):
        self.interference = np.asarray(self.interference, dtype=float)
        if self.interaction is not None:
            self.interaction = np.asarray(self.interaction, dtype=float)
            if self.interaction.shape != self.interference.shape:
                raise ValueError("interaction effects must match the interference length")

    @property
    def degree(self) -> int:
        return len(self.interference)


@dataclass(frozen=True)
class OutcomeModel:
    """How unit parameters are drawn: independent, dilated, or interaction."""

    kind: str
    mu1: float = 0.0
    eta1: float = 1.0
    delta1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("independent", "dilated", "interaction"):
            raise ValueError(f"unknown outcome model kind {self.kind!r}")
        if self.kind == "interaction" and self.delta1 < 0:
            raise ValueError("interaction level must be nonnegative")


def sample_parameters(network: Network, model: OutcomeModel, seed) -> list[UnitParameters]:
    """Draw parameters for every unit, mutually independent, deterministic in ``seed``.

    Independent: baseline and direct effect standard normal, interference
    effect at treated degree d centered at (d/d_i) mu1.  Dilated: direct and
    interference effects are exact multiples of the baseline.  Interaction:
    the independent draw plus interaction effects centered at (d/d_i) delta1
    with unit variance, degenerate to exactly zero when delta1 is zero.
    Interaction noise comes from a separate stream so the shared parameters
    are bit-identical across interaction levels.
    """
    degrees = network.in_degrees
    rng_common = np.random.default_rng(np.random.SeedSequence([*_as_words(seed), _STREAM_COMMON]))
    rng_inter = np.random.default_rng(
        np.random.SeedSequence([*_as_words(seed), _STREAM_INTERACTION])
    )
    out = []
    for i in range(network.n):
        d_i = int(degrees[i])
        scale = np.arange(1, d_i + 1) / d_i if d_i else np.zeros(0)
        if model.kind == "dilated":
            alpha = rng_common.normal()
            params = UnitParameters(alpha, alpha, scale * model.eta1 * alpha)
        else:
            alpha = rng_common.normal()
            direct = rng_common.normal()
            interference = scale * model.mu1 + rng_common.normal(size=d_i)
            interaction = None
            if model.kind == "interaction" and model.delta1 > 0:
                interaction = scale * model.delta1 + rng_inter.normal(size=d_i)
            params = UnitParameters(alpha, direct, interference, interaction)
        out.append(params)
    return out


def _as_words(seed) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


def potential_outcome(params: UnitParameters, e) -> float:
    """Outcome at exposure (treated degree, own treatment) for one unit."""
    d, z = (int(v) for v in e)
    if not 0 <= d <= params.degree:
        raise ValueError(f"treated degree {d} out of range 0..{params.degree}")
    y = params.alpha + params.direct * z
    if d > 0:
        y += params.interference[d - 1]
        if params.interaction is not None and z:
            y += params.interaction[d - 1]
    return float(y)


def unit_exposure_distribution(design, network: Network, unit: int) -> ExposureDistribution:
    if isinstance(design, BernoulliDesign):
        return bernoulli_exposure_distribution(int(network.in_degrees[unit]), design.p_treat)
    return exposure_distribution_exact(design, "network_interference", network, unit)


def included_units(network: Network) -> list[int]:
    """Units whose interference estimand exists: positive in-degree."""
    return [i for i in range(network.n) if network.in_degrees[i] >= 1]


def build_estimator_family(name: str, network: Network, design,
                           eta1: float = 1.0) -> dict[int, LinearEstimator]:
    """Per-unit estimators for one family; degree-0 units are excluded.

    HT0/HT1 are the two-term inverse-probability estimators on untreated and
    treated exposures, HTAvg their mean; MInd solves the optimal-weight
    problem with independent standard-normal priors and MDil with the
    dilated prior (rank one plus a small ridge to keep every outcome
    variance positive).
    """
    if name not in ESTIMATOR_NAMES:
        raise ValueError(f"unknown estimator family {name!r}; expected one of {ESTIMATOR_NAMES}")
    family = {}
    for unit in included_units(network):
        d_i = int(network.in_degrees[unit])
        dist = unit_exposure_distribution(design, network, unit)
        spec = dist.spec
        if name == "HT0":
            weights = {(d_i, 0): 1.0 / dist[(d_i, 0)], (0, 0): -1.0 / dist[(0, 0)]}
            est = LinearEstimator(spec, weights, name=f"HT0[{unit}]")
        elif name == "HT1":
            weights = {(d_i, 1): 1.0 / dist[(d_i, 1)], (0, 1): -1.0 / dist[(0, 1)]}
            est = LinearEstimator(spec, weights, name=f"HT1[{unit}]")
        elif name == "HTAvg":
            weights = {
                (d_i, 0): 0.5 / dist[(d_i, 0)],
                (0, 0): -0.5 / dist[(0, 0)],
                (d_i, 1): 0.5 / dist[(d_i, 1)],
                (0, 1): -0.5 / dist[(0, 1)],
            }
            est = LinearEstimator(spec, weights, name=f"HTAvg[{unit}]")
        elif name == "MInd":
            est = solve_mivlue(spec, dist, identity_prior(spec)).estimator
            est.name = f"MInd[{unit}]"
        else:  # MDil
            u = np.concatenate([[1.0], np.arange(1, d_i + 1) / d_i * eta1, [1.0]])
            cov = np.outer(u, u) + MDIL_RIDGE * np.eye(spec.num_parameters)
            est = solve_mivlue(spec, dist, PriorSpec(cov)).estimator
            est.name = f"MDil[{unit}]"
        family[unit] = est
    return family


def true_average_effect(network: Network, params: list[UnitParameters]) -> float:
    """Mean full-neighborhood interference effect over units with positive degree."""
    units = included_units(network)
    if not units:
        raise ValueError("every unit has in-degree 0; the average estimand is undefined")
    return float(np.mean([params[i].interference[-1] for i in units]))


def estimate_average_effect(family: dict[int, LinearEstimator], network: Network,
                            allocation, params: list[UnitParameters]) -> float:
    """Average of unit-level estimates over units with positive in-degree."""
    units = included_units(network)
    if not units:
        raise ValueError("every unit has in-degree 0; the average estimand is undefined")
    z = np.asarray(allocation)
    treated = network.adjacency.T @ z
    total = 0.0
    for i in units:
        e = (int(treated[i]), int(z[i]))
        w = family[i].weight(e)
        if w != 0.0:
            total += w * potential_outcome(params[i], e)
    return total / len(units)


@dataclass(frozen=True)
class NetworkConfig:
    kind: str  # "k_regular" | "erdos_renyi"
    n: int
    k: int | None = None
    p_edge: float | None = None

    def __post_init__(self):
        if self.kind == "k_regular":
            if self.k is None:
                raise ValueError("k_regular networks need k")
        elif self.kind == "erdos_renyi":
            if self.p_edge is None:
                raise ValueError("erdos_renyi networks need p_edge")
        else:
            raise ValueError(f"unknown network kind {self.kind!r}")

    def build(self, seed) -> Network:
        if self.kind == "k_regular":
            return gen_k_regular_directed(self.n, self.k, seed)
        return gen_erdos_renyi_directed(self.n, self.p_edge, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative input of one simulation setting."""

    network: NetworkConfig
    outcome: OutcomeModel
    p_treat: float = 0.5
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    num_draws: int = 1000
    allocation_mode: str = "exhaustive"  # "exhaustive" | "sample"
    allocation_count: int = 1500
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        for name in self.estimators:
            if name not in ESTIMATOR_NAMES:
                raise ValueError(f"unknown estimator family {name!r}")
        if self.allocation_mode not in ("exhaustive", "sample"):
            raise ValueError(f"unknown allocation mode {self.allocation_mode!r}")
        if self.allocation_mode == "exhaustive" and self.network.n > 20:
            raise ValueError("exhaustive allocation mode needs n <= 20")
        if self.num_draws < 1:
            raise ValueError("need at least one parameter draw")

    def to_dict(self) -> dict:
        return {
            "network": {
                "kind": self.network.kind,
                "n": self.network.n,
                "k": self.network.k,
                "p_edge": self.network.p_edge,
            },
            "outcome": {
                "kind": self.outcome.kind,
                "mu1": self.outcome.mu1,
                "eta1": self.outcome.eta1,
                "delta1": self.outcome.delta1,
            },
            "p_treat": self.p_treat,
            "estimators": list(self.estimators),
            "num_draws": self.num_draws,
            "allocation_mode": self.allocation_mode,
            "allocation_count": self.allocation_count,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        network = NetworkConfig(**data["network"])
        outcome = OutcomeModel(**data["outcome"])
        return cls(
            network=network,
            outcome=outcome,
            p_treat=data.get("p_treat", 0.5),
            estimators=tuple(data.get("estimators", ESTIMATOR_NAMES)),
            num_draws=data.get("num_draws", 1000),
            allocation_mode=data.get("allocation_mode", "exhaustive"),
            allocation_count=data.get("allocation_count", 1500),
            master_seed=data.get("master_seed", 0),
        )


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass
class EstimatorImse:
    """Integrated MSE of one estimator family with its decomposition."""

    name: str
    imse: float
    bias_squared: float
    variance: float
    standard_error: float
    per_draw_mse: np.ndarray = field(repr=False)
    per_draw_mean: np.ndarray = field(repr=False)


@dataclass
class ImseReport:
    config: ExperimentConfig
    results: dict[str, EstimatorImse]
    metadata: dict

    def csv_rows(self) -> list[str]:
        """One row per estimator in the declared order."""
        net = self.config.network
        k_or_p = net.k if net.kind == "k_regular" else net.p_edge
        model = self.config.outcome
        mu_or_eta = model.eta1 if model.kind == "dilated" else model.mu1
        rows = []
        for name in self.config.estimators:
            r = self.results[name]
            rows.append(
                f"{name},{net.n},{k_or_p},{model.kind},{mu_or_eta},{model.delta1},"
                f"{r.imse!r},{r.bias_squared!r},{r.variance!r},{r.standard_error!r},"
                f"{self.config.master_seed}"
            )
        return rows


CSV_HEADER = "estimator,n,k_or_p,distribution,mu1_or_eta1,delta1,imse,bias2,variance,se,seed"


def _family_tables(families, units, width):
    """Per-family (unit x exposure-slot) weight tables; slot index is 2d + z."""
    tables = {}
    for name, family in families.items():
        table = np.zeros((len(units), width))
        for row, unit in enumerate(units):
            for (d, z), w in family[unit].weights.items():
                table[row, 2 * d + z] = w
        tables[name] = table
    return tables


def _outcome_table(params, units, width):
    table = np.zeros((len(units), width))
    for row, unit in enumerate(units):
        p = params[unit]
        for d in range(p.degree + 1):
            for z in (0, 1):
                table[row, 2 * d + z] = potential_outcome(p, (d, z))
    return table


def compute_imse(config: ExperimentConfig) -> ImseReport:
    """Integrated MSE of each requested estimator family under one setting.

    Per parameter draw, the estimator mean and second moment are taken over
    allocations (all of them, or a sampled batch shared by every estimator
    in the draw) and the squared error is formed against that draw's true
    average effect; draws are then averaged.  Fully deterministic given the
    master seed, and independent of the interaction level for families that
    never read treated outcomes.
    """
    start = time.time()
    network = config.network.build(
        np.random.SeedSequence([config.master_seed, _STREAM_NETWORK])
    )
    design = BernoulliDesign(network.n, config.p_treat)
    units = included_units(network)
    if not units:
        raise ValueError("every unit has in-degree 0; the average estimand is undefined")
    if len(units) < network.n:
        logging.getLogger(__name__).info(
            "excluding %d degree-0 unit(s) from the average estimand",
            network.n - len(units),
        )
    width = 2 * (int(network.in_degrees.max()) + 1)
    families = {
        name: build_estimator_family(name, network, design)
        for name in config.estimators
    }
    weight_tables = _family_tables(families, units, width)
    unit_rows = np.arange(len(units))

    if config.allocation_mode == "exhaustive":
        alloc, alloc_weights = allocation_matrix(design, "exhaustive")

    n_draws = config.num_draws
    mse = {name: np.zeros(n_draws) for name in config.estimators}
    means = {name: np.zeros(n_draws) for name in config.estimators}
    second = {name: np.zeros(n_draws) for name in config.estimators}
    theta_bars = np.zeros(n_draws)

    for draw in range(n_draws):
        params = sample_parameters(network, config.outcome, [config.master_seed, draw])
        theta_bar = true_average_effect(network, params)
        theta_bars[draw] = theta_bar
        outcome_table = _outcome_table(params, units, width)
        if config.allocation_mode == "sample":
            rng = np.random.default_rng(
                np.random.SeedSequence([config.master_seed, draw, _STREAM_ALLOCATIONS])
            )
            alloc = design.sample(rng, config.allocation_count)
            alloc_weights = np.full(config.allocation_count, 1.0 / config.allocation_count)
        slots = (2 * (alloc @ network.adjacency) + alloc)[:, units]
        for name in config.estimators:
            value_table = weight_tables[name] * outcome_table
            estimates = value_table[unit_rows, slots].mean(axis=1)
            first_moment = float(alloc_weights @ estimates)
            second_moment = float(alloc_weights @ (estimates * estimates))
            means[name][draw] = first_moment
            second[name][draw] = second_moment
            mse[name][draw] = second_moment - 2.0 * theta_bar * first_moment + theta_bar**2

    results = {}
    for name in config.estimators:
        bias2 = (means[name] - theta_bars) ** 2
        variance = second[name] - means[name] ** 2
        se = float(np.std(mse[name], ddof=1) / np.sqrt(n_draws)) if n_draws > 1 else 0.0
        results[name] = EstimatorImse(
            name=name,
            imse=float(np.mean(mse[name])),
            bias_squared=float(np.mean(bias2)),
            variance=float(np.mean(variance)),
            standard_error=se,
            per_draw_mse=mse[name],
            per_draw_mean=means[name],
        )
    metadata = {
        "config_hash": config_hash(config),
        "seed": config.master_seed,
        "runtime_seconds": time.time() - start,
        "excluded_degree_zero_units": network.n - len(units),
        "allocations_shared_across_estimators": True,
    }
    return ImseReport(config, results, metadata)
