"""Configuration and record models for DAG learning and benchmarking."""

from __future__ import annotations

import enum
import math
import pathlib
import typing as t

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GraphKind(enum.StrEnum):
    """Random graph family."""

    ER = "er"
    """Erdos-Renyi: independent edges below a random node order."""

    SF = "sf"
    """Scale-free: preferential attachment."""


class SemKind(enum.StrEnum):
    """Functional form of the structural equations."""

    LINEAR = "linear"
    GP = "gp"


class NoiseKind(enum.StrEnum):
    """Noise scenario used by :func:`~dag_rescore.simulation.make_noise_spec`."""

    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"
    CORRUPTED = "corrupted"


class LossKind(enum.StrEnum):
    """Per-sample loss family."""

    LEAST_SQUARES = "least_squares"
    GAUSSIAN_NLL = "gaussian_nll"


class AcyclicityKind(enum.StrEnum):
    """Differentiable acyclicity characterization."""

    EXPM = "expm"
    """Trace of the matrix exponential."""

    POLY = "poly"
    """Trace of a matrix polynomial; cheaper for large graphs."""


class NllVariance(enum.StrEnum):
    """How the Gaussian likelihood backbone treats noise variances."""

    FIXED = "fixed"
    """Use the configured sigma vector (default all ones)."""

    EQUAL = "equal"
    """Profile out a single shared variance."""

    NON_EQUAL = "non_equal"
    """Profile out one variance per variable."""


class BackboneName(enum.StrEnum):
    """Registered differentiable DAG learners."""

    LINEAR_NOTEARS = "linear_notears"
    LINEAR_NLL = "linear_nll"
    MLP_NOTEARS = "mlp_notears"


class InnerSolverKind(enum.StrEnum):
    """Solver for the weight-maximization subproblem."""

    EXACT = "exact"
    PARAMETRIC = "parametric"


class SweepParam(enum.StrEnum):
    """Hyperparameter varied across methods of a scenario."""

    LAMBDA = "lambda"
    TAU = "tau"


class GraphModel(BaseModel):
    """Random graph model.

    Parameters
    ----------
    kind : GraphKind
        Graph family.
    k : int
        Expected edges per node (``k * d`` edges in total).
    """

    model_config = ConfigDict(frozen=True)

    kind: GraphKind = GraphKind.ER
    k: int = Field(default=2, ge=1)


class NoiseGroup(BaseModel):
    """One subpopulation of a heterogeneous noise specification.

    Parameters
    ----------
    fraction : float
        Share of the rows drawn from this group.
    sigma : list[float]
        Per-variable noise standard deviations of this group.
    """

    model_config = ConfigDict(frozen=True)

    fraction: float = Field(gt=0.0, le=1.0)
    sigma: list[float]

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, value: list[float]) -> list[float]:
        if not value or any(not s > 0 for s in value):
            msg = "group sigma entries must be positive"
            raise ValueError(msg)
        return value


class NoiseSpec(BaseModel):
    """Additive Gaussian noise of a structural equation model.

    Parameters
    ----------
    sigma : list[float]
        Per-variable standard deviation used when no groups are given.
    groups : list[NoiseGroup]
        Optional subpopulations; fractions must sum to one.
    corrupt_fraction : float
        Share of rows replaced by draws from an unrelated model.
    corrupt_edges_per_node : int | None
        Edge multiplier of the unrelated model's ER graph; inferred from
        the generating graph when ``None``.
    """

    model_config = ConfigDict(frozen=True)

    sigma: list[float]
    groups: list[NoiseGroup] = Field(default_factory=list)
    corrupt_fraction: float = Field(default=0.0, ge=0.0, lt=1.0)
    corrupt_edges_per_node: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check(self) -> NoiseSpec:
        if not self.sigma or any(not s > 0 for s in self.sigma):
            msg = "sigma entries must be positive"
            raise ValueError(msg)
        if self.groups:
            total = math.fsum(g.fraction for g in self.groups)
            if abs(total - 1.0) > 1e-9:
                msg = f"group fractions must sum to 1, got {total}"
                raise ValueError(msg)
            if any(len(g.sigma) != len(self.sigma) for g in self.groups):
                msg = "every group sigma must have one entry per variable"
                raise ValueError(msg)
        return self

    @property
    def d(self) -> int:
        """Number of variables."""
        return len(self.sigma)


class ScoreConfig(BaseModel):
    """Goodness-of-fit measure.

    Parameters
    ----------
    loss : LossKind
        Per-sample loss family.
    lambda1 : float
        Sparsity coefficient.
    sigma : list[float] | None
        Noise scales for the Gaussian likelihood (``None`` means all ones).
    """

    model_config = ConfigDict(frozen=True)

    loss: LossKind = LossKind.LEAST_SQUARES
    lambda1: float = Field(default=0.0, ge=0.0)
    sigma: list[float] | None = None

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(not s > 0 for s in value):
            msg = "sigma entries must be positive"
            raise ValueError(msg)
        return value


class LearnerConfig(BaseModel):
    """Hyperparameters shared by the DAG learning backbones.

    Parameters
    ----------
    lambda1 : float
        Sparsity coefficient.
    acyclicity : AcyclicityKind
        Acyclicity function used in the constraint.
    poly_c : float | None
        Coefficient of the polynomial characterization (``1/d`` if unset).
    rho_init, rho_multiplier, rho_max : float
        Quadratic penalty schedule of the augmented Lagrangian.
    alpha_init : float
        Initial Lagrange multiplier.
    h_tol : float
        Constraint tolerance declaring convergence.
    max_outer : int
        Maximum number of dual ascent (outer) iterations.
    inner_max_iter : int | None
        Iteration cap of each quasi-Newton subproblem (solver default if
        unset).
    w_threshold : float
        Edge threshold applied to the continuous solution.
    hidden_sizes : list[int]
        Hidden layer widths of the per-variable MLPs.
    mlp_inner_steps : int
        First-order steps per MLP subproblem.
    mlp_lr : float
        Step size of the MLP optimizer.
    max_d_mlp : int
        Largest supported dimension for the MLP backbone.
    nll_variance : NllVariance
        Variance treatment of the likelihood backbone.
    sigma : list[float] | None
        Fixed noise scales of the likelihood backbone.
    dag_penalty : float
        Coefficient of the soft acyclicity penalty (likelihood backbone).
    nll_rounds : int
        Warm-started solves performed by the likelihood backbone.
    nll_max_retries : int
        Damped retries after a step enters ``det(I - B) <= 0``.
    seed : int
        Seed of the MLP parameter initialization.
    """

    model_config = ConfigDict(frozen=True)

    lambda1: float = Field(default=0.01, ge=0.0)
    acyclicity: AcyclicityKind = AcyclicityKind.EXPM
    poly_c: float | None = Field(default=None, gt=0.0)
    rho_init: float = Field(default=1.0, gt=0.0)
    rho_multiplier: float = Field(default=10.0, gt=1.0)
    rho_max: float = Field(default=1e16, gt=0.0)
    alpha_init: float = 0.0
    h_tol: float = Field(default=1e-8, gt=0.0)
    max_outer: int = Field(default=100, ge=1)
    inner_max_iter: int | None = Field(default=None, ge=1)
    w_threshold: float = Field(default=0.3, ge=0.0)
    hidden_sizes: list[int] = Field(default_factory=lambda: [10, 10], min_length=1)
    mlp_inner_steps: int = Field(default=500, ge=1)
    mlp_lr: float = Field(default=1e-2, gt=0.0)
    max_d_mlp: int = Field(default=50, ge=2)
    nll_variance: NllVariance = NllVariance.FIXED
    sigma: list[float] | None = None
    dag_penalty: float = Field(default=5.0, ge=0.0)
    nll_rounds: int = Field(default=5, ge=1)
    nll_max_retries: int = Field(default=5, ge=0)
    seed: int = 0

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_widths(cls, value: list[int]) -> list[int]:
        if any(u < 1 for u in value):
            msg = "hidden layer widths must be positive"
            raise ValueError(msg)
        return value


class RescoreConfig(BaseModel):
    """Settings of the bilevel reweighting loop.

    Parameters
    ----------
    tau : float
        Cutoff threshold; weights live in ``[tau/n, 1/(tau n)]``.
    inner : InnerSolverKind
        Weight-maximization solver.
    k_outer : int | None
        Outer epochs (defaults to the backbone's outer iteration cap).
    k_inner : int
        Ascent steps of the parametric solver per outer epoch.
    k_reweight : int
        First outer epoch after which weights are updated.
    hidden_sizes : list[int] | None
        Reweighting model layers; one layer of 10 for linear backbones,
        two for the MLP backbone when unset.
    temperature : float
        Softmax temperature of the reweighting model.
    lr : float
        Step size of the reweighting model.
    feed_losses : bool
        Append the current per-sample loss to the model input.
    seed : int
        Seed of the reweighting model initialization.
    """

    model_config = ConfigDict(frozen=True)

    tau: float = Field(default=0.9, gt=0.0, le=1.0)
    inner: InnerSolverKind = InnerSolverKind.EXACT
    k_outer: int | None = Field(default=None, ge=1)
    k_inner: int = Field(default=100, ge=1)
    k_reweight: int = Field(default=1, ge=0)
    hidden_sizes: list[int] | None = None
    temperature: float = Field(default=1.0, gt=0.0)
    lr: float = Field(default=1e-2, gt=0.0)
    feed_losses: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> RescoreConfig:
        if self.k_outer is not None and self.k_reweight > self.k_outer:
            msg = "k_reweight must not exceed k_outer"
            raise ValueError(msg)
        return self


class GraphConfusion(BaseModel):
    """Edge-level comparison of an estimated graph with the truth.

    Parameters
    ----------
    true_positive : int
        Estimated edges present with the same direction in the truth.
    false_positive : int
        Estimated edges between pairs not adjacent in the truth.
    reversed : int
        Estimated edges whose reverse is a true edge.
    missing : int
        True edges with no estimated edge in either direction.
    predicted_edges : int
        Edges of the estimate.
    true_edges : int
        Edges of the truth.
    """

    model_config = ConfigDict(frozen=True)

    true_positive: int = Field(ge=0)
    false_positive: int = Field(ge=0)
    reversed: int = Field(ge=0)
    missing: int = Field(ge=0)
    predicted_edges: int = Field(ge=0)
    true_edges: int = Field(ge=0)

    @model_validator(mode="after")
    def _accounting(self) -> GraphConfusion:
        if self.true_positive + self.reversed + self.missing != self.true_edges:
            msg = "true edges must split into positives, reversals and misses"
            raise ValueError(msg)
        if (
            self.true_positive + self.reversed + self.false_positive
            != self.predicted_edges
        ):
            msg = "predicted edges must split into positives, reversals and extras"
            raise ValueError(msg)
        return self


class MetricsReport(BaseModel):
    """Structure recovery metrics of one estimate.

    Parameters
    ----------
    tpr : float
        True positive rate.
    fdr : float
        False discovery rate (reversals count as false discoveries).
    shd : int
        Structural Hamming distance (a reversal costs one).
    sid : int | None
        Structural intervention distance, when computed.
    runtime_s : float
        Wall-clock seconds spent fitting.
    """

    tpr: float = Field(ge=0.0, le=1.0)
    fdr: float = Field(ge=0.0, le=1.0)
    shd: int = Field(ge=0)
    sid: int | None = Field(default=None, ge=0)
    runtime_s: float = Field(default=0.0, ge=0.0)


class GraphDocument(BaseModel):
    """On-disk graph: node count, 0-indexed edges and optional weights."""

    d: int = Field(ge=1)
    edges: list[tuple[int, int]] = Field(default_factory=list)
    weights: list[float] | None = None

    @model_validator(mode="after")
    def _check(self) -> GraphDocument:
        for source, target in self.edges:
            if not (0 <= source < self.d and 0 <= target < self.d):
                msg = f"edge ({source}, {target}) out of range for d={self.d}"
                raise ValueError(msg)
        if self.weights is not None and len(self.weights) != len(self.edges):
            msg = "weights must be parallel to edges"
            raise ValueError(msg)
        return self


class MethodSpec(BaseModel):
    """One learner configuration evaluated in a scenario.

    Parameters
    ----------
    backbone : BackboneName
        DAG learner.
    rescore : bool
        Wrap the learner in the reweighting loop.
    tau : float
        Cutoff threshold when ``rescore`` is set.
    inner : InnerSolverKind
        Weight solver when ``rescore`` is set.
    lambda1 : float | None
        Sparsity override.
    label : str | None
        Display name; derived from the other fields if unset.
    """

    model_config = ConfigDict(frozen=True)

    backbone: BackboneName
    rescore: bool = False
    tau: float = Field(default=0.9, gt=0.0, le=1.0)
    inner: InnerSolverKind = InnerSolverKind.EXACT
    lambda1: float | None = Field(default=None, ge=0.0)
    label: str | None = None

    @property
    def name(self) -> str:
        """Stable method identifier used in result files."""
        if self.label:
            return self.label
        name = str(self.backbone)
        if self.rescore:
            name = f"{name}+rescore(tau={self.tau:g};{self.inner})"
        if self.lambda1 is not None:
            name = f"{name}[lambda={self.lambda1:g}]"
        return name


class SweepSpec(BaseModel):
    """Hyperparameter values to expand each method over."""

    model_config = ConfigDict(frozen=True)

    param: SweepParam
    values: list[float] = Field(min_length=1)


class Scenario(BaseModel):
    """One data-generating setting and the methods compared on it.

    Parameters
    ----------
    name : str | None
        Identifier in result files; derived from the settings if unset.
    graph : GraphModel
        Ground-truth graph model.
    d : int
        Number of variables.
    sem : SemKind
        Structural equation family.
    n : int
        Samples per data set.
    noise : NoiseKind
        Noise scenario.
    p : float
        Corrupted share for ``NoiseKind.CORRUPTED``.
    standardize : bool
        Z-score each column before fitting.
    methods : list[MethodSpec]
        Learners to evaluate.
    include_random : bool
        Also score a random DAG with the expected edge count.
    sweep : SweepSpec | None
        Expand every method over these hyperparameter values.
    trials : int | None
        Overrides :attr:`BenchConfig.trials`.
    """

    model_config = ConfigDict(frozen=True)

    name: str | None = None
    graph: GraphModel = Field(default_factory=GraphModel)
    d: int = Field(default=10, ge=2)
    sem: SemKind = SemKind.LINEAR
    n: int = Field(default=2000, ge=1)
    noise: NoiseKind = NoiseKind.HOMOGENEOUS
    p: float = Field(default=0.0, ge=0.0, lt=1.0)
    standardize: bool = False
    methods: list[MethodSpec] = Field(min_length=1)
    include_random: bool = False
    sweep: SweepSpec | None = None
    trials: int | None = Field(default=None, ge=1)

    @property
    def scenario_id(self) -> str:
        """Stable scenario identifier used in result files."""
        if self.name:
            return self.name
        base = f"{self.graph.kind}{self.graph.k}_d{self.d}_{self.sem}_n{self.n}"
        if self.noise is NoiseKind.CORRUPTED:
            return f"{base}_{self.noise}{self.p:g}"
        return f"{base}_{self.noise}"

    def expanded_methods(self) -> list[MethodSpec]:
        """Return the methods after applying :attr:`sweep`."""
        if self.sweep is None:
            return list(self.methods)
        values = self.sweep.values
        expanded: list[MethodSpec] = []
        for method in self.methods:
            if self.sweep.param is SweepParam.LAMBDA:
                expanded.extend(
                    method.model_copy(update={"lambda1": v, "label": None})
                    for v in values
                )
            elif method.rescore:
                expanded.extend(
                    method.model_copy(update={"tau": v, "label": None}) for v in values
                )
            else:
                # tau has no meaning for a bare backbone: keep it once
                expanded.append(method)
        return expanded


class BenchConfig(BaseModel):
    """Experiment matrix run by :func:`~dag_rescore.bench.run_benchmark`.

    Parameters
    ----------
    scenarios : list[Scenario]
        Settings to evaluate.
    trials : int
        Independent data sets per scenario.
    base_seed : int
        Root of every derived seed.
    sid : bool
        Compute the structural intervention distance.
    learner : LearnerConfig
        Backbone defaults (``MethodSpec.lambda1`` overrides the sparsity).
    rescore : RescoreConfig
        Reweighting defaults (``MethodSpec`` overrides tau and the solver).
    max_workers : int
        Trials evaluated concurrently.
    record_runtime : bool
        Write wall-clock runtimes; disable for byte-identical reruns.
    out_dir : pathlib.Path | None
        Output directory when not given on the command line.
    """

    scenarios: list[Scenario] = Field(min_length=1)
    trials: int = Field(default=10, ge=1)
    base_seed: int = Field(default=0, ge=0)
    sid: bool = True
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    rescore: RescoreConfig = Field(default_factory=RescoreConfig)
    max_workers: int = Field(default=1, ge=1)
    record_runtime: bool = True
    out_dir: pathlib.Path | None = None

    @model_validator(mode="after")
    def _unique_ids(self) -> BenchConfig:
        ids = [s.scenario_id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            msg = f"scenario identifiers must be unique: {ids}"
            raise ValueError(msg)
        for scenario in self.scenarios:
            names = [m.name for m in scenario.expanded_methods()]
            if len(set(names)) != len(names):
                msg = f"duplicate method names in scenario {scenario.scenario_id}"
                raise ValueError(msg)
        return self


RESULT_COLUMNS: t.Final = (
    "scenario",
    "method",
    "trial",
    "seed",
    "tpr",
    "fdr",
    "shd",
    "sid",
    "runtime_s",
)


class ResultRow(BaseModel):
    """One evaluated (scenario, method, trial); NaN metrics mark a failure."""

    model_config = ConfigDict(frozen=True)

    scenario: str
    method: str
    trial: int = Field(ge=0)
    seed: int = Field(ge=0)
    tpr: float
    fdr: float
    shd: float
    sid: float
    runtime_s: float

    @property
    def key(self) -> tuple[str, str, int]:
        """Identity of the row within a results table."""
        return (self.scenario, self.method, self.trial)

    @property
    def failed(self) -> bool:
        """Whether the fit raised instead of producing a graph."""
        return math.isnan(self.shd)


AGGREGATE_COLUMNS: t.Final = (
    "scenario",
    "method",
    "count",
    "tpr_mean",
    "tpr_std",
    "fdr_mean",
    "fdr_std",
    "shd_mean",
    "shd_std",
    "sid_mean",
    "sid_std",
    "runtime_s_mean",
    "runtime_s_std",
)


class AggregateRow(BaseModel):
    """Mean and standard deviation of one (scenario, method) cell."""

    model_config = ConfigDict(frozen=True)

    scenario: str
    method: str
    count: int = Field(ge=0)
    tpr_mean: float
    tpr_std: float
    fdr_mean: float
    fdr_std: float
    shd_mean: float
    shd_std: float
    sid_mean: float
    sid_std: float
    runtime_s_mean: float
    runtime_s_std: float
