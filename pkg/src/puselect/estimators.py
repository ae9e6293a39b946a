"""Model fitting: the two annotation-aware models, three baselines, and CV.

Every fit is deterministic given (data, config, seed).  The non-convex
fits draw their weight initializations from per-start Philox streams; the
convex logistic baselines start at zero, so their seed argument is inert.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .data import Dataset, split
from .metrics import brier
from .models import (
    LinearParams,
    ModelKind,
    SpmParams,
    affine_sigmoid,
    psychometric,
    sigmoid,
)
from .objective import (
    LOG_CLAMP,
    PenaltyNorm,
    RegConfig,
    make_loss_functions,
    unconstrain_rates,
    unpack_psychm,
    unpack_spm,
)
from .optimize import Method, OptimResult, OptimizerConfig, minimize

__all__ = [
    "CvConfig",
    "FitDiagnostics",
    "FittedModel",
    "TrainingProtocol",
    "default_optimizer",
    "fit_naive",
    "fit_real_oracle",
    "fit_elkan",
    "fit_spm",
    "fit_psychm",
    "select_hyperparams",
    "train_model",
]

_INIT_SCALE = 0.1  # std of the Gaussian weight initialization; biases start at 0


@dataclass(frozen=True)
class CvConfig:
    """Grid of (selection, target) penalty coefficients scored by Brier on (x, l)."""

    folds: int = 3
    grid_sel: tuple[float, ...] = (0.0, 0.01, 0.1, 1.0, 10.0)
    grid_tgt: tuple[float, ...] = (0.0, 0.01, 0.1, 1.0, 10.0)

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.grid_sel or not self.grid_tgt:
            raise ValueError("penalty grids must be nonempty")
        if min(self.grid_sel) < 0 or min(self.grid_tgt) < 0:
            raise ValueError("penalty coefficients must be nonnegative")


@dataclass(frozen=True)
class FitDiagnostics:
    loss: float
    grad_norm: float
    iterations: int
    converged: bool
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class FittedModel:
    """A trained classifier; ``score`` estimates p(y=1|x).

    ``target`` always holds the sigmoid the classifier evaluates, except
    for the Elkan baseline where it holds the annotation model h and the
    score is min(1, h / c_hat).
    """

    kind: ModelKind
    target: LinearParams
    diagnostics: FitDiagnostics
    selection: LinearParams | None = None
    guess: float | None = None
    lapse: float | None = None
    c_hat: float | None = None

    def score(self, x) -> np.ndarray:
        h = affine_sigmoid(x, self.target.w, self.target.b)
        if self.kind == ModelKind.ELKAN:
            return np.minimum(1.0, h / self.c_hat)
        return h

    def annotation_probability(self, x) -> np.ndarray:
        """Estimated p(l=1|x); equals the raw model output for the baselines."""
        h = affine_sigmoid(x, self.target.w, self.target.b)
        if self.kind == ModelKind.SPM:
            return affine_sigmoid(x, self.selection.w, self.selection.b) * h
        if self.kind == ModelKind.PSYCHM:
            return psychometric(x, self.selection.w, self.selection.b, self.guess, self.lapse) * h
        return h


def default_optimizer(kind: ModelKind, dim: int) -> OptimizerConfig:
    """Per-model defaults: Adam for the psychometric fit, quasi-Newton for the
    sigmoid product in low dimension (Nadam above 50), quasi-Newton for the
    convex logistic baselines.

    Step size and iteration budgets are calibrated to the benchmark scale:
    fitted weights reach magnitudes of 10..30, which Adam at the generic
    1e-2 step cannot span within the budget, and the quasi-Newton loss
    plateaus long before the generic 2000-iteration cap.
    """
    if kind == ModelKind.PSYCHM:
        return OptimizerConfig(method=Method.ADAM, step_size=0.05, max_iters=1500)
    if kind == ModelKind.SPM and dim > 50:
        return OptimizerConfig(method=Method.NADAM, step_size=0.05, max_iters=1500)
    if kind == ModelKind.SPM:
        return OptimizerConfig(method=Method.LBFGS, max_iters=150)
    return OptimizerConfig(method=Method.LBFGS, max_iters=200)


@dataclass(frozen=True)
class TrainingProtocol:
    """Everything `train_model` needs besides the data and the model kind."""

    cv: CvConfig = field(default_factory=CvConfig)
    optimizer: OptimizerConfig | None = None  # None: per-kind defaults
    cv_max_iters: int | None = None  # shortened budget for CV fits
    elkan_holdout: float = 0.2
    psychm_init: tuple[float, float] = (0.7, 0.02)
    n_starts: int = 1
    norm_sel: PenaltyNorm = PenaltyNorm.L2SQ
    norm_tgt: PenaltyNorm = PenaltyNorm.L2SQ

    def optimizer_for(self, kind: ModelKind, dim: int) -> OptimizerConfig:
        return self.optimizer if self.optimizer is not None else default_optimizer(kind, dim)

    def cv_optimizer_for(self, kind: ModelKind, dim: int) -> OptimizerConfig:
        """Optimizer for fold fits, optionally on a shortened budget.

        A quasi-Newton iteration costs about three adaptive-moment
        iterations here (line-search probes) and makes progress about as
        much faster, so the shortened budget is divided by 3 for it.
        """
        opt = self.optimizer_for(kind, dim)
        if self.cv_max_iters is not None:
            budget = self.cv_max_iters if opt.method in (Method.ADAM, Method.NADAM) else max(
                1, self.cv_max_iters // 3
            )
            opt = replace(opt, max_iters=min(budget, opt.max_iters))
        return opt


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, dtype=np.uint64)[0])


def _diag(result: OptimResult, notes: tuple[str, ...] = ()) -> FitDiagnostics:
    return FitDiagnostics(
        loss=result.loss,
        grad_norm=result.grad_norm,
        iterations=result.iterations,
        converged=result.converged,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Logistic regression (naive / oracle / Elkan's annotation model)


def _logistic_value_grad(X, targets, c_w, norm_w):
    def value(theta):
        p = sigmoid(X @ theta[:-1] + theta[-1])
        p_c = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
        nll = -float(np.sum(targets * np.log(p_c) + (1 - targets) * np.log(1.0 - p_c)))
        if norm_w == PenaltyNorm.L2SQ:
            return nll + c_w * float(theta[:-1] @ theta[:-1])
        return nll + c_w * float(np.sum(np.abs(theta[:-1])))

    def grad(theta):
        p = sigmoid(X @ theta[:-1] + theta[-1])
        dz = np.where((p > LOG_CLAMP) & (p < 1.0 - LOG_CLAMP), p - targets, 0.0)
        gw = X.T @ dz
        gw += 2.0 * c_w * theta[:-1] if norm_w == PenaltyNorm.L2SQ else c_w * np.sign(theta[:-1])
        return np.concatenate([gw, [float(np.sum(dz))]])

    return value, grad


def _fit_logistic(X, targets, c_w, norm_w, opt: OptimizerConfig) -> tuple[LinearParams, OptimResult]:
    # The problem is convex, so the zero start is as good as any and keeps
    # the baselines seed-independent.
    theta0 = np.zeros(X.shape[1] + 1)
    value, grad = _logistic_value_grad(X, targets, c_w, norm_w)
    result = minimize(value, grad, theta0, opt)
    return LinearParams(w=result.params[:-1], b=result.params[-1]), result


def fit_naive(
    data: Dataset, reg: RegConfig, opt: OptimizerConfig | None = None, seed: int = 0
) -> FittedModel:
    """Logistic regression of the annotation flag on x, unlabeled treated as negative.

    The fit is convex, so the seed has no effect; it is accepted for
    interface uniformity with the other fitting procedures.
    """
    if np.all(data.l == data.l[0]):
        raise ValueError("annotation flags are all equal; nothing to fit")
    opt = opt or default_optimizer(ModelKind.NAIVE, data.dim)
    params, result = _fit_logistic(data.x, data.l, reg.c_tgt, reg.norm_tgt, opt)
    return FittedModel(kind=ModelKind.NAIVE, target=params, diagnostics=_diag(result))


def fit_real_oracle(
    data: Dataset, reg: RegConfig, opt: OptimizerConfig | None = None, seed: int = 0
) -> FittedModel:
    """Logistic regression on the ground-truth classes; an upper-bound reference."""
    if data.y is None:
        raise ValueError("oracle fit needs ground-truth classes y")
    if np.all(data.y == data.y[0]):
        raise ValueError("classes are all equal; nothing to fit")
    opt = opt or default_optimizer(ModelKind.REAL_ORACLE, data.dim)
    params, result = _fit_logistic(data.x, data.y, reg.c_tgt, reg.norm_tgt, opt)
    return FittedModel(kind=ModelKind.REAL_ORACLE, target=params, diagnostics=_diag(result))


def fit_elkan(
    data: Dataset,
    reg: RegConfig,
    opt: OptimizerConfig | None = None,
    holdout_frac: float = 0.2,
    seed: int = 0,
) -> FittedModel:
    """Constant-propensity baseline: learn h(x) = p(l=1|x), then estimate the
    labeling constant as the mean of h over annotated holdout examples."""
    if not 0.0 < holdout_frac < 1.0:
        raise ValueError("holdout_frac must be in (0, 1)")
    train, holdout = split(data, 1.0 - holdout_frac, seed=_derive_seed(seed, 100))
    if np.all(train.l == train.l[0]):
        raise ValueError("training part has all-equal annotation flags")
    labeled = holdout.l == 1
    if not np.any(labeled):
        raise ValueError("holdout contains no labeled positives; cannot estimate c")
    opt = opt or default_optimizer(ModelKind.ELKAN, data.dim)
    params, result = _fit_logistic(train.x, train.l, reg.c_tgt, reg.norm_tgt, opt)
    c_hat = float(np.mean(affine_sigmoid(holdout.x[labeled], params.w, params.b)))
    return FittedModel(
        kind=ModelKind.ELKAN, target=params, c_hat=c_hat, diagnostics=_diag(result)
    )


# ---------------------------------------------------------------------------
# Annotation-process models


def _assign_target_factor(params: SpmParams) -> SpmParams:
    """Resolve the factor-swap ambiguity of the sigmoid product.

    The annotation propensity is assumed smoother than the class posterior,
    so the factor whose full (weights, bias) sub-vector has the larger
    Euclidean norm (the steeper sigmoid) is the classifier.  On an exact
    tie the first factor of the free-parameter layout is the classifier.
    """
    first, second = params.selection, params.target
    if first.norm() >= second.norm():
        return SpmParams(selection=second, target=first)
    return SpmParams(selection=first, target=second)


def _best_of_starts(data, kind, reg, opt, seed, n_starts, init_fn) -> OptimResult:
    objective, gradient = make_loss_functions(data, kind, reg)
    best = None
    for start in range(n_starts):
        result = minimize(objective, gradient, init_fn(_rng(seed, start)), opt)
        if best is None or result.loss < best.loss:
            best = result
    return best


def fit_spm(
    data: Dataset,
    reg: RegConfig,
    opt: OptimizerConfig | None = None,
    seed: int = 0,
    n_starts: int = 1,
) -> FittedModel:
    """Maximum-likelihood fit of the sigmoid-product model.

    A non-converged optimizer is reported in the diagnostics, not raised.
    """
    d = data.dim
    opt = opt or default_optimizer(ModelKind.SPM, d)

    def init(rng):
        return np.concatenate(
            [rng.normal(0.0, _INIT_SCALE, size=d), [0.0], rng.normal(0.0, _INIT_SCALE, size=d), [0.0]]
        )

    best = _best_of_starts(data, ModelKind.SPM, reg, opt, seed, n_starts, init)
    ordered = _assign_target_factor(unpack_spm(best.params, d))
    return FittedModel(
        kind=ModelKind.SPM,
        target=ordered.target,
        selection=ordered.selection,
        diagnostics=_diag(best),
    )


def fit_psychm(
    data: Dataset,
    reg: RegConfig,
    opt: OptimizerConfig | None = None,
    init_guess: float = 0.7,
    init_lapse: float = 0.02,
    seed: int = 0,
    n_starts: int = 1,
) -> FittedModel:
    """Maximum-likelihood fit of the psychometric model via the unconstrained
    rate surrogates; the target factor is the classifier directly."""
    if not (0.0 < init_guess < 1.0 and 0.0 <= init_lapse < 1.0 and init_guess + init_lapse < 1.0):
        raise ValueError("need init_guess in (0,1), init_lapse in [0,1), sum < 1")
    d = data.dim
    opt = opt or default_optimizer(ModelKind.PSYCHM, d)
    guess_raw, lapse_raw = unconstrain_rates(init_guess, init_lapse)

    def init(rng):
        return np.concatenate(
            [
                rng.normal(0.0, _INIT_SCALE, size=d),
                [0.0, guess_raw, lapse_raw],
                rng.normal(0.0, _INIT_SCALE, size=d),
                [0.0],
            ]
        )

    best = _best_of_starts(data, ModelKind.PSYCHM, reg, opt, seed, n_starts, init)
    params = unpack_psychm(best.params, d)
    notes = ("selection rates are not identifiable with 1-dimensional features",) if d == 1 else ()
    return FittedModel(
        kind=ModelKind.PSYCHM,
        target=params.target,
        selection=params.selection,
        guess=params.guess,
        lapse=params.lapse,
        diagnostics=_diag(best, notes),
    )


# ---------------------------------------------------------------------------
# Hyperparameter selection and the one-call training entry point


def _fit_kind(data, kind, reg, opt, seed, protocol: TrainingProtocol) -> FittedModel:
    if kind == ModelKind.NAIVE:
        return fit_naive(data, reg, opt, seed=seed)
    if kind == ModelKind.REAL_ORACLE:
        return fit_real_oracle(data, reg, opt, seed=seed)
    if kind == ModelKind.ELKAN:
        return fit_elkan(data, reg, opt, holdout_frac=protocol.elkan_holdout, seed=seed)
    if kind == ModelKind.SPM:
        return fit_spm(data, reg, opt, seed=seed, n_starts=protocol.n_starts)
    if kind == ModelKind.PSYCHM:
        init_guess, init_lapse = protocol.psychm_init
        return fit_psychm(
            data, reg, opt,
            init_guess=init_guess, init_lapse=init_lapse,
            seed=seed, n_starts=protocol.n_starts,
        )
    raise ValueError(f"unknown model kind {kind}")


def select_hyperparams(
    data: Dataset,
    kind: ModelKind,
    cv: CvConfig,
    opt: OptimizerConfig | None = None,
    seed: int = 0,
    protocol: TrainingProtocol | None = None,
) -> RegConfig:
    """Pick penalty coefficients by k-fold CV Brier score of p(l|x) against l.

    Ties go to the more regularized pair: larger coefficient sum, then
    larger target penalty, then larger selection penalty.  Models without a
    selection factor are fitted once per distinct target penalty.
    """
    protocol = protocol or TrainingProtocol(cv=cv)
    # Fold fits only rank penalty pairs; restarts are reserved for the final fit.
    protocol = replace(protocol, n_starts=1)
    if data.n < cv.folds:
        raise ValueError(f"need at least {cv.folds} rows for {cv.folds}-fold CV")
    perm = _rng(seed, 0).permutation(data.n)
    folds = np.array_split(perm, cv.folds)

    has_selection = kind in (ModelKind.SPM, ModelKind.PSYCHM)
    cache: dict[tuple, float] = {}

    def mean_brier(sel_idx: int, tgt_idx: int, c_sel: float, c_tgt: float) -> float:
        key = (sel_idx, tgt_idx) if has_selection else (tgt_idx,)
        if key in cache:
            return cache[key]
        reg = RegConfig(
            c_sel=c_sel, c_tgt=c_tgt, norm_sel=protocol.norm_sel, norm_tgt=protocol.norm_tgt
        )
        scores = []
        for f, val_idx in enumerate(folds):
            train_idx = np.concatenate([folds[j] for j in range(cv.folds) if j != f])
            fit_seed = _derive_seed(seed, 1, *key, f)
            model = _fit_kind(data.subset(train_idx), kind, reg, opt, fit_seed, protocol)
            val = data.subset(val_idx)
            scores.append(brier(model.annotation_probability(val.x), val.l))
        cache[key] = float(np.mean(scores))
        return cache[key]

    best = None
    for (sel_idx, c_sel), (tgt_idx, c_tgt) in product(
        enumerate(cv.grid_sel), enumerate(cv.grid_tgt)
    ):
        score = mean_brier(sel_idx, tgt_idx, c_sel, c_tgt)
        rank = (score, -(c_sel + c_tgt), -c_tgt, -c_sel)
        if best is None or rank < best[0]:
            best = (rank, c_sel, c_tgt)
    _, c_sel, c_tgt = best
    return RegConfig(
        c_sel=c_sel, c_tgt=c_tgt, norm_sel=protocol.norm_sel, norm_tgt=protocol.norm_tgt
    )


def train_model(
    data: Dataset, kind: ModelKind, protocol: TrainingProtocol, seed: int = 0
) -> FittedModel:
    """Cross-validated penalty selection followed by the final fit."""
    cv_opt = protocol.cv_optimizer_for(kind, data.dim)
    reg = select_hyperparams(
        data, kind, protocol.cv, opt=cv_opt, seed=_derive_seed(seed, 0), protocol=protocol
    )
    fit_opt = protocol.optimizer_for(kind, data.dim)
    return _fit_kind(data, kind, reg, fit_opt, _derive_seed(seed, 1), protocol)
