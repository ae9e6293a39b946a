"""Parametric posteriors for PU data with a feature-dependent annotation process.

The probability that an example is annotated factorizes as

    p(l=1 | x) = s(x) * t(x)

where t(x) = p(y=1 | x) is the classifier of interest (an affine sigmoid)
and s(x) = p(l=1 | y=1, x) is the expert's propensity to annotate a
positive example.  Two selection families are supported:

* sigmoid product: s is itself an affine sigmoid, giving a product of two
  sigmoids;
* psychometric: s is an affine sigmoid squeezed between a guessing floor
  and a lapse ceiling, the standard shape for human detection curves.

All functions here are pure and never clamp probabilities; log-domain
clamping is the job of the likelihood code in :mod:`puselect.objective`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "ModelKind",
    "LinearParams",
    "SpmParams",
    "PsychmParams",
    "sigmoid",
    "affine_sigmoid",
    "psychometric",
    "spm_posterior",
    "psychm_posterior",
]


class ModelKind(str, Enum):
    """The five classifiers the benchmark compares."""

    NAIVE = "naive"
    ELKAN = "elkan"
    SPM = "spm"
    PSYCHM = "psychm"
    REAL_ORACLE = "real"


def _as_vector(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weight vector must be 1-D with at least one entry")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight vector must be finite")
    return w


@dataclass(frozen=True)
class LinearParams:
    """Weights and bias of one affine-sigmoid factor, sigmoid(w.x + b)."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "w", _as_vector(self.w))
        object.__setattr__(self, "b", float(self.b))
        if not np.isfinite(self.b):
            raise ValueError("bias must be finite")

    @property
    def dim(self) -> int:
        return self.w.size

    def norm(self) -> float:
        """Euclidean norm of the full (weights, bias) sub-vector."""
        return float(np.sqrt(self.w @ self.w + self.b * self.b))


@dataclass(frozen=True)
class SpmParams:
    """Selection and target factors of a sigmoid-product posterior."""

    selection: LinearParams
    target: LinearParams

    def __post_init__(self):
        if self.selection.dim != self.target.dim:
            raise ValueError(
                f"selection dim {self.selection.dim} != target dim {self.target.dim}"
            )

    @property
    def dim(self) -> int:
        return self.target.dim

    def swapped(self) -> "SpmParams":
        return SpmParams(selection=self.target, target=self.selection)


def _check_rates(guess: float, lapse: float) -> tuple[float, float]:
    guess, lapse = float(guess), float(lapse)
    if not (np.isfinite(guess) and np.isfinite(lapse)):
        raise ValueError("guess and lapse rates must be finite")
    if guess < 0.0 or lapse < 0.0 or lapse >= 1.0 or guess + lapse > 1.0:
        raise ValueError(
            f"need guess >= 0, lapse in [0, 1), guess + lapse <= 1; "
            f"got guess={guess}, lapse={lapse}"
        )
    return guess, lapse


@dataclass(frozen=True)
class PsychmParams:
    """Psychometric selection (linear part + guess/lapse rates) and sigmoid target.

    Evaluation tolerates the degenerate corners guess=0 and guess+lapse=1;
    they are exactly where the family stops being identifiable, so fitting
    code keeps away from them via the rate reparameterization and flags
    other non-identifiable setups (e.g. one-dimensional features) in its
    diagnostics.
    """

    selection: LinearParams
    guess: float
    lapse: float
    target: LinearParams

    def __post_init__(self):
        guess, lapse = _check_rates(self.guess, self.lapse)
        object.__setattr__(self, "guess", guess)
        object.__setattr__(self, "lapse", lapse)
        if self.selection.dim != self.target.dim:
            raise ValueError(
                f"selection dim {self.selection.dim} != target dim {self.target.dim}"
            )

    @property
    def dim(self) -> int:
        return self.target.dim


def sigmoid(z):
    """Logistic function 1 / (1 + exp(-z)), stable for any finite argument.

    Only non-positive values are ever exponentiated, so there is no
    overflow however large |z| gets, and sigmoid(z) + sigmoid(-z) == 1.0
    holds exactly in floating point.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("sigmoid requires finite input")
    upper = 1.0 / (1.0 + np.exp(-np.abs(z)))
    out = np.where(z >= 0.0, upper, 1.0 - upper)
    return float(out) if out.ndim == 0 else out


def affine_sigmoid(x, w, b):
    """sigmoid(w.x + b), rows of a 2-D x treated as separate points."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape[-1] != w.shape[-1]:
        raise ValueError(f"x has dim {x.shape[-1]} but w has dim {w.shape[-1]}")
    return sigmoid(x @ w + b)


def psychometric(x, w, b, guess, lapse):
    """Sigmoid squeezed into [guess, 1 - lapse]: guess + (1-guess-lapse)*sigmoid."""
    guess, lapse = _check_rates(guess, lapse)
    return guess + (1.0 - guess - lapse) * affine_sigmoid(x, w, b)


def spm_posterior(x, params: SpmParams):
    """Annotation probability of the sigmoid-product model."""
    sel, tgt = params.selection, params.target
    return affine_sigmoid(x, sel.w, sel.b) * affine_sigmoid(x, tgt.w, tgt.b)


def psychm_posterior(x, params: PsychmParams):
    """Annotation probability of the psychometric model."""
    sel, tgt = params.selection, params.target
    selection = psychometric(x, sel.w, sel.b, params.guess, params.lapse)
    return selection * affine_sigmoid(x, tgt.w, tgt.b)
