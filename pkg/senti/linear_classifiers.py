"""Naive Bayes, maximum entropy (improved iterative scaling), logistic regression and linear SVM.

Every trainer takes a feature matrix `X` (dense ndarray or scipy.sparse, one row per doc) and
labels `y` in {0, 1} (Polarity codes); the SVM trainer maps them to {-1, +1} itself.
Ties between the two classes always resolve to Polarity.POSITIVE.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from senti.corpus import Polarity
from senti.exceptions import (
    ConvergenceError,
    CorpusError,
    DimensionMismatch,
    InsufficientDocuments,
)
from senti.features import SparseVector


def _as_rows(X):
    """CSR matrix (or 2-D array) view of a single SparseVector, a list of them, or a matrix."""
    if isinstance(X, SparseVector):
        return sp.csr_matrix((X.values, X.indices, [0, len(X.indices)]), shape=(1, X.dim))
    if sp.issparse(X):
        return X.tocsr()
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _labels(y) -> np.ndarray:
    return np.asarray([int(v) for v in y], dtype=np.int64)


def _require_both_classes(y: np.ndarray) -> None:
    for polarity in Polarity:
        if not np.any(y == polarity):
            raise InsufficientDocuments(polarity.name.lower(), 1, 0)


def _decide(probabilities: np.ndarray) -> np.ndarray:
    """Column 1 wins ties."""
    return (probabilities[:, 1] >= probabilities[:, 0]).astype(np.int64)


@dataclass
class NBModel:
    log_prior: np.ndarray  # (2,)
    log_cond: np.ndarray  # (m, 2)

    @property
    def m(self) -> int:
        return self.log_cond.shape[0]

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"nb\nm={self.m}\n")
            handle.write(" ".join(repr(float(v)) for v in self.log_prior) + "\n")
            for row in self.log_cond:
                handle.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]):
        tables = _read_tables(path, "nb")
        return cls(tables[0], tables[1:])


def nb_train(X, y, m: Optional[int] = None) -> NBModel:
    """Binary-event naive Bayes with add-one smoothing.

    P(f_i|c_j) = (1 + n_ij) / (m + sum_k n_kj) where n_ij counts class-j docs containing f_i.
    """
    X = _as_rows(X)
    y = _labels(y)
    _require_both_classes(y)
    m = X.shape[1] if m is None else m
    if m != X.shape[1]:
        raise DimensionMismatch("naive Bayes features", m, X.shape[1])
    present = (X != 0).astype(np.float64)
    n = np.column_stack(
        [np.asarray(present[y == polarity].sum(axis=0)).ravel() for polarity in Polarity]
    )
    log_cond = np.log1p(n) - np.log(m + n.sum(axis=0))
    log_prior = np.log(np.bincount(y, minlength=2) / len(y))
    return NBModel(log_prior, log_cond)


def nb_log_joint(model: NBModel, X) -> np.ndarray:
    X = _as_rows(X)
    if X.shape[1] != model.m:
        raise DimensionMismatch("naive Bayes input", model.m, X.shape[1])
    present = (X != 0).astype(np.float64)
    return np.asarray(present @ model.log_cond) + model.log_prior


def nb_predict_proba(model: NBModel, X) -> np.ndarray:
    joint = nb_log_joint(model, X)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def nb_predict(model: NBModel, x) -> Tuple[Polarity, np.ndarray]:
    posterior = nb_predict_proba(model, x)[0]
    return Polarity(int(_decide(posterior[None, :])[0])), posterior


@dataclass
class MaxEntModel:
    """lambda[i, c] weighs the indicator "feature i present and class is c"."""

    weights: np.ndarray  # (m, 2)
    log_likelihoods: List[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"maxent\nm={self.m}\n")
            for row in self.weights:
                handle.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]):
        return cls(_read_tables(path, "maxent"))


def _read_tables(path, tag: str) -> np.ndarray:
    """Rows of a tagged model file whose second line is `m=<feature count>`."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        if lines[0] != tag or not lines[1].startswith("m="):
            raise ValueError(f"not a {tag} model file")
        rows = np.array([line.split() for line in lines[2:]], dtype=np.float64).reshape(-1, 2)
        extra = 1 if tag == "nb" else 0
        if len(rows) != int(lines[1][2:]) + extra:
            raise ValueError(f"expected {lines[1][2:]} feature rows, got {len(rows) - extra}")
        return rows
    except (OSError, ValueError, IndexError) as exc:
        raise CorpusError(path, str(exc)) from exc


def maxent_predict_proba(model: MaxEntModel, X) -> np.ndarray:
    X = _as_rows(X)
    if X.shape[1] != model.m:
        raise DimensionMismatch("maximum entropy input", model.m, X.shape[1])
    scores = np.asarray((X != 0).astype(np.float64) @ model.weights)
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


def _log_likelihood(probabilities: np.ndarray, y: np.ndarray) -> float:
    return float(np.log(probabilities[np.arange(len(y)), y]).sum())


def maxent_train_iis(
    X,
    y,
    m: Optional[int] = None,
    iterations: int = 15,
    newton_steps: int = 20,
    newton_tol: float = 1e-10,
) -> MaxEntModel:
    """Maximum entropy training by improved iterative scaling.

    With binary features the feature total f#(d) is the number of active features of d. Each
    pass solves sum_d P(c|d) [f_i in d] exp(delta f#(d)) = count(f_i, c) for every (i, c)
    by Newton's method. Pairs never seen in training keep weight 0.
    """
    X = _as_rows(X)
    y = _labels(y)
    m = X.shape[1] if m is None else m
    if m != X.shape[1]:
        raise DimensionMismatch("maximum entropy features", m, X.shape[1])
    present = sp.csr_matrix((X != 0).astype(np.float64))
    totals = np.asarray(present.sum(axis=1)).ravel().astype(np.int64)
    onehot = np.eye(2)[y]
    empirical = np.asarray(present.T @ onehot)
    attested = empirical > 0
    sizes = np.unique(totals[totals > 0])
    by_size = [present[totals == size] for size in sizes]
    rows_by_size = [np.flatnonzero(totals == size) for size in sizes]

    # exp(delta * f#) stays below e^30
    cap = 30.0 / sizes.max() if len(sizes) else 0.0
    model = MaxEntModel(np.zeros((m, 2)))
    probabilities = maxent_predict_proba(model, present)
    model.log_likelihoods.append(_log_likelihood(probabilities, y))
    for iteration in range(iterations):
        # expected[s] = sum over docs with f# = sizes[s] of P(c|d) * [f_i in d]
        expected = np.zeros((len(sizes), m, 2))
        for s, (block, rows) in enumerate(zip(by_size, rows_by_size)):
            expected[s] = np.asarray(block.T @ probabilities[rows])
        delta = np.zeros((m, 2))
        for _ in range(newton_steps):
            growth = np.exp(sizes[:, None, None] * delta)
            value = (expected * growth).sum(axis=0) - empirical
            slope = (expected * growth * sizes[:, None, None]).sum(axis=0)
            step = np.where(attested & (slope > 0), value / np.where(slope > 0, slope, 1), 0.0)
            updated = np.clip(delta - step, -cap, cap)
            moved = np.abs(updated - delta).max(initial=0.0)
            delta = updated
            if moved < newton_tol:
                break
        model.weights += delta
        probabilities = maxent_predict_proba(model, present)
        model.log_likelihoods.append(_log_likelihood(probabilities, y))
        logging.debug(
            f"IIS iteration {iteration + 1}: log-likelihood {model.log_likelihoods[-1]:.6f}"
        )
    logging.info(
        f"IIS finished {iterations} iterations, "
        f"log-likelihood {model.log_likelihoods[-1]:.4f}"
    )
    return model


def maxent_predict(model: MaxEntModel, x) -> Tuple[Polarity, np.ndarray]:
    probabilities = maxent_predict_proba(model, x)[0]
    return Polarity(int(_decide(probabilities[None, :])[0])), probabilities


@dataclass
class LinearModel:
    """svm decides sign(w.x - b); logistic decides sigmoid(w.x + b) >= 0.5."""

    w: np.ndarray
    b: float
    kind: str
    history: List[float] = field(default_factory=list)
    alpha: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return len(self.w)

    def save(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]):
        try:
            with open(path, encoding="utf-8") as handle:
                return cls.from_lines(handle.read().splitlines())
        except (OSError, ValueError, IndexError) as exc:
            raise CorpusError(path, str(exc)) from exc

    @classmethod
    def from_lines(cls, lines: List[str]):
        tag, kind = lines[0].split()
        if tag != "linear" or kind not in ("logistic", "svm"):
            raise ValueError(f"not a linear model header: {lines[0]!r}")
        dim = int(lines[1].partition("=")[2])
        w = np.array(lines[3].split(), dtype=np.float64) if dim else np.zeros(0)
        if len(w) != dim:
            raise ValueError(f"expected {dim} weights, got {len(w)}")
        return cls(w, float(lines[2]), kind)

    def to_lines(self) -> List[str]:
        return [
            f"linear {self.kind}",
            f"dim={self.dim}",
            repr(float(self.b)),
            " ".join(repr(float(v)) for v in self.w),
        ]


def lr_objective(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Summed log-loss plus (l2/2)||w||^2 (bias unpenalised); returns value and gradient."""
    w, b = params[:-1], params[-1]
    z = X @ w + b
    value = float(np.logaddexp(0.0, z).sum() - y @ z + 0.5 * l2 * w @ w)
    residual = expit(z) - y
    gradient = np.append(X.T @ residual + l2 * w, residual.sum())
    return value, gradient


def _lr_hessian(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    p = expit(X @ params[:-1] + params[-1])
    design = np.column_stack([X, np.ones(len(X))])
    hessian = design.T @ (design * (p * (1 - p))[:, None])
    hessian[:-1, :-1] += l2 * np.eye(X.shape[1])
    return hessian


def lr_train(
    X, y, l2: float = 1.0, tol: float = 1e-6, max_iter: int = 200, polish_steps: int = 5
) -> LinearModel:
    """L2-regularised logistic regression by a trust-region Newton method.

    Raises:
        ConvergenceError: if the gradient infinity-norm is still >= tol after max_iter steps.
    """
    X = np.asarray(X.toarray() if sp.issparse(X) else X, dtype=np.float64)
    y = _labels(y).astype(np.float64)
    _require_both_classes(y.astype(np.int64))
    result = minimize(
        lr_objective,
        np.zeros(X.shape[1] + 1),
        args=(X, y, l2),
        jac=True,
        hess=_lr_hessian,
        method="trust-exact",
        options={"gtol": tol, "maxiter": max_iter},
    )
    params = result.x
    _, gradient = lr_objective(params, X, y, l2)
    # plain Newton polish: the trust region can stall once objective changes drop below
    # floating-point resolution while the gradient is still above tol
    for _ in range(polish_steps):
        if np.abs(gradient).max() < tol:
            break
        params = params - solve(_lr_hessian(params, X, y, l2), gradient, assume_a="sym")
        _, gradient = lr_objective(params, X, y, l2)
    residual = float(np.abs(gradient).max())
    if residual >= tol:
        raise ConvergenceError("logistic regression", residual, int(result.nit))
    logging.debug(f"logistic regression converged in {result.nit} steps, |grad|={residual:.2e}")
    return LinearModel(params[:-1].copy(), float(params[-1]), "logistic")


def _row_slices(X):
    if sp.issparse(X):
        X = X.tocsr()
        bounds = zip(X.indptr[:-1], X.indptr[1:])
        return [(X.indices[start:stop], X.data[start:stop]) for start, stop in bounds]
    return None


def svm_dual_objective(alpha: np.ndarray, w_aug: np.ndarray, diag: float) -> float:
    """Dual value sum(alpha) - 1/2 ||w_aug||^2 - diag/2 ||alpha||^2 in the bias-augmented space."""
    return float(alpha.sum() - 0.5 * w_aug @ w_aug - 0.5 * diag * alpha @ alpha)


def svm_train(
    X,
    y,
    C: float = 1.0,
    kernel: str = "linear",
    loss: str = "hinge",
    tol: float = 1e-4,
    max_iter: int = 1000,
    seed: int = 0,
    strict: bool = True,
) -> LinearModel:
    """Linear SVM by dual coordinate descent.

    The bias is absorbed as a constant feature, so the dual has only box constraints:
    0 <= alpha_i <= C for the hinge loss, alpha_i >= 0 with diagonal 1/(2C) for the squared
    hinge. Sparse matrices are handled row by row. The dual objective after every sweep is kept
    in `history`.

    Raises:
        ConvergenceError: carrying the duality gap when max_iter sweeps leave a projected
            gradient above tol. With `strict=False` a warning is logged and the current model
            is returned instead.
    """
    if kernel != "linear":
        raise ValueError(f"Only the linear kernel is supported, got {kernel!r}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if loss not in ("hinge", "squared_hinge"):
        raise ValueError(f"Unknown SVM loss {loss!r}")
    labels = _labels(y)
    _require_both_classes(labels)
    signs = np.where(labels == Polarity.POSITIVE, 1.0, -1.0)
    sparse_rows = _row_slices(X)
    n = len(signs)
    if sparse_rows is None:
        X = np.asarray(X, dtype=np.float64)
        dim = X.shape[1]
        sq_norms = np.einsum("ij,ij->i", X, X) + 1.0
    else:
        dim = X.shape[1]
        sq_norms = np.array([data @ data for _, data in sparse_rows]) + 1.0
    upper, diag = (C, 0.0) if loss == "hinge" else (np.inf, 0.5 / C)
    q_diag = sq_norms + diag
    alpha = np.zeros(n)
    w = np.zeros(dim)
    w0 = 0.0  # weight of the constant feature, b = -w0
    rng = np.random.default_rng(seed)
    history: List[float] = []
    for sweep in range(max_iter):
        largest, smallest = -np.inf, np.inf
        for i in rng.permutation(n):
            if sparse_rows is None:
                margin = X[i] @ w + w0
            else:
                idx, data = sparse_rows[i]
                margin = data @ w[idx] + w0
            gradient = signs[i] * margin - 1.0 + diag * alpha[i]
            if alpha[i] == 0.0:
                projected = min(gradient, 0.0)
            elif alpha[i] == upper:
                projected = max(gradient, 0.0)
            else:
                projected = gradient
            largest, smallest = max(largest, projected), min(smallest, projected)
            if abs(projected) < 1e-14:
                continue
            updated = min(max(alpha[i] - gradient / q_diag[i], 0.0), upper)
            change = (updated - alpha[i]) * signs[i]
            alpha[i] = updated
            if sparse_rows is None:
                w += change * X[i]
            else:
                w[idx] += change * data
            w0 += change
        history.append(svm_dual_objective(alpha, np.append(w, w0), diag))
        # no equality constraint: optimal once every projected gradient vanishes
        if max(largest, -smallest) < tol:
            logging.debug(f"SVM dual coordinate descent converged after {sweep + 1} sweeps")
            break
    else:
        margins = signs * (_decision_raw(X, w, sparse_rows) + w0)
        slack = np.maximum(0.0, 1.0 - margins)
        penalty = C * (slack.sum() if loss == "hinge" else (slack**2).sum())
        primal = 0.5 * (w @ w + w0 * w0) + penalty
        gap = primal - history[-1]
        if strict:
            raise ConvergenceError("SVM dual coordinate descent", gap, max_iter)
        logging.warning(f"SVM stopped after {max_iter} sweeps with duality gap {gap:.3e}")
    return LinearModel(w, -w0, "svm", history, alpha)


def _decision_raw(X, w, sparse_rows) -> np.ndarray:
    if sparse_rows is None:
        return X @ w
    return np.array([data @ w[idx] for idx, data in sparse_rows])


def linear_decision(model: LinearModel, X) -> np.ndarray:
    """svm: w.x - b; logistic: probability of the positive class."""
    X = _as_rows(X)
    if X.shape[1] != model.dim:
        raise DimensionMismatch("linear model input", model.dim, X.shape[1])
    raw = np.asarray(X @ model.w).ravel()
    if model.kind == "svm":
        return raw - model.b
    return expit(raw + model.b)


def linear_predict_many(model: LinearModel, X) -> np.ndarray:
    threshold = 0.0 if model.kind == "svm" else 0.5
    return (linear_decision(model, X) >= threshold).astype(np.int64)


def linear_predict(model: LinearModel, x) -> Polarity:
    return Polarity(int(linear_predict_many(model, x)[0]))
