"""Per-subset prediction functions.

Built-in learners (constant mean, least squares with optional basis
expansion and ridge, IRLS logistic) keep the estimator self-contained;
heavier model families plug in through an external model-runner
subprocess speaking a newline-delimited JSON protocol (version 1) over
stdin/stdout:

    -> {"type": "handshake", "version": 1}
    <- {"type": "handshake", "version": 1, "capabilities": ["fit", "predict"]}
    -> {"type": "fit", "id": 1, "subset": [1, 3], "x": [[...]], "y": [...],
        "task": "regression", "seed": 7}
    <- {"type": "result", "id": 1, "ok": true}
    -> {"type": "predict", "id": 2, "x": [[...]]}
    <- {"type": "result", "id": 2, "predictions": [...]}
    -> {"type": "shutdown"}

Any reply may instead be ``{"type": "error", "id": ..., "message": ...}``.
Subset indices on the wire are 1-based; matrices are row-major.

Every learner is column-blind outside its subset: rows agreeing on the
subset columns receive identical predictions.
"""

from __future__ import annotations

import json
import select
import subprocess
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import IllPosedError, RunnerError
from .subsets import FeatureSubset

LEARNER_KINDS = ("mean_only", "linear_ols", "logistic_irls", "external")
PROTOCOL_VERSION = 1
GRAM_CONDITION_LIMIT = 1e12
AUTO_RIDGE_SCALE = 1e-8
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
LOGLOSS_CLIP = 1e-6
PROB_FLOOR = 1e-15


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to fit, plus its hyperparameters.

    Recognized hyperparameters:

    * ``linear_ols``: ``ridge`` (None = automatic tiny-ridge fallback on
      ill-conditioned normal equations, 0 = strict, > 0 = always
      applied) and ``basis`` (``{"cuts": [...], "include_linear": bool}``
      for a per-feature threshold-indicator expansion).
    * ``logistic_irls``: ``ridge`` (default 0), ``max_iter``, ``tol``.
    * ``external``: ``command`` is the runner argv; ``timeout`` the
      per-reply deadline in seconds.
    """

    kind: str
    hyperparameters: dict = field(default_factory=dict)
    command: tuple = ()

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner {self.kind!r}; choose from {LEARNER_KINDS}")
        ridge = self.hyperparameters.get("ridge")
        if ridge is not None and ridge < 0:
            raise ValueError("ridge penalty must be >= 0")
        if self.hyperparameters.get("max_iter", 1) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.kind == "external" and not self.command:
            raise ValueError("external learner requires a command")
        object.__setattr__(self, "command", tuple(self.command))


def expand_design(X_cols: np.ndarray, basis: dict | None) -> np.ndarray:
    """Design matrix (without intercept) for the selected raw columns.

    With no basis the raw columns pass through.  Otherwise each column
    contributes threshold indicators ``1(x > cut)`` for every cut,
    preceded by the raw column when ``include_linear`` is set.
    """
    if basis is None:
        return X_cols
    cuts = np.asarray(basis.get("cuts", ()), dtype=float)
    parts = []
    for j in range(X_cols.shape[1]):
        x = X_cols[:, j]
        if basis.get("include_linear", True):
            parts.append(x[:, None])
        if cuts.size:
            parts.append((x[:, None] > cuts[None, :]).astype(float))
    if not parts:
        return X_cols
    return np.hstack(parts)


def _with_intercept(D: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((D.shape[0], 1)), D])


def _cholesky_solve(gram: np.ndarray, b: np.ndarray):
    """Solve a symmetric positive-definite system, or None if too ill-conditioned.

    Uses a Cholesky factorization plus a LAPACK 1-norm condition
    estimate, which is far cheaper than a full SVD on the hot path.
    """
    if not np.all(np.isfinite(gram)):
        return None
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    pocon = scipy.linalg.get_lapack_funcs(("pocon",), (gram,))[0]
    anorm = np.abs(gram).sum(axis=0).max()
    rcond, info = pocon(factor[0], anorm, uplo="L")
    if info != 0 or not np.isfinite(rcond) or rcond < 1.0 / GRAM_CONDITION_LIMIT:
        return None
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def solve_normal_equations(gram: np.ndarray, b: np.ndarray, ridge) -> np.ndarray:
    """Solve ``gram @ beta = b`` with the configured ridge policy.

    ``ridge=None`` falls back to a trace-scaled penalty on the
    non-intercept block when the Gram condition number exceeds
    ``GRAM_CONDITION_LIMIT``; ``ridge=0`` raises instead; ``ridge > 0``
    is always applied (and still falls back if the penalized system
    remains singular).
    """
    k = gram.shape[0]
    work = gram
    if ridge:
        work = gram.copy()
        work[1:, 1:] += ridge * np.eye(k - 1)
    beta = _cholesky_solve(work, b)
    if beta is not None:
        return beta
    if ridge == 0:
        raise IllPosedError(
            "singular normal equations and ridge disabled; drop collinear "
            "columns or allow a ridge penalty"
        )
    lam = AUTO_RIDGE_SCALE * np.trace(work) / k
    work = work.copy()
    work[1:, 1:] += lam * np.eye(k - 1)
    beta = _cholesky_solve(work, b)
    if beta is None:
        raise IllPosedError("normal equations unsolvable even with ridge fallback")
    return beta


def _fit_ols(D_train, y, D_eval, ridge):
    Dt = _with_intercept(D_train)
    beta = solve_normal_equations(Dt.T @ Dt, Dt.T @ y, ridge)
    return _with_intercept(D_eval) @ beta


def log_loss(probabilities: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood; probabilities clipped for evaluation."""
    q = np.clip(probabilities, LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP)
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log1p(-q)))


def _fit_logistic(D_train, y, D_eval, ridge, max_iter, tol):
    Dt = _with_intercept(D_train)
    k = Dt.shape[1]
    beta = np.zeros(k)
    penalty = np.zeros((k, k))
    penalty[1:, 1:] = ridge * np.eye(k - 1)
    prev = None
    for _ in range(max_iter):
        eta = Dt @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        z = eta + (y - mu) / w
        gram = Dt.T @ (w[:, None] * Dt) + penalty
        beta = solve_normal_equations(gram, Dt.T @ (w * z), None)
        obj = log_loss(expit(Dt @ beta), y) + 0.5 * ridge * float(beta[1:] @ beta[1:]) / len(y)
        if prev is not None and abs(prev - obj) <= tol * max(1.0, abs(prev)):
            break
        prev = obj
    prob = expit(_with_intercept(D_eval) @ beta)
    return np.clip(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)


def fit_predict(
    spec: LearnerSpec,
    subset: FeatureSubset,
    train,
    eval_X: np.ndarray,
    task: str = "regression",
    seed: int = 0,
) -> np.ndarray:
    """Fit on the training split using only the subset's columns; predict.

    ``train`` is an ``(X, y)`` pair over the full feature matrix; column
    selection happens here so learners never see out-of-subset features.
    """
    X, y = train
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    eval_X = np.asarray(eval_X, dtype=float)
    cols = subset.columns()

    if spec.kind == "mean_only" or subset.is_empty:
        return np.full(eval_X.shape[0], float(y.mean()))

    if spec.kind == "external":
        with RunnerSession(spec) as session:
            session.fit(subset, X, y, task=task, seed=seed)
            return session.predict(eval_X)

    basis = spec.hyperparameters.get("basis")
    D_train = expand_design(X[:, cols], basis)
    D_eval = expand_design(eval_X[:, cols], basis)

    if spec.kind == "linear_ols":
        return _fit_ols(D_train, y, D_eval, spec.hyperparameters.get("ridge"))

    ridge = spec.hyperparameters.get("ridge", 0.0)
    max_iter = spec.hyperparameters.get("max_iter", IRLS_MAX_ITER)
    tol = spec.hyperparameters.get("tol", IRLS_TOL)
    return _fit_logistic(D_train, y, D_eval, ridge, max_iter, tol)


class RunnerSession:
    """One live model-runner subprocess with request-id correlation.

    Sessions are single-threaded: each request waits for its reply, so
    at most one fit is ever outstanding.  Use as a context manager to
    guarantee shutdown.
    """

    def __init__(self, spec: LearnerSpec, timeout: float | None = None):
        if spec.kind != "external":
            raise ValueError("RunnerSession requires an external learner spec")
        self._timeout = timeout if timeout is not None else spec.hyperparameters.get("timeout", 30.0)
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                list(spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise RunnerError(f"cannot launch runner {spec.command!r}: {exc}") from exc
        reply = self._roundtrip({"type": "handshake", "version": PROTOCOL_VERSION})
        if reply.get("type") != "handshake" or reply.get("version") != PROTOCOL_VERSION:
            self.close()
            raise RunnerError("handshake failed", frame=reply)
        self.capabilities = tuple(reply.get("capabilities", ()))

    def _send(self, frame: dict) -> None:
        if self._proc.stdin is None or self._proc.poll() is not None:
            raise RunnerError("runner process is not accepting input")
        try:
            self._proc.stdin.write(json.dumps(frame) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise RunnerError(f"runner pipe closed: {exc}") from exc

    def _read_line(self) -> str:
        ready, _, _ = select.select([self._proc.stdout], [], [], self._timeout)
        if not ready:
            raise RunnerError(f"runner reply timed out after {self._timeout} s")
        line = self._proc.stdout.readline()
        if not line:
            raise RunnerError(f"runner exited with code {self._proc.poll()}")
        return line

    def _roundtrip(self, frame: dict) -> dict:
        self._send(frame)
        line = self._read_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RunnerError(f"malformed runner frame: {exc}", frame=line) from exc
        if reply.get("type") == "error":
            raise RunnerError(f"runner error: {reply.get('message')}", frame=reply)
        want = frame.get("id")
        if want is not None and reply.get("id") != want:
            raise RunnerError(f"reply id {reply.get('id')} does not match request {want}",
                              frame=reply)
        return reply

    def fit(self, subset: FeatureSubset, X, y, task: str, seed: int) -> None:
        self._next_id += 1
        reply = self._roundtrip({
            "type": "fit",
            "id": self._next_id,
            "subset": [int(j) for j in subset.indices],
            "x": np.asarray(X, dtype=float).tolist(),
            "y": np.asarray(y, dtype=float).tolist(),
            "task": task,
            "seed": int(seed),
        })
        if reply.get("type") != "result" or not reply.get("ok", False):
            raise RunnerError("fit did not succeed", frame=reply)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._next_id += 1
        reply = self._roundtrip({
            "type": "predict",
            "id": self._next_id,
            "x": X.tolist(),
        })
        preds = reply.get("predictions")
        if reply.get("type") != "result" or preds is None:
            raise RunnerError("predict did not return predictions", frame=reply)
        out = np.asarray(preds, dtype=float)
        if out.shape != (X.shape[0],):
            raise RunnerError(
                f"expected {X.shape[0]} predictions, got {out.shape}", frame=reply
            )
        return out

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
            except RunnerError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def runner_session(spec: LearnerSpec, timeout: float | None = None) -> RunnerSession:
    """Open a session against an external model runner."""
    return RunnerSession(spec, timeout=timeout)
