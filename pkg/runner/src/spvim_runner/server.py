"""Serve fit/predict requests over stdin/stdout (protocol version 1).

Frames are newline-delimited JSON.  The loop answers a handshake,
trains one model per ``fit`` request using only the 1-based ``subset``
columns of the supplied matrix, returns one prediction per row on
``predict``, and exits 0 on ``shutdown``.  A malformed or out-of-order
frame produces an error frame and the loop continues; unrecoverable
failures produce an error frame and exit 1.

Two learners are available via ``--learner``: plain least squares
(``ols``) and depth-1 gradient-boosted trees (``gbt``).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

PROTOCOL_VERSION = 1
CAPABILITIES = ["fit", "predict"]


def _compact(frame: dict) -> str:
    return json.dumps(frame, separators=(",", ":"))


class _MeanModel:
    def __init__(self, mean: float):
        self.mean = mean

    def predict(self, X):
        return np.full(X.shape[0], self.mean)


class _OlsModel:
    """Least squares with intercept on the selected columns."""

    def __init__(self, X, y):
        design = np.hstack([np.ones((X.shape[0], 1)), X])
        self.coef, *_ = np.linalg.lstsq(design, y, rcond=None)

    def predict(self, X):
        return np.hstack([np.ones((X.shape[0], 1)), X]) @ self.coef


class _GbtModel:
    """Depth-1 boosted trees; probabilities for binary tasks."""

    def __init__(self, X, y, task, seed):
        from sklearn.ensemble import GradientBoostingClassifier, GradientBoostingRegressor

        params = dict(max_depth=1, n_estimators=200, learning_rate=0.1,
                      random_state=seed)
        if task == "binary":
            self.model = GradientBoostingClassifier(**params).fit(X, y)
            self.binary = True
        else:
            self.model = GradientBoostingRegressor(**params).fit(X, y)
            self.binary = False

    def predict(self, X):
        if self.binary:
            return self.model.predict_proba(X)[:, 1]
        return self.model.predict(X)


class RunnerState:
    """One fitted model plus protocol bookkeeping for a session."""

    def __init__(self, learner: str, default_seed: int):
        self.learner = learner
        self.default_seed = default_seed
        self.model = None
        self.columns = None
        self.last_id = 0

    def check_id(self, frame):
        request_id = frame.get("id")
        if not isinstance(request_id, int):
            raise ProtocolViolation("missing integer request id")
        if request_id <= self.last_id:
            raise ProtocolViolation(
                f"request ids must be strictly increasing (got {request_id} "
                f"after {self.last_id})"
            )
        self.last_id = request_id
        return request_id

    def fit(self, frame) -> None:
        subset = frame.get("subset")
        if not isinstance(subset, list):
            raise ProtocolViolation("fit frame requires a subset list")
        X = np.asarray(frame.get("x"), dtype=float)
        y = np.asarray(frame.get("y"), dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ProtocolViolation("fit frame x/y shapes are inconsistent")
        task = frame.get("task", "regression")
        if task not in ("regression", "binary"):
            raise ProtocolViolation(f"unknown task {task!r}")
        cols = np.asarray(subset, dtype=int) - 1
        if len(cols) and (cols.min() < 0 or cols.max() >= X.shape[1]):
            raise ProtocolViolation("subset indices out of range")
        seed = int(frame.get("seed", self.default_seed))
        Xs = X[:, cols]
        if len(cols) == 0:
            self.model = _MeanModel(float(y.mean()))
        elif self.learner == "ols":
            self.model = _OlsModel(Xs, y)
        else:
            self.model = _GbtModel(Xs, y, task, seed)
        self.columns = cols

    def predict(self, frame) -> list:
        if self.model is None:
            raise ProtocolViolation("predict before fit")
        X = np.asarray(frame.get("x"), dtype=float)
        if X.ndim != 2:
            raise ProtocolViolation("predict frame x must be a matrix")
        if len(self.columns) and X.shape[1] <= self.columns.max():
            raise ProtocolViolation("predict frame has too few columns")
        return [float(v) for v in self.model.predict(X[:, self.columns])]


class ProtocolViolation(Exception):
    pass


def serve(stdin=None, stdout=None, learner: str = "ols", seed: int = 0) -> int:
    """Run the request loop; returns the process exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    state = RunnerState(learner, seed)

    def reply(frame: dict) -> None:
        stdout.write(_compact(frame) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            frame = json.loads(line)
        except json.JSONDecodeError as exc:
            reply({"type": "error", "id": None, "message": f"malformed frame: {exc.msg}"})
            continue
        kind = frame.get("type")
        try:
            if kind == "handshake":
                if frame.get("version") != PROTOCOL_VERSION:
                    reply({"type": "error", "id": None,
                           "message": f"unsupported protocol version {frame.get('version')}"})
                    continue
                reply({"type": "handshake", "version": PROTOCOL_VERSION,
                       "capabilities": CAPABILITIES})
            elif kind == "fit":
                request_id = state.check_id(frame)
                state.fit(frame)
                reply({"type": "result", "id": request_id, "ok": True})
            elif kind == "predict":
                request_id = state.check_id(frame)
                predictions = state.predict(frame)
                reply({"type": "result", "id": request_id, "predictions": predictions})
            elif kind == "shutdown":
                return 0
            else:
                reply({"type": "error", "id": frame.get("id"),
                       "message": f"unknown frame type {kind!r}"})
        except ProtocolViolation as exc:
            reply({"type": "error", "id": frame.get("id"), "message": str(exc)})
        except Exception as exc:  # unrecoverable: report and stop
            reply({"type": "error", "id": frame.get("id"),
                   "message": f"internal failure: {exc}"})
            return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spvim-runner", description=__doc__)
    parser.add_argument("--learner", choices=("ols", "gbt"), default="ols")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    return serve(learner=args.learner, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
