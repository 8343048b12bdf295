"""Sequential predictive models: prefix-addressable predictions with snapshots.

A predictive model answers queries at any dataset prefix; the prediction at
prefix i depends only on the first i observations and the query. Snapshots
cache per-prefix state so that re-prediction at a stored prefix is O(1) in
history length.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
import queue
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .core import BinnedPMF, Gaussian, PredictiveDistribution, normal_cdf
from .errors import BridgeProtocolError, BridgeTimeout, PrefixError


@dataclass(frozen=True)
class SnapshotHandle:
    """Opaque reference to a cached model state at a fixed prefix size."""

    prefix: int
    model: "PredictiveModel"

    def predict_mean(self, query) -> float:
        return self.model.predict_mean(query, self.prefix)

    def predict_dist(self, query) -> PredictiveDistribution:
        return self.model.predict_dist(query, self.prefix)


@runtime_checkable
class PredictiveModel(Protocol):
    """Behavioral contract for sequential predictive models."""

    def fit_append(self, x, r) -> None: ...

    def predict_mean(self, query, prefix_len: int | None = None) -> float: ...

    def predict_dist(self, query, prefix_len: int | None = None) -> PredictiveDistribution: ...

    def snapshot(self, prefix_len: int) -> SnapshotHandle: ...

    def __len__(self) -> int: ...


class ConjugateLinearModel:
    """Bayesian linear regression with known noise variance.

    Prior beta ~ N(0, I / prior_precision); posterior over f(x) = x'beta is
    exactly Gaussian, which makes this an exact oracle for validating the
    subsampled variance estimator.
    """

    def __init__(self, dim: int, prior_precision: float = 1.0, noise_variance: float = 1.0):
        if prior_precision <= 0 or noise_variance <= 0:
            raise ValueError("prior_precision and noise_variance must be positive")
        self.dim = dim
        self.prior_precision = float(prior_precision)
        self.noise_variance = float(noise_variance)
        self._xs: list[np.ndarray] = []
        self._rs: list[float] = []
        # prefix -> (precision matrix, X'r / sigma^2)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {
            0: (prior_precision * np.eye(dim), np.zeros(dim))
        }

    def __len__(self) -> int:
        return len(self._xs)

    def fit_append(self, x, r) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected query of dimension {self.dim}, got {x.shape}")
        self._xs.append(x)
        self._rs.append(float(r))

    def extend(self, xs, rs) -> None:
        for x, r in zip(xs, rs):
            self.fit_append(x, r)

    def _stats(self, prefix: int) -> tuple[np.ndarray, np.ndarray]:
        if prefix > len(self._xs):
            raise PrefixError(f"prefix {prefix} exceeds history of {len(self._xs)}")
        if prefix in self._cache:
            return self._cache[prefix]
        base = max(p for p in self._cache if p <= prefix)
        prec, xtr = self._cache[base]
        block = np.asarray(self._xs[base:prefix])
        rew = np.asarray(self._rs[base:prefix])
        prec = prec + block.T @ block / self.noise_variance
        xtr = xtr + block.T @ rew / self.noise_variance
        self._cache[prefix] = (prec, xtr)
        return prec, xtr

    def _resolve(self, prefix_len: int | None) -> int:
        return len(self._xs) if prefix_len is None else int(prefix_len)

    def predict_mean(self, query, prefix_len: int | None = None) -> float:
        prefix = self._resolve(prefix_len)
        prec, xtr = self._stats(prefix)
        mu = np.linalg.solve(prec, xtr)
        return float(np.dot(np.asarray(query, dtype=float), mu))

    def posterior_var(self, query, prefix_len: int | None = None) -> float:
        """Exact posterior variance of the latent mean x'beta at the query."""
        prefix = self._resolve(prefix_len)
        prec, _ = self._stats(prefix)
        q = np.asarray(query, dtype=float)
        return float(q @ np.linalg.solve(prec, q))

    def predict_dist(self, query, prefix_len: int | None = None) -> Gaussian:
        # posterior predictive of a noisy future response
        mean = self.predict_mean(query, prefix_len)
        var = self.posterior_var(query, prefix_len) + self.noise_variance
        return Gaussian(mean, var)

    def snapshot(self, prefix_len: int) -> SnapshotHandle:
        self._stats(prefix_len)
        return SnapshotHandle(prefix_len, self)


class BetaBernoulliModel:
    """Context-free conjugate model for binary rewards."""

    def __init__(self, a0: float = 1.0, b0: float = 1.0):
        if a0 <= 0 or b0 <= 0:
            raise ValueError("pseudo-counts must be positive")
        self.a0 = float(a0)
        self.b0 = float(b0)
        self._cum_successes = [0.0]

    def __len__(self) -> int:
        return len(self._cum_successes) - 1

    def fit_append(self, x, r) -> None:
        self._cum_successes.append(self._cum_successes[-1] + float(r))

    def _successes(self, prefix: int) -> float:
        if prefix >= len(self._cum_successes):
            raise PrefixError(f"prefix {prefix} exceeds history of {len(self)}")
        return self._cum_successes[prefix]

    def predict_mean(self, query=None, prefix_len: int | None = None) -> float:
        prefix = len(self) if prefix_len is None else int(prefix_len)
        succ = self._successes(prefix)
        return (self.a0 + succ) / (self.a0 + self.b0 + prefix)

    def predict_dist(self, query=None, prefix_len: int | None = None) -> BinnedPMF:
        p = self.predict_mean(query, prefix_len)
        return BinnedPMF(midpoints=[0.0, 1.0], widths=[1.0, 1.0], probs=[1.0 - p, p])

    def snapshot(self, prefix_len: int) -> SnapshotHandle:
        self._successes(prefix_len)
        return SnapshotHandle(prefix_len, self)


# ---------------------------------------------------------------------------
# External model server client
# ---------------------------------------------------------------------------

class BridgeSession:
    """Client for a newline-delimited JSON model server over stdio.

    Requests are strictly sequential; each request id receives exactly one
    response. A transport-level violation closes the session.
    """

    def __init__(self, command, timeout: float = 60.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout
        self._next_id = 0
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._closed = False

    def _read_loop(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _request(self, payload: dict) -> dict:
        if self._closed:
            raise BridgeProtocolError("session closed")
        msg_id = self._next_id
        self._next_id += 1
        payload = {"id": msg_id, **payload}
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise BridgeProtocolError(f"server pipe broken: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise BridgeTimeout(f"no response within {self.timeout}s")
        if line is None:
            self.close()
            raise BridgeProtocolError("server closed its output stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            self.close()
            raise BridgeProtocolError(f"malformed response line: {line!r}") from exc
        if not isinstance(resp, dict) or resp.get("id") != msg_id:
            self.close()
            raise BridgeProtocolError(f"response id mismatch: {resp!r}")
        if not resp.get("ok", False):
            raise BridgeProtocolError(
                resp.get("message", "server error"), code=resp.get("code")
            )
        return resp

    def init(self, features, targets) -> int:
        features = [list(map(float, row)) for row in features]
        targets = [float(t) for t in targets]
        resp = self._request({"op": "init", "features": features, "targets": targets})
        return int(resp["n"])

    def predict(self, query, prefix_len: int) -> tuple[float, BinnedPMF]:
        resp = self._request(
            {"op": "predict", "query": [float(v) for v in query], "prefix_len": int(prefix_len)}
        )
        bins = resp["bins"]
        pmf = BinnedPMF(bins["midpoints"], bins["widths"], bins["probs"])
        return float(resp["mean"]), pmf

    def shutdown(self) -> None:
        if self._closed:
            return
        try:
            self._request({"op": "shutdown"})
        finally:
            self.close()

    def close(self) -> None:
        self._closed = True
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=0.5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        # the reader thread holds the stdout lock until it sees EOF, so the
        # stream is only closed once the process is certainly gone
        try:
            self._proc.stdout.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def remote_predict(session: BridgeSession, query, prefix_len: int) -> dict:
    """Convenience wrapper returning {mean, dist} from a live session."""
    mean, pmf = session.predict(query, prefix_len)
    return {"mean": mean, "dist": pmf}


class BridgeModel:
    """PredictiveModel adapter backed by an external model server.

    The wire protocol uploads a full dataset once per session, so the adapter
    restarts the session lazily whenever the local history has grown past the
    uploaded size. Predictions at any prefix of the uploaded data are served
    remotely.
    """

    def __init__(self, command, dim: int, timeout: float = 60.0):
        self.command = command
        self.dim = dim
        self.timeout = timeout
        self._xs: list[list[float]] = []
        self._rs: list[float] = []
        self._session: BridgeSession | None = None
        self._uploaded = -1

    def __len__(self) -> int:
        return len(self._xs)

    def fit_append(self, x, r) -> None:
        x = [float(v) for v in np.asarray(x, dtype=float)]
        if len(x) != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {len(x)}")
        self._xs.append(x)
        self._rs.append(float(r))

    def _ensure_session(self) -> BridgeSession:
        if self._session is not None and self._uploaded == len(self._xs):
            return self._session
        if self._session is not None:
            self._session.shutdown()
        self._session = BridgeSession(self.command, timeout=self.timeout)
        self._session.init(self._xs, self._rs)
        self._uploaded = len(self._xs)
        return self._session

    def _resolve(self, prefix_len):
        prefix = len(self._xs) if prefix_len is None else int(prefix_len)
        if prefix > len(self._xs):
            raise PrefixError(f"prefix {prefix} exceeds history of {len(self._xs)}")
        return prefix

    def predict_mean(self, query, prefix_len: int | None = None) -> float:
        mean, _ = self._ensure_session().predict(query, self._resolve(prefix_len))
        return mean

    def predict_dist(self, query, prefix_len: int | None = None) -> BinnedPMF:
        _, pmf = self._ensure_session().predict(query, self._resolve(prefix_len))
        return pmf

    def snapshot(self, prefix_len: int) -> SnapshotHandle:
        self._resolve(prefix_len)
        return SnapshotHandle(prefix_len, self)

    def close(self) -> None:
        if self._session is not None:
            self._session.shutdown()
            self._session = None
