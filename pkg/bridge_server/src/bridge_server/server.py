"""Newline-delimited JSON model server over standard input/output.

Wire protocol (one JSON object per line, one response per request, in order):

    {"id": int, "op": "init", "features": [[...]], "targets": [...]}
        -> {"id": int, "ok": true, "n": int}
    {"id": int, "op": "predict", "query": [...], "prefix_len": int}
        -> {"id": int, "ok": true, "mean": float,
            "bins": {"midpoints": [...], "widths": [...], "probs": [...]}}
    {"id": int, "op": "shutdown"} -> {"id": int, "ok": true}, then exit 0
    errors -> {"id": int|null, "ok": false, "code": str, "message": str}

The model is Bayesian linear regression with known noise variance:
prior beta ~ N(0, I / prior_precision), predictive at a prefix is Gaussian
with variance q' Sigma q + noise_variance, discretized onto 64 equal-width
bins spanning mean +/- 6 predictive standard deviations.

Pure standard library on purpose: the harness respawns this process often,
and skipping heavyweight imports keeps startup cheap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys


class ProtocolError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def solve(matrix, rhs):
    """Solve A x = b by Gaussian elimination with partial pivoting."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) == 0.0:
            raise ProtocolError("internal_error", "singular system")
        a[col], a[pivot] = a[pivot], a[col]
        inv = 1.0 / a[col][col]
        for r in range(col + 1, n):
            factor = a[r][col] * inv
            if factor != 0.0:
                for c in range(col, n + 1):
                    a[r][c] -= factor * a[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = a[r][n]
        for c in range(r + 1, n):
            acc -= a[r][c] * x[c]
        x[r] = acc / a[r][r]
    return x


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


class Session:
    """One uploaded dataset plus per-prefix cached sufficient statistics."""

    def __init__(self, features, targets, prior_precision, noise_variance,
                 n_bins=64, span_sds=6.0):
        self.features = features
        self.targets = targets
        self.dim = len(features[0]) if features else 0
        self.lam = prior_precision
        self.sigma2 = noise_variance
        self.n_bins = n_bins
        self.span_sds = span_sds
        prior_prec = [[(self.lam if i == j else 0.0) for j in range(self.dim)]
                      for i in range(self.dim)]
        # prefix -> (precision matrix, X'r / sigma^2)
        self._cache = {0: (prior_prec, [0.0] * self.dim)}

    def _stats(self, prefix: int):
        if prefix in self._cache:
            return self._cache[prefix]
        base = max(p for p in self._cache if p <= prefix)
        prec, xtr = self._cache[base]
        prec = [row[:] for row in prec]
        xtr = xtr[:]
        inv_s2 = 1.0 / self.sigma2
        for row_idx in range(base, prefix):
            x = self.features[row_idx]
            r = self.targets[row_idx]
            for i in range(self.dim):
                xi = x[i] * inv_s2
                prec_i = prec[i]
                for j in range(self.dim):
                    prec_i[j] += xi * x[j]
                xtr[i] += xi * r
        self._cache[prefix] = (prec, xtr)
        return prec, xtr

    def predict(self, query, prefix: int):
        if not 0 <= prefix <= len(self.features):
            raise ProtocolError(
                "prefix_out_of_range",
                f"prefix_len {prefix} outside [0, {len(self.features)}]")
        if len(query) != self.dim:
            raise ProtocolError("bad_request",
                                f"query dimension {len(query)} != {self.dim}")
        prec, xtr = self._stats(prefix)
        if self.dim == 0:
            mean, var = 0.0, self.sigma2
        else:
            mu = solve(prec, xtr)
            z = solve(prec, list(query))
            mean = sum(q * m for q, m in zip(query, mu))
            var = sum(q * v for q, v in zip(query, z)) + self.sigma2
        sd = math.sqrt(var)
        lo = mean - self.span_sds * sd
        width = 2.0 * self.span_sds * sd / self.n_bins
        midpoints, widths, probs = [], [], []
        prev_cdf = normal_cdf((lo - mean) / sd)
        for b in range(self.n_bins):
            hi_edge = lo + (b + 1) * width
            cdf = normal_cdf((hi_edge - mean) / sd)
            midpoints.append(lo + (b + 0.5) * width)
            widths.append(width)
            probs.append(cdf - prev_cdf)
            prev_cdf = cdf
        total = sum(probs)
        probs = [p / total for p in probs]
        return mean, {"midpoints": midpoints, "widths": widths, "probs": probs}


def _require(msg: dict, key: str):
    if key not in msg:
        raise ProtocolError("bad_request", f"missing field {key!r}")
    return msg[key]


def _as_matrix(value, what: str):
    if not isinstance(value, list) or any(not isinstance(r, list) for r in value):
        raise ProtocolError("bad_request", f"{what} must be a list of rows")
    out = []
    width = None
    for row in value:
        try:
            row = [float(v) for v in row]
        except (TypeError, ValueError):
            raise ProtocolError("bad_request", f"non-numeric value in {what}")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ProtocolError("bad_request", f"ragged rows in {what}")
        out.append(row)
    return out


def _as_vector(value, what: str):
    if not isinstance(value, list):
        raise ProtocolError("bad_request", f"{what} must be a list")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ProtocolError("bad_request", f"non-numeric value in {what}")


def handle(msg: dict, state: dict, args) -> dict:
    op = _require(msg, "op")
    if op == "init":
        if state["session"] is not None:
            raise ProtocolError("already_initialized", "one init per session")
        features = _as_matrix(_require(msg, "features"), "features")
        targets = _as_vector(_require(msg, "targets"), "targets")
        if len(features) != len(targets):
            raise ProtocolError("bad_request", "features/targets length mismatch")
        if features and len(features[0]) == 0:
            raise ProtocolError("bad_request", "zero-dimension features")
        state["session"] = Session(features, targets, args.prior_precision,
                                   args.noise_variance, args.bins)
        return {"ok": True, "n": len(features)}
    if op == "predict":
        if state["session"] is None:
            raise ProtocolError("no_session", "predict before init")
        query = _as_vector(_require(msg, "query"), "query")
        prefix = _require(msg, "prefix_len")
        if not isinstance(prefix, int) or isinstance(prefix, bool):
            raise ProtocolError("bad_request", "prefix_len must be an integer")
        mean, bins = state["session"].predict(query, prefix)
        return {"ok": True, "mean": mean, "bins": bins}
    if op == "shutdown":
        state["done"] = True
        return {"ok": True}
    raise ProtocolError("bad_request", f"unknown op {op!r}")


def serve(stdin, stdout, args) -> int:
    state = {"session": None, "done": False}
    for line in stdin:
        if not line.strip():
            continue
        msg_id = None
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ProtocolError("parse_error", "message must be an object")
            msg_id = msg.get("id")
            resp = {"id": msg_id, **handle(msg, state, args)}
        except json.JSONDecodeError as exc:
            resp = {"id": None, "ok": False, "code": "parse_error",
                    "message": f"invalid JSON: {exc.msg}"}
        except ProtocolError as exc:
            resp = {"id": msg_id, "ok": False, "code": exc.code,
                    "message": str(exc)}
        except Exception as exc:  # keep serving no matter what
            resp = {"id": msg_id, "ok": False, "code": "internal_error",
                    "message": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
        if state["done"]:
            return 0
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--prior-precision", type=float, default=1.0)
    parser.add_argument("--noise-variance", type=float, default=1.0)
    parser.add_argument("--bins", type=int, default=64)
    args = parser.parse_args(argv)
    if args.prior_precision <= 0 or args.noise_variance <= 0 or args.bins < 2:
        parser.error("prior precision and noise variance must be positive; "
                     "bins must be at least 2")
    try:
        return serve(sys.stdin, sys.stdout, args)
    except Exception:
        return 1


if __name__ == "__main__":
    sys.exit(main())
