"""Linear time-varying system descriptions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("constant", "polynomial", "sampled")


@dataclass(frozen=True, eq=False)
class LtvSystem:
    """Coefficient evaluators ``A(t)`` (n x n) and ``B(t)`` (n x m) on [0, horizon].

    Use the ``constant``, ``polynomial`` and ``sampled`` constructors rather
    than building instances directly.

    ``payload`` holds, per kind:

    * constant: ``(A, B)``
    * polynomial: ``(A_coeffs, B_coeffs)`` with shapes ``(k, n, n)`` and
      ``(k, n, m)``, ascending degree
    * sampled: ``(times, A_samples, B_samples)``, piecewise-linear in t
    """

    kind: str
    horizon: float
    payload: tuple
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be a positive finite number")
        for arr in self.payload:
            if not np.all(np.isfinite(arr)):
                raise ValueError("system coefficients must be finite")
        if self.kind == "constant":
            A, B = self.payload
            n, m = A.shape[0], B.shape[1]
            shapes_ok = A.shape == (n, n) and B.shape[0] == n
        elif self.kind == "polynomial":
            Ac, Bc = self.payload
            n, m = Ac.shape[1], Bc.shape[2]
            shapes_ok = Ac.shape[1:] == (n, n) and Bc.shape[1] == n
        else:
            ts, As, Bs = self.payload
            n, m = As.shape[1], Bs.shape[2]
            shapes_ok = (As.shape == (ts.size, n, n) and Bs.shape == (ts.size, n, m))
            if ts.size < 2 or np.any(np.diff(ts) <= 0):
                raise ValueError("sample times must be strictly increasing")
            if ts[0] != 0.0 or not np.isclose(ts[-1], self.horizon, rtol=1e-12, atol=0):
                raise ValueError("sample times must span [0, horizon]")
        if not shapes_ok:
            raise ValueError("inconsistent A/B dimensions")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "m", int(m))

    @classmethod
    def constant(cls, A, B, horizon):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        return cls("constant", float(horizon), (A, B))

    @classmethod
    def polynomial(cls, A_coeffs, B_coeffs, horizon):
        Ac = np.asarray(A_coeffs, dtype=float)
        Bc = np.asarray(B_coeffs, dtype=float)
        if Ac.ndim == 2:
            Ac = Ac[None]
        if Bc.ndim == 2:
            Bc = Bc[None]
        return cls("polynomial", float(horizon), (Ac, Bc))

    @classmethod
    def sampled(cls, times, A_samples, B_samples):
        ts = np.asarray(times, dtype=float)
        return cls("sampled", float(ts[-1]),
                   (ts, np.asarray(A_samples, dtype=float), np.asarray(B_samples, dtype=float)))

    def A(self, t):
        return self._eval(t, 0)

    def B(self, t):
        return self._eval(t, 1)

    def _eval(self, t, which):
        if self.kind == "constant":
            return self.payload[which]
        if self.kind == "polynomial":
            coeffs = self.payload[which]
            out = np.zeros(coeffs.shape[1:])
            for c in coeffs[::-1]:
                out = out * t + c
            return out
        ts, samples = self.payload[0], self.payload[1 + which]
        t = min(max(t, ts[0]), ts[-1])
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), ts.size - 2)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - w) * samples[k] + w * samples[k + 1]

    @property
    def breakpoints(self):
        """Interior times where A or B may have a kink."""
        if self.kind == "sampled":
            return self.payload[0][1:-1]
        return np.empty(0)
