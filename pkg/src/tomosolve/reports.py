"""Solver run reports with fixed JSON field names."""

import json
from dataclasses import dataclass, field

import numpy as np


def _as_list(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return list(v)


class TraceRecorder:
    """Iteration trace that records densely at first, then every ``stride``.

    With ``stride=None`` the first 10_000 iterations are all kept and every
    100th afterwards, which bounds report sizes on long runs.
    """

    def __init__(self, stride=None):
        self.stride = stride
        self.iters = []
        self.values = []

    def want(self, k):
        if self.stride is not None:
            return k % self.stride == 0
        return k < 10_000 or k % 100 == 0

    def add(self, k, value):
        self.iters.append(k)
        self.values.append(float(value))


@dataclass
class SolveReport:
    """Outcome of a penalized-regression solve."""

    x_final: np.ndarray
    objective_trace: list
    certificate_trace: list
    iters: int
    flops: int
    restarts: list
    wall_time_s: float
    trace_iters: list = field(default_factory=list, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "x_final": _as_list(self.x_final),
            "objective_trace": _as_list(self.objective_trace),
            "certificate_trace": _as_list(self.certificate_trace),
            "iters": int(self.iters),
            "flops": int(self.flops),
            "restarts": [
                {"r2": float(r), "iters": int(i), "certificate": float(c)}
                for (r, i, c) in self.restarts
            ],
            "wall_time_s": float(self.wall_time_s),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class ProjectionReport:
    """Outcome of a constrained-projection solve (dual method)."""

    x_final: np.ndarray
    y_final: np.ndarray
    cert_trace: list
    residual_trace: list
    restarts: list
    iters: int
    wall_time_s: float
    flops: int = 0
    trace_iters: list = field(default_factory=list, repr=False)
    final_state: object = None
    extras: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "x_final": _as_list(self.x_final),
            "y_final": _as_list(self.y_final),
            "cert_trace": _as_list(self.cert_trace),
            "residual_trace": _as_list(self.residual_trace),
            "restarts": [{"r_tilde": float(r), "iters": int(i)} for (r, i) in self.restarts],
            "iters": int(self.iters),
            "wall_time_s": float(self.wall_time_s),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass
class ExperimentReport:
    """Synthetic-network run: recovery quality plus work counters."""

    spec: dict
    seed: int
    solver: str
    lla: float
    da: float
    iters: int
    flops: int
    wall_time_s: float
    trace_path: str = None
    extras: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "spec": self.spec,
            "seed": int(self.seed),
            "solver": self.solver,
            "lla": float(self.lla),
            "da": float(self.da),
            "iters": int(self.iters),
            "flops": int(self.flops),
            "wall_time_s": float(self.wall_time_s),
            "trace_path": self.trace_path,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
