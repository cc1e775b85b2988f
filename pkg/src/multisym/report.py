"""Residual reports: per-equation norms over a set of nodes, JSON and CSV output."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ResidualReport"]


@dataclass
class ResidualReport:
    """Residual values per node for a set of named equations.

    ``values[name][i]`` is the largest absolute component of equation
    ``name`` at ``points[i]``.
    """

    points: np.ndarray
    values: dict[str, np.ndarray] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    evaluations: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        for k, v in list(self.values.items()):
            self.values[k] = np.abs(np.asarray(v, dtype=float).reshape(-1))

    @property
    def nodes(self) -> int:
        return self.points.shape[0]

    @property
    def equations(self) -> list[str]:
        return list(self.values)

    def add(self, name: str, values) -> None:
        v = np.abs(np.asarray(values, dtype=float).reshape(-1))
        if v.size != self.nodes:
            raise ValueError(f"{name}: expected {self.nodes} node values, got {v.size}")
        self.values[name] = v

    def l_inf(self, name: str) -> float:
        v = self.values[name]
        return float(v.max()) if v.size else 0.0

    def l_2(self, name: str) -> float:
        return float(np.sqrt(np.sum(self.values[name] ** 2)))

    def summary(self) -> dict[str, dict]:
        return {
            name: {"L_inf": self.l_inf(name), "L_2": self.l_2(name), "nodes": self.nodes}
            for name in self.values
        }

    def passed(self, tol: float, equations=None) -> bool:
        names = self.equations if equations is None else equations
        return all(self.l_inf(n) < tol for n in names)

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {
            "equations": self.summary(),
            "nodes": self.nodes,
            "evaluations": self.evaluations,
            "config": self.config,
        }
        if timestamp:
            out["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return out

    def to_json(self, path=None, timestamp: bool = True) -> str:
        text = json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True, default=_jsonable)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path=None) -> str:
        """One row per node per equation: ``x1..xn, equation, value``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = self.points.shape[1]
        w.writerow([f"x{i + 1}" for i in range(dim)] + ["equation", "value"])
        for name, vals in self.values.items():
            for pt, v in zip(self.points, vals):
                w.writerow([repr(float(c)) for c in pt] + [name, repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
