"""Uniformly sampled trace functions with declared far-field behaviour."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GridError

__all__ = ["GridFunction", "read_grid_csv", "write_grid_csv"]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples ``values[k] = v(x0 + k*h)``.

    Non-periodic functions may declare the limits ``left_asymptote`` and
    ``right_asymptote`` that ``v`` approaches outside the window.
    ``decay_power`` is the exponent ``p`` of an algebraic approach
    ``|v - L| ~ |x|^{-p}`` (``None`` means ``v`` is taken to equal its
    asymptote outside the window).  ``periodic`` marks samples of one
    period; the period is ``len(values) * h``.
    """

    x0: float
    h: float
    values: np.ndarray
    left_asymptote: float | None = None
    right_asymptote: float | None = None
    decay_power: float | None = None
    periodic: bool = False
    asymptote_slack: float = 0.25
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise GridError("values must be a non-empty 1D array")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GridError(f"spacing h must be positive, got {self.h}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.periodic and self.has_asymptotes:
            raise GridError("a periodic grid function cannot declare asymptotes")
        if (self.left_asymptote is None) != (self.right_asymptote is None):
            raise GridError("declare both asymptotes or neither")
        if self.has_asymptotes:
            gaps = (abs(values[0] - self.left_asymptote), abs(values[-1] - self.right_asymptote))
            if max(gaps) > self.asymptote_slack:
                raise GridError(
                    f"boundary values {values[0]:.6g}, {values[-1]:.6g} are farther than "
                    f"{self.asymptote_slack} from the declared asymptotes "
                    f"{self.left_asymptote}, {self.right_asymptote}"
                )

    @property
    def has_asymptotes(self) -> bool:
        return self.left_asymptote is not None

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.size)

    @property
    def x_end(self) -> float:
        return self.x0 + self.h * (self.size - 1)

    def with_values(self, values, **changes) -> "GridFunction":
        """Same grid and metadata, new samples (asymptotes can be overridden in ``changes``)."""
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    def __call__(self, xq) -> np.ndarray:
        """Linear interpolation, constant extension by the asymptotes (or edge values)."""
        xq = np.asarray(xq, dtype=float)
        if self.periodic:
            period = self.size * self.h
            xs = np.append(self.x, self.x0 + period)
            vs = np.append(self.values, self.values[0])
            return np.interp((xq - self.x0) % period + self.x0, xs, vs)
        left = self.left_asymptote if self.has_asymptotes else self.values[0]
        right = self.right_asymptote if self.has_asymptotes else self.values[-1]
        out = np.interp(xq, self.x, self.values)
        out = np.where(xq < self.x0, left, out)
        return np.where(xq > self.x_end, right, out)

    @classmethod
    def sample(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        x0: float,
        x1: float,
        num: int,
        **kwargs,
    ) -> "GridFunction":
        """Sample ``func`` at ``num`` equispaced nodes on ``[x0, x1]``."""
        if num < 2:
            raise GridError("need at least two nodes")
        h = (x1 - x0) / (num - 1)
        x = x0 + h * np.arange(num)
        return cls(x0=x0, h=h, values=func(x), **kwargs)

    @classmethod
    def sample_periodic(
        cls, func: Callable[[np.ndarray], np.ndarray], x0: float, period: float, num: int, **kwargs
    ) -> "GridFunction":
        h = period / num
        x = x0 + h * np.arange(num)
        return cls(x0=x0, h=h, values=func(x), periodic=True, **kwargs)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def write_grid_csv(v: GridFunction, path: str | Path, **extra_meta) -> Path:
    """Write ``x,value`` rows plus a JSON sidecar ``<path>.json`` with the grid metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "value"])
        for xk, vk in zip(v.x, v.values):
            writer.writerow([repr(float(xk)), repr(float(vk))])
    meta = {
        "x0": v.x0,
        "h": v.h,
        "size": v.size,
        "left_asymptote": v.left_asymptote,
        "right_asymptote": v.right_asymptote,
        "decay_power": v.decay_power,
        "periodic": v.periodic,
        "asymptote_slack": v.asymptote_slack,
        **v.meta,
        **extra_meta,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_grid_csv(path: str | Path) -> GridFunction:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header[:2]] != ["x", "value"]:
            raise GridError(f"{path}: expected header 'x,value', got {header}")
        try:
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        except (ValueError, IndexError) as exc:
            raise GridError(f"{path}: malformed row ({exc})") from exc
    values = np.array([r[1] for r in rows])
    side = _sidecar(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    if meta:
        known = {
            "x0", "h", "size", "left_asymptote", "right_asymptote",
            "decay_power", "periodic", "asymptote_slack",
        }
        return GridFunction(
            x0=meta["x0"],
            h=meta["h"],
            values=values,
            left_asymptote=meta.get("left_asymptote"),
            right_asymptote=meta.get("right_asymptote"),
            decay_power=meta.get("decay_power"),
            periodic=bool(meta.get("periodic", False)),
            asymptote_slack=meta.get("asymptote_slack", 0.25),
            meta={k: v for k, v in meta.items() if k not in known},
        )
    xs = np.array([r[0] for r in rows])
    if xs.size < 2:
        raise GridError(f"{path}: cannot infer spacing from fewer than two rows")
    h = float(np.mean(np.diff(xs)))
    return GridFunction(x0=float(xs[0]), h=h, values=values)
