"""Per-box outcome counts over (frequency, amplitude) space and their statistics."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "EmptyBox",
    "GridShapeMismatch",
    "NoEligibleBoxes",
    "ProbabilityGrid",
    "DifferenceMap",
    "difference_map",
    "max_abs_change",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("omega_lo", "omega_hi", "p_lo", "p_hi", "total", "crosswell",
               "undetermined", "diverged", "probability", "ci_halfwidth")
_COUNT_FIELDS = ("total_counts", "crosswell_counts", "undetermined_counts", "diverged_counts")


class EmptyBox(ValueError):
    pass


class GridShapeMismatch(ValueError):
    pass


class NoEligibleBoxes(ValueError):
    pass


def _edges(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(float(lo), float(hi), int(n) + 1)


@dataclass
class ProbabilityGrid:
    """Counts indexed ``[i, j]`` with i over frequency boxes and j over amplitude boxes."""

    omega_edges: np.ndarray
    amplitude_edges: np.ndarray
    total_counts: np.ndarray = None
    crosswell_counts: np.ndarray = None
    undetermined_counts: np.ndarray = None
    diverged_counts: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omega_edges = np.asarray(self.omega_edges, dtype=np.float64)
        self.amplitude_edges = np.asarray(self.amplitude_edges, dtype=np.float64)
        for e, name in ((self.omega_edges, "omega_edges"), (self.amplitude_edges, "amplitude_edges")):
            if e.ndim != 1 or len(e) < 2 or not np.all(np.diff(e) > 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 entries")
        for name in _COUNT_FIELDS:
            arr = getattr(self, name)
            arr = np.zeros(self.shape, dtype=np.int64) if arr is None else np.asarray(arr, dtype=np.int64)
            if arr.shape != self.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.shape}")
            setattr(self, name, arr)
        excess = self.crosswell_counts + self.undetermined_counts + self.diverged_counts
        if np.any(excess > self.total_counts) or np.any(self.total_counts < 0):
            raise ValueError("per-box outcome counts exceed the box total")

    @classmethod
    def empty(cls, omega_range, amplitude_range, nx: int, ny: int, **meta) -> "ProbabilityGrid":
        return cls(_edges(*omega_range, nx), _edges(*amplitude_range, ny), meta=dict(meta))

    @property
    def nx(self) -> int:
        return len(self.omega_edges) - 1

    @property
    def ny(self) -> int:
        return len(self.amplitude_edges) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    # -- binning ----------------------------------------------------------

    @staticmethod
    def _bin(edges: np.ndarray, v: float) -> int:
        if not (edges[0] <= v <= edges[-1]):
            raise ValueError(f"value {v} outside [{edges[0]}, {edges[-1]}]")
        # half-open boxes, the last one closed
        k = int(np.searchsorted(edges, v, side="right")) - 1
        return min(k, len(edges) - 2)

    def box_of(self, omega: float, amplitude: float) -> tuple[int, int]:
        return self._bin(self.omega_edges, omega), self._bin(self.amplitude_edges, amplitude)

    def box_bounds(self, i: int, j: int) -> tuple[float, float, float, float]:
        return (self.omega_edges[i], self.omega_edges[i + 1],
                self.amplitude_edges[j], self.amplitude_edges[j + 1])

    # -- accumulation ---------------------------------------------------------

    def add(self, i: int, j: int, label: str) -> None:
        self.total_counts[i, j] += 1
        if label == "cross_well":
            self.crosswell_counts[i, j] += 1
        elif label == "undetermined":
            self.undetermined_counts[i, j] += 1
        elif label == "diverged":
            self.diverged_counts[i, j] += 1

    def same_axes(self, other: "ProbabilityGrid") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.omega_edges, other.omega_edges)
                and np.array_equal(self.amplitude_edges, other.amplitude_edges))

    def merge(self, other: "ProbabilityGrid") -> "ProbabilityGrid":
        if not self.same_axes(other):
            raise GridShapeMismatch("cannot merge grids with different edges")
        return ProbabilityGrid(self.omega_edges, self.amplitude_edges,
                               *(getattr(self, f) + getattr(other, f) for f in _COUNT_FIELDS),
                               meta=dict(self.meta))

    __add__ = merge

    def counts_equal(self, other: "ProbabilityGrid") -> bool:
        return self.same_axes(other) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in _COUNT_FIELDS)

    # -- statistics -----------------------------------------------------------

    def probability(self, i: int, j: int) -> tuple[float, float]:
        """Cross-well fraction in box (i, j) with a 95 % normal-approximation half-width."""
        n = int(self.total_counts[i, j])
        if n <= 0:
            raise EmptyBox(f"box ({i}, {j}) has no samples")
        p = self.crosswell_counts[i, j] / n
        hw = 1.96 * math.sqrt(p * (1 - p) / n)
        return float(p), float(min(max(hw, 0.0), 1.0))

    def probabilities(self) -> np.ndarray:
        """Probability array with NaN in empty boxes."""
        with np.errstate(invalid="ignore", divide="ignore"):
            p = self.crosswell_counts / self.total_counts
        return np.where(self.total_counts > 0, p, np.nan)

    def halfwidths(self) -> np.ndarray:
        p = self.probabilities()
        with np.errstate(invalid="ignore", divide="ignore"):
            hw = 1.96 * np.sqrt(p * (1 - p) / self.total_counts)
        return np.clip(hw, 0.0, 1.0)

    def mean_probability(self, mask=None) -> tuple[float, float]:
        """Pooled probability over (masked) boxes and its binomial standard error."""
        m = np.ones(self.shape, bool) if mask is None else np.asarray(mask, bool)
        n = int(self.total_counts[m].sum())
        if n == 0:
            raise EmptyBox("no samples in the selected boxes")
        p = self.crosswell_counts[m].sum() / n
        return float(p), float(math.sqrt(p * (1 - p) / n))

    def window_mask(self, omega_range, amplitude_range) -> np.ndarray:
        """Boxes lying entirely inside the given window."""
        oi = (self.omega_edges[:-1] >= omega_range[0] - 1e-12) & (self.omega_edges[1:] <= omega_range[1] + 1e-12)
        aj = (self.amplitude_edges[:-1] >= amplitude_range[0] - 1e-12) & (
            self.amplitude_edges[1:] <= amplitude_range[1] + 1e-12)
        return oi[:, None] & aj[None, :]

    # -- serialization ----------------------------------------------------------

    def rows(self):
        p = self.probabilities()
        hw = self.halfwidths()
        for i in range(self.nx):
            for j in range(self.ny):
                olo, ohi, alo, ahi = self.box_bounds(i, j)
                yield (olo, ohi, alo, ahi, int(self.total_counts[i, j]),
                       int(self.crosswell_counts[i, j]), int(self.undetermined_counts[i, j]),
                       int(self.diverged_counts[i, j]), p[i, j], hw[i, j])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in sorted(self.meta.items()):
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([repr(float(x)) for x in r[:4]] + list(r[4:8])
                       + ["" if math.isnan(x) else repr(float(x)) for x in r[8:]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        p = self.probabilities()
        hw = self.halfwidths()
        return {
            "meta": dict(self.meta),
            "nx": self.nx,
            "ny": self.ny,
            "omega_edges": self.omega_edges.tolist(),
            "amplitude_edges": self.amplitude_edges.tolist(),
            "boxes": [dict(zip(CSV_COLUMNS, [float(r[0]), float(r[1]), float(r[2]), float(r[3]),
                                             *r[4:8], None if math.isnan(r[8]) else float(r[8]),
                                             None if math.isnan(r[9]) else float(r[9])]))
                      for r in self.rows()],
            **{f: getattr(self, f).tolist() for f in _COUNT_FIELDS},
            "probability": [[None if math.isnan(v) else float(v) for v in row] for row in p],
            "ci_halfwidth": [[None if math.isnan(v) else float(v) for v in row] for row in hw],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ProbabilityGrid":
        return cls(d["omega_edges"], d["amplitude_edges"],
                   *(d[f] for f in _COUNT_FIELDS), meta=dict(d.get("meta", {})))

    @classmethod
    def from_csv(cls, text_or_path) -> "ProbabilityGrid":
        text = str(text_or_path)
        if "\n" not in text:
            text = Path(text).read_text()
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line.strip():
                body.append(line)
        rows = list(csv.DictReader(body))
        if not rows:
            raise ValueError("grid CSV has no rows")
        oe = sorted({float(r["omega_lo"]) for r in rows} | {float(r["omega_hi"]) for r in rows})
        ae = sorted({float(r["p_lo"]) for r in rows} | {float(r["p_hi"]) for r in rows})
        g = cls(oe, ae, meta=meta)
        if len(rows) != g.nx * g.ny:
            raise ValueError(f"grid CSV has {len(rows)} rows, expected {g.nx * g.ny}")
        for r in rows:
            i = int(np.searchsorted(g.omega_edges, float(r["omega_lo"])))
            j = int(np.searchsorted(g.amplitude_edges, float(r["p_lo"])))
            g.total_counts[i, j] = int(r["total"])
            g.crosswell_counts[i, j] = int(r["crosswell"])
            g.undetermined_counts[i, j] = int(r["undetermined"])
            g.diverged_counts[i, j] = int(r["diverged"])
        return g

    @classmethod
    def load(cls, path) -> "ProbabilityGrid":
        path = Path(path)
        if path.suffix.lower() == ".json":
            return cls.from_dict(json.loads(path.read_text()))
        return cls.from_csv(path.read_text())


@dataclass
class DifferenceMap:
    """Signed per-box change ``p_b - p_a``; ``missing`` marks boxes empty in either grid."""

    omega_edges: np.ndarray
    amplitude_edges: np.ndarray
    values: np.ndarray
    missing: np.ndarray

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("omega_lo", "omega_hi", "p_lo", "p_hi", "difference", "missing"))
        for i in range(self.values.shape[0]):
            for j in range(self.values.shape[1]):
                v = self.values[i, j]
                w.writerow([repr(float(self.omega_edges[i])), repr(float(self.omega_edges[i + 1])),
                            repr(float(self.amplitude_edges[j])), repr(float(self.amplitude_edges[j + 1])),
                            "" if self.missing[i, j] else repr(float(v)), int(self.missing[i, j])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def difference_map(grid_a: ProbabilityGrid, grid_b: ProbabilityGrid) -> DifferenceMap:
    if not grid_a.same_axes(grid_b):
        raise GridShapeMismatch(f"grid shapes/edges differ: {grid_a.shape} vs {grid_b.shape}")
    pa, pb = grid_a.probabilities(), grid_b.probabilities()
    missing = np.isnan(pa) | np.isnan(pb)
    return DifferenceMap(grid_a.omega_edges.copy(), grid_a.amplitude_edges.copy(),
                         np.where(missing, np.nan, pb - pa), missing)


def max_abs_change(grid_a: ProbabilityGrid, grid_b: ProbabilityGrid, min_samples: int = 100) -> float:
    """Largest |p_b - p_a| over boxes holding at least ``min_samples`` in both grids."""
    d = difference_map(grid_a, grid_b)
    ok = (grid_a.total_counts >= min_samples) & (grid_b.total_counts >= min_samples) & ~d.missing
    if not ok.any():
        raise NoEligibleBoxes(f"no box has >= {min_samples} samples in both grids")
    return float(np.max(np.abs(d.values[ok])))
