"""Basin stability with parameter mismatch: sampling and campaign execution.

Each sample owns a private Philox stream keyed by ``seed`` and addressed
by ``(sample index, stream tag)`` in the counter, so a sample can be
regenerated in isolation and results never depend on scheduling.
"""
from __future__ import annotations

import hashlib
import json
import math
import multiprocessing as mp
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from . import __version__
from .classifier import ClassifierSettings, Label, Outcome, classify
from .gridmap import ProbabilityGrid
from .harvesters import SystemSpec, UnknownParameter, get_system, preset, well_geometry
from .ode_core import IntegratorSettings, integrate_array

__all__ = [
    "ConfigError",
    "UnresolvableParameterName",
    "MismatchSpec",
    "SampleDomain",
    "RunConfig",
    "Sample",
    "CampaignResult",
    "draw_sample",
    "simulate_sample",
    "run_campaign",
    "config_hash",
    "default_domain",
]

STREAM_EXCITATION = 0
STREAM_INITIAL = 1
STREAM_MISMATCH = 2

LABEL_CODES = {Label.CROSS_WELL: 0, Label.INTRA_WELL: 1, Label.UNDETERMINED: 2, Label.DIVERGED: 3}
CODE_LABELS = {v: k for k, v in LABEL_CODES.items()}


class ConfigError(ValueError):
    """Invalid run configuration; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class UnresolvableParameterName(ConfigError):
    pass


@dataclass(frozen=True)
class MismatchSpec:
    parameter_names: tuple[str, ...] = ()
    relative_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "parameter_names", tuple(self.parameter_names))
        if len(set(self.parameter_names)) != len(self.parameter_names):
            raise ConfigError("parameter names must be unique", "mismatch.parameter_names")
        if not (0.0 <= self.relative_bound < 0.5):
            raise ConfigError(f"relative_bound must lie in [0, 0.5), got {self.relative_bound}",
                              "mismatch.relative_bound")

    @property
    def tag(self) -> str:
        # at least two decimals: b=0.00, b=0.10, b=0.025
        text = f"{self.relative_bound:.6f}".rstrip("0")
        whole, _, frac = text.partition(".")
        return f"b={whole}.{frac.ljust(2, '0')}"


@dataclass(frozen=True)
class SampleDomain:
    omega_range: tuple[float, float]
    amplitude_range: tuple[float, float]
    ic_ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "omega_range", tuple(float(v) for v in self.omega_range))
        object.__setattr__(self, "amplitude_range", tuple(float(v) for v in self.amplitude_range))
        object.__setattr__(self, "ic_ranges",
                           {k: tuple(float(x) for x in v) for k, v in self.ic_ranges.items()})
        for name, r in (("omega_range", self.omega_range), ("amplitude_range", self.amplitude_range),
                        *((f"ic_ranges.{k}", v) for k, v in self.ic_ranges.items())):
            if len(r) != 2 or not r[0] < r[1]:
                raise ConfigError(f"range must be [lo, hi] with lo < hi, got {list(r)}", f"domain.{name}")
        if self.omega_range[0] <= 0:
            raise ConfigError("excitation frequency must be > 0", "domain.omega_range")


def default_domain(system_id: str) -> SampleDomain:
    spec = get_system(system_id)
    return SampleDomain(spec.omega_range, spec.amplitude_range, dict(spec.ic_ranges))


@dataclass(frozen=True)
class RunConfig:
    system_id: str
    params: Any
    domain: SampleDomain
    mismatch: MismatchSpec = MismatchSpec()
    n_samples: int = 200_000
    grid_resolution: tuple[int, int] = (40, 40)
    integrator: IntegratorSettings = IntegratorSettings()
    classifier: ClassifierSettings = ClassifierSettings()
    seed: int = 0
    stratified: bool = True
    strict_paper_mode: bool = False
    output_dir: str = "out"
    sample_log: bool = False
    render: bool = False
    checkpoint_every: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "system_id", get_system(self.system_id).system_id)
        object.__setattr__(self, "grid_resolution", tuple(int(v) for v in self.grid_resolution))
        spec = self.spec
        if not isinstance(self.params, spec.param_cls):
            raise ConfigError(f"params must be {spec.param_cls.__name__}", "params")
        for name in self.mismatch.parameter_names:
            try:
                spec.param_cls.index_of(name)
            except UnknownParameter as exc:
                raise UnresolvableParameterName(str(exc.args[0]), "mismatch.parameter_names") from None
        for name in self.domain.ic_ranges:
            if name not in spec.state_names:
                raise ConfigError(f"{name!r} is not a state of {self.system_id} "
                                  f"({', '.join(spec.state_names)})", f"domain.ic_ranges.{name}")
        nx, ny = self.grid_resolution
        if nx < 1 or ny < 1 or len(self.grid_resolution) != 2:
            raise ConfigError("grid_resolution must be two positive integers", "grid_resolution")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1", "n_samples")
        if self.strict_paper_mode and self.n_samples < nx * ny * 100:
            raise ConfigError(f"strict mode needs n_samples >= 100 per box ({nx * ny * 100})",
                              "n_samples")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be a 64-bit unsigned integer", "seed")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1", "checkpoint_every")
        if self.params.get(self.params.frequency_name) <= 0:
            raise ConfigError("frequency parameter must be > 0", "params")

    @property
    def spec(self) -> SystemSpec:
        return get_system(self.system_id)

    @property
    def n_boxes(self) -> int:
        return self.grid_resolution[0] * self.grid_resolution[1]

    def empty_grid(self) -> ProbabilityGrid:
        return ProbabilityGrid.empty(self.domain.omega_range, self.domain.amplitude_range,
                                     *self.grid_resolution, seed=self.seed,
                                     config_hash=config_hash(self), system=self.system_id,
                                     mismatch=self.mismatch.relative_bound)

    # -- (de)serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "params": self.params.to_dict(),
            "domain": {
                "omega_range": list(self.domain.omega_range),
                "amplitude_range": list(self.domain.amplitude_range),
                "ic_ranges": {k: list(v) for k, v in self.domain.ic_ranges.items()},
            },
            "mismatch": {"parameter_names": list(self.mismatch.parameter_names),
                         "relative_bound": self.mismatch.relative_bound},
            "n_samples": self.n_samples,
            "grid_resolution": list(self.grid_resolution),
            "integrator": asdict(self.integrator),
            "classifier": asdict(self.classifier),
            "seed": self.seed,
            "stratified": self.stratified,
            "strict_paper_mode": self.strict_paper_mode,
            "output_dir": self.output_dir,
            "sample_log": self.sample_log,
            "render": self.render,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Build a config; unspecified fields fall back to the system's presets."""
        d = dict(d)
        if "system_id" not in d:
            raise ConfigError("missing required field", "system_id")
        try:
            spec = get_system(d["system_id"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), "system_id") from None
        try:
            params = spec.param_cls.from_dict(d.get("params", {}), base=preset(spec.system_id))
        except UnknownParameter as exc:
            raise ConfigError(str(exc.args[0]), "params") from None
        except ValueError as exc:
            raise ConfigError(str(exc), "params") from None
        dom = d.get("domain", {})
        base = default_domain(spec.system_id)
        domain = SampleDomain(dom.get("omega_range", base.omega_range),
                              dom.get("amplitude_range", base.amplitude_range),
                              dom.get("ic_ranges", base.ic_ranges))
        mm = d.get("mismatch", {})
        mismatch = MismatchSpec(tuple(mm.get("parameter_names", spec.mismatch_names)),
                                float(mm.get("relative_bound", 0.0)))
        kw = {}
        for key in ("n_samples", "seed", "checkpoint_every"):
            if key in d:
                kw[key] = int(d[key])
        for key in ("stratified", "strict_paper_mode", "sample_log", "render"):
            if key in d:
                kw[key] = bool(d[key])
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        if "grid_resolution" in d:
            kw["grid_resolution"] = tuple(d["grid_resolution"])
        for key, typ in (("integrator", IntegratorSettings), ("classifier", ClassifierSettings)):
            if key in d:
                try:
                    kw[key] = typ(**d[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(str(exc), key) from None
        return cls(spec.system_id, params, domain, mismatch, **kw)

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)


def config_hash(config: RunConfig) -> str:
    """Hash of everything that determines the results (output locations excluded)."""
    d = config.to_dict()
    for k in ("output_dir", "sample_log", "render", "checkpoint_every"):
        d.pop(k, None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Sample:
    index: int
    omega: float
    amplitude: float
    initial_state: np.ndarray
    perturbed_params: np.ndarray
    box: tuple[int, int]
    outcome: Outcome | None = None

    def params_dict(self, spec: SystemSpec) -> dict[str, float]:
        return dict(zip(spec.param_cls.names(), map(float, self.perturbed_params)))


def _stream(seed: int, index: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(index), int(tag)]))


def _stratified_box(config: RunConfig, index: int) -> tuple[int, int]:
    # round-robin over boxes keeps any prefix of the index range balanced
    return divmod(index % config.n_boxes, config.grid_resolution[1])


def draw_sample(config: RunConfig, index: int, _ref: np.ndarray | None = None,
                _grid: ProbabilityGrid | None = None) -> Sample:
    """Regenerate sample ``index`` of a campaign (unclassified)."""
    if not (0 <= index < config.n_samples):
        raise IndexError(f"sample index {index} outside [0, {config.n_samples})")
    spec = config.spec
    grid = _grid if _grid is not None else config.empty_grid()
    dom = config.domain

    ex = _stream(config.seed, index, STREAM_EXCITATION)
    if config.stratified:
        i, j = _stratified_box(config, index)
        olo, ohi, alo, ahi = grid.box_bounds(i, j)
        u = ex.random(2)
        omega = olo + (ohi - olo) * u[0]
        amp = alo + (ahi - alo) * u[1]
        # guard against rounding onto the upper edge of a half-open box
        omega = min(omega, np.nextafter(ohi, olo)) if i < grid.nx - 1 else omega
        amp = min(amp, np.nextafter(ahi, alo)) if j < grid.ny - 1 else amp
        box = (i, j)
    else:
        u = ex.random(2)
        omega = dom.omega_range[0] + (dom.omega_range[1] - dom.omega_range[0]) * u[0]
        amp = dom.amplitude_range[0] + (dom.amplitude_range[1] - dom.amplitude_range[0]) * u[1]
        box = grid.box_of(omega, amp)

    ic = _stream(config.seed, index, STREAM_INITIAL)
    y0 = np.zeros(spec.dim)
    for k, name in enumerate(spec.state_names):
        if name in dom.ic_ranges:
            lo, hi = dom.ic_ranges[name]
            y0[k] = lo + (hi - lo) * ic.random()

    p = (_ref if _ref is not None else config.params.to_array()).copy()
    b = config.mismatch.relative_bound
    names = config.mismatch.parameter_names
    if names:
        u = _stream(config.seed, index, STREAM_MISMATCH).uniform(-1.0, 1.0, len(names))
        if b > 0:
            for name, uk in zip(names, u):
                k = spec.param_cls.index_of(name)
                p[k] = p[k] * (1.0 + b * uk)
    p[spec.param_cls.index_of(config.params.frequency_name)] = omega
    p[spec.param_cls.index_of(config.params.amplitude_name)] = amp
    return Sample(index, float(omega), float(amp), y0, p, box)


def simulate_sample(config: RunConfig, sample: Sample, wells=None) -> Outcome:
    wells = wells if wells is not None else well_geometry(config.system_id, config.params)
    traj = integrate_array(config.spec, sample.perturbed_params, sample.initial_state,
                           sample.omega, config.classifier.total_periods, config.integrator)
    return classify(traj, wells, config.classifier)


# ---------------------------------------------------------------------------
# campaign execution
# ---------------------------------------------------------------------------

# per-sample record: index, box_i, box_j, label code, periodic (-1 n/a, 0, 1), period multiple
RECORD_DTYPE = np.dtype([("index", np.int64), ("i", np.int32), ("j", np.int32),
                         ("label", np.int8), ("periodic", np.int8), ("period", np.int16)])


def _run_chunk(config: RunConfig, start: int, stop: int) -> np.ndarray:
    wells = well_geometry(config.system_id, config.params)
    ref = config.params.to_array()
    grid = config.empty_grid()
    out = np.zeros(stop - start, dtype=RECORD_DTYPE)
    for r, index in enumerate(range(start, stop)):
        s = draw_sample(config, index, ref, grid)
        o = simulate_sample(config, s, wells)
        out[r] = (index, s.box[0], s.box[1], LABEL_CODES[o.label],
                  -1 if o.periodic is None else int(o.periodic), o.period_multiple or 0)
    return out


def _chunks(start: int, stop: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, stop)) for a in range(start, stop, size)]


@dataclass
class CampaignResult:
    grid: ProbabilityGrid
    records: np.ndarray
    manifest: dict

    def periodic_split(self) -> dict[str, int]:
        r = self.records
        cw = r["label"] == LABEL_CODES[Label.CROSS_WELL]
        return {"cross_well_periodic": int(np.sum(cw & (r["periodic"] == 1))),
                "cross_well_aperiodic": int(np.sum(cw & (r["periodic"] == 0)))}

    def sample_log_csv(self) -> str:
        lines = ["index,box_i,box_j,outcome,periodic"]
        for rec in self.records:
            per = "" if rec["periodic"] < 0 else ("true" if rec["periodic"] else "false")
            lines.append(f"{rec['index']},{rec['i']},{rec['j']},"
                         f"{CODE_LABELS[int(rec['label'])].value},{per}")
        return "\n".join(lines) + "\n"


def grid_from_records(config: RunConfig, records: np.ndarray) -> ProbabilityGrid:
    g = config.empty_grid()
    for rec in records:
        g.add(int(rec["i"]), int(rec["j"]), CODE_LABELS[int(rec["label"])].value)
    return g


def _atomic_save(path: Path, **arrays) -> None:
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, chash: str):
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as z:
        if str(z["config_hash"]) != chash:
            return None
        return z["records"].copy()


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers == 0:
        env = os.environ.get("BASINSTAB_WORKERS")
        workers = int(env) if env else 0
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def run_campaign(config: RunConfig, progress: Callable[[int, int], None] | None = None, *,
                 workers: int | None = 1, index_range: tuple[int, int] | None = None,
                 chunk_size: int | None = None, checkpoint: str | os.PathLike | None = None
                 ) -> CampaignResult:
    """Simulate and classify samples ``index_range`` (default: all) and aggregate them.

    Results are independent of ``workers`` and ``chunk_size``.  With a
    ``checkpoint`` path, completed records are saved every
    ``config.checkpoint_every`` samples and a rerun resumes from them.
    """
    t_wall = time.time()
    start, stop = index_range if index_range is not None else (0, config.n_samples)
    if not (0 <= start <= stop <= config.n_samples):
        raise ValueError(f"index range {start}..{stop} outside [0, {config.n_samples}]")
    workers = resolve_workers(workers)
    chash = config_hash(config)
    # fail early on bad geometry rather than inside workers
    well_geometry(config.system_id, config.params)

    done_records: list[np.ndarray] = []
    next_index = start
    ck = Path(checkpoint) if checkpoint is not None else None
    if ck is not None:
        prev = _load_checkpoint(ck, chash)
        if prev is not None and len(prev) and prev["index"][0] == start:
            done_records.append(prev)
            next_index = int(prev["index"][-1]) + 1

    total = stop - start
    if chunk_size is None:
        chunk_size = max(1, min(256, math.ceil((stop - next_index) / (workers * 8)) or 1))
    chunks = _chunks(next_index, stop, chunk_size)
    done = next_index - start
    last_ck = done
    if progress:
        progress(done, total)

    def consume(results: Iterable[np.ndarray]):
        nonlocal done, last_ck
        for rec in results:
            done_records.append(rec)
            done += len(rec)
            if progress:
                progress(done, total)
            if ck is not None and done - last_ck >= config.checkpoint_every and done < total:
                _atomic_save(ck, config_hash=np.array(chash), records=np.concatenate(done_records))
                last_ck = done

    if workers == 1 or len(chunks) <= 1:
        consume(_run_chunk(config, a, b) for a, b in chunks)
    else:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            consume(pool.map(_run_chunk, [config] * len(chunks), *zip(*chunks)))

    records = (np.concatenate(done_records) if done_records
               else np.zeros(0, dtype=RECORD_DTYPE))
    grid = grid_from_records(config, records)
    if ck is not None and ck.exists():
        ck.unlink()
    manifest = build_manifest(config, time.time() - t_wall, workers, (start, stop))
    return CampaignResult(grid, records, manifest)


def build_manifest(config: RunConfig, wall_time: float, workers: int,
                   index_range: tuple[int, int]) -> dict:
    import numba
    import scipy

    return {
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "index_range": list(index_range),
        "mismatch_tag": config.mismatch.tag,
        "versions": {"basinstab": __version__, "python": sys.version.split()[0],
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "platform": platform.platform()},
        "wall_time_s": round(wall_time, 3),
        "workers": workers,
        "well_geometry": asdict(well_geometry(config.system_id, config.params)),
        "notes": {
            "excitation_ranges": "preset ranges are estimates of the published axes",
            "sampling": "stratified per box" if config.stratified else "uniform over domain",
            "distributions": "uniform excitation, initial conditions and mismatch factors",
            "classifier": "cross-well = both thresholds exceeded in every observation window",
        },
    }
