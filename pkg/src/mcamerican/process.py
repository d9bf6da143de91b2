"""Log-normal diffusion paths: forward stepping, Brownian bridge filling and
terminal importance sampling.

Drift convention: ``ln S`` moves by ``(r - sigma**2/2) dt + sigma sqrt(dt) z``,
so the discounted price (not its logarithm) is a martingale.  Every oracle in
the package uses the same convention.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .contracts import ContractSpec
from .errors import ParameterError

PATHSAMPLE_FORMAT = "mcamerican-pathsample/1"


@dataclass(frozen=True)
class ProcessParams:
    r: float
    sigma: float
    s0: float

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ParameterError(f"r must be finite, got {self.r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if not (math.isfinite(self.s0) and self.s0 > 0):
            raise ParameterError(f"s0 must be positive, got {self.s0}")

    @property
    def drift(self) -> float:
        return self.r - 0.5 * self.sigma**2

    def to_dict(self) -> dict:
        return {"r": self.r, "sigma": self.sigma, "s0": self.s0}

    @classmethod
    def from_dict(cls, data: dict) -> ProcessParams:
        unknown = set(data) - {"r", "sigma", "s0"}
        if unknown:
            raise ParameterError(f"unknown process fields: {sorted(unknown)}")
        missing = {"r", "sigma", "s0"} - set(data)
        if missing:
            raise ParameterError(f"missing process fields: {sorted(missing)}")
        return cls(float(data["r"]), float(data["sigma"]), float(data["s0"]))


@dataclass(frozen=True)
class TimeGrid:
    """Time points ``0 = t_0 < ... < t_n = T``; uniform unless ``times`` is given."""

    expiry: float
    n_steps: int
    times: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (math.isfinite(self.expiry) and self.expiry > 0):
            raise ParameterError(f"expiry must be positive, got {self.expiry}")
        if self.times is None:
            t = np.arange(self.n_steps + 1) * (self.expiry / self.n_steps)
        else:
            t = np.asarray(self.times, dtype=float).copy()
            if t.shape != (self.n_steps + 1,) or t[0] != 0.0:
                raise ParameterError("times must start at 0 and hold n_steps + 1 points")
        t[-1] = self.expiry
        if np.any(np.diff(t) <= 0):
            raise ParameterError("time steps must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, expiry: float, n_steps: int) -> TimeGrid:
        return cls(expiry, n_steps)

    @classmethod
    def from_times(cls, times) -> TimeGrid:
        t = np.asarray(times, dtype=float)
        return cls(float(t[-1]), len(t) - 1, t)

    @classmethod
    def for_contract(cls, contract: ContractSpec) -> TimeGrid:
        return cls(contract.expiry, contract.n_steps)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and self.n_steps == other.n_steps
                and np.array_equal(self.times, other.times))

    def __hash__(self):
        return hash((self.n_steps, self.times.tobytes()))


@dataclass(frozen=True)
class PathSample:
    """``values[p, i]`` is the price on path ``p`` at ``grid.times[i]``."""

    values: np.ndarray
    weights: np.ndarray
    seed: int
    params: ProcessParams
    grid: TimeGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.n_steps + 1:
            raise ParameterError("values must have shape (n_paths, n_steps + 1)")
        if w.shape != (v.shape[0],):
            raise ParameterError("one weight per path required")
        if np.any(w <= 0):
            raise ParameterError("weights must be positive")
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def running_average(self, averaging: str) -> np.ndarray:
        from .contracts import running_average
        return running_average(self.values, averaging)


def _check_paths(n_paths: int) -> int:
    if int(n_paths) != n_paths or n_paths < 1:
        raise ParameterError(f"n_paths must be a positive integer, got {n_paths}")
    return int(n_paths)


def simulate_forward(params: ProcessParams, grid: TimeGrid, n_paths: int, seed: int,
                     threads: int = 1) -> PathSample:
    """Step ``ln S`` forward from ``s0`` with independent normal increments."""
    n_paths = _check_paths(n_paths)
    z = rng.normals(seed, (rng.FORWARD,), n_paths, grid.n_steps, threads)
    dt = grid.steps
    log_path = np.empty((n_paths, grid.n_steps + 1))
    log_path[:, 0] = 0.0
    np.cumsum(z * (params.sigma * np.sqrt(dt)), axis=1, out=log_path[:, 1:])
    # drift from absolute times and scaling by s0 keep sigma=0 paths exact
    log_path += params.drift * grid.times
    return PathSample(params.s0 * np.exp(log_path), np.ones(n_paths), seed, params, grid)


def simulate_bridge(params: ProcessParams, grid: TimeGrid, terminal_values, seed: int,
                    n_paths: int | None = None, weights=None, threads: int = 1) -> PathSample:
    """Fill path interiors backward in time between ``s0`` and given terminal values.

    Given ``ln S`` at ``t_{i+1}`` and the fixed start, ``ln S_i`` is normal with
    mean ``ln s0 + (t_i / t_{i+1}) (ln S_{i+1} - ln s0)`` and variance
    ``sigma**2 t_i (t_{i+1} - t_i) / t_{i+1}``.  The drift cancels once both
    endpoints are pinned.
    """
    terminal = np.asarray(terminal_values, dtype=float)
    if terminal.ndim != 1:
        raise ParameterError("terminal values must be one-dimensional")
    if n_paths is not None and len(terminal) != n_paths:
        raise ParameterError(f"{len(terminal)} terminal values for {n_paths} paths")
    if len(terminal) < 1 or np.any(~(terminal > 0)):
        raise ParameterError("terminal values must be positive")
    n = len(terminal)
    t = grid.times
    z = rng.normals(seed, (rng.BRIDGE,), n, max(grid.n_steps - 1, 0), threads)
    # log-prices relative to s0
    log_path = np.empty((n, grid.n_steps + 1))
    log_path[:, 0] = 0.0
    log_path[:, -1] = np.log(terminal / params.s0)
    for i in range(grid.n_steps - 1, 0, -1):
        frac = t[i] / t[i + 1]
        sd = params.sigma * math.sqrt(t[i] * (t[i + 1] - t[i]) / t[i + 1])
        log_path[:, i] = frac * log_path[:, i + 1] + sd * z[:, i - 1]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    values = params.s0 * np.exp(log_path)
    values[:, -1] = terminal
    return PathSample(values, w, seed, params, grid)


MAX_SHIFT_SD = 5.0


def default_tilt(params: ProcessParams, grid: TimeGrid, contract: ContractSpec) -> float:
    """Smallest shift fraction that puts ``ln X`` within one sd of the tilted mean.

    The shift is capped at ``MAX_SHIFT_SD`` terminal standard deviations so
    the likelihood ratios stay representable in double precision.
    """
    sd = params.sigma * math.sqrt(grid.expiry)
    gap = abs(math.log(contract.strike) - (math.log(params.s0) + params.drift * grid.expiry))
    if sd == 0 or gap <= sd:
        return 0.0
    return min(gap - sd, MAX_SHIFT_SD * sd) / gap


def sample_terminal_importance(params: ProcessParams, grid: TimeGrid, n_paths: int,
                               contract: ContractSpec, seed: int,
                               tilt: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Terminal prices from a mean-shifted log-normal plus likelihood-ratio weights.

    The mean of ``ln S_T`` moves a fraction ``tilt`` of the way to ``ln X``.
    Weights are the ratio of untilted to tilted terminal densities, rescaled to
    average exactly one (self-normalised estimator).
    """
    n_paths = _check_paths(n_paths)
    if tilt is None:
        tilt = default_tilt(params, grid, contract)
    mean = math.log(params.s0) + params.drift * grid.expiry
    sd = params.sigma * math.sqrt(grid.expiry)
    shifted = mean + tilt * (math.log(contract.strike) - mean)
    z = rng.normals(seed, (rng.TERMINAL,), n_paths, 1)[:, 0]
    if sd == 0:
        return np.full(n_paths, params.s0 * math.exp(params.drift * grid.expiry)), np.ones(n_paths)
    y = shifted + sd * z
    log_ratio = ((y - shifted) ** 2 - (y - mean) ** 2) / (2 * sd * sd)
    w = np.exp(log_ratio - log_ratio.max())
    return np.exp(y), w / w.mean()


def simulate_importance(params: ProcessParams, grid: TimeGrid, n_paths: int,
                        contract: ContractSpec, seed: int, tilt: float | None = None,
                        threads: int = 1) -> PathSample:
    """Tilted terminal draw followed by bridge filling; weights carry the tilt."""
    terminal, w = sample_terminal_importance(params, grid, n_paths, contract, seed, tilt)
    return simulate_bridge(params, grid, terminal, seed, weights=w, threads=threads)


def simulate(params: ProcessParams, grid: TimeGrid, n_paths: int, seed: int,
             contract: ContractSpec | None = None, importance: bool = False,
             threads: int = 1) -> PathSample:
    if importance:
        if contract is None:
            raise ParameterError("importance sampling needs a contract")
        return simulate_importance(params, grid, n_paths, contract, seed, threads=threads)
    return simulate_forward(params, grid, n_paths, seed, threads)


def write_pathsample(sample: PathSample, path: str | Path | io.TextIOBase) -> None:
    """Path-major CSV.  Header comment lines carry format tag, process, grid and seed."""
    own = not hasattr(path, "write")
    fh = open(path, "w", newline="") if own else path
    try:
        p = sample.params
        fh.write(f"# format={PATHSAMPLE_FORMAT}\n")
        fh.write(f"# r={p.r!r} sigma={p.sigma!r} s0={p.s0!r}\n")
        fh.write("# times=" + ";".join(repr(float(t)) for t in sample.grid.times) + "\n")
        fh.write(f"# seed={sample.seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "weight"] + [f"S_{i}" for i in range(sample.grid.n_steps + 1)])
        for k, (w, row) in enumerate(zip(sample.weights, sample.values)):
            writer.writerow([k, repr(float(w))] + [repr(float(v)) for v in row])
    finally:
        if own:
            fh.close()


def read_pathsample(path: str | Path) -> PathSample:
    meta: dict[str, str] = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            for item in line[2:].split(" "):
                key, _, val = item.partition("=")
                meta[key] = val
        else:
            body.append(line)
    if meta.get("format") != PATHSAMPLE_FORMAT:
        raise ParameterError(f"unsupported path sample format {meta.get('format')!r}")
    rows = list(csv.reader(body))[1:]
    data = np.array([[float(x) for x in row[1:]] for row in rows])
    params = ProcessParams(float(meta["r"]), float(meta["sigma"]), float(meta["s0"]))
    grid = TimeGrid.from_times([float(t) for t in meta["times"].split(";")])
    return PathSample(data[:, 1:], data[:, 0], int(meta["seed"]), params, grid)
