"""Locating the exercise/hold boundary by maximising a sampled policy payoff.

At index ``i`` every candidate boundary ``c`` defines a policy on the sample:
exercise the paths whose exercise coordinate lies strictly below ``c``, hold
the rest.  Its sampled value, the *objective*, is the weighted mean over paths
of the immediate payoff (exercised paths) or the discounted value of optimal
exercise at later dates (held paths).  The boundary estimate is the maximiser.

The exercise coordinate is the price for puts, minus the price for calls and
the running average for average-rate puts.  Thresholds are reported in price
(or average) units and a put exercises iff ``S < threshold``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import rng
from .contracts import ContractSpec, payoff, running_average
from .errors import ParameterError
from .process import PathSample

N_GRID = 64
ZOOM = 4
MIN_BIN_PATHS = 10


class Flag(str, Enum):
    LOCATED = "located"
    BELOW = "below-sample"
    ABOVE = "above-sample"


class Decision(str, Enum):
    CONTINUE = "continue-tracking"
    FREEZE = "freeze-outside"


@dataclass
class ContinuationTable:
    """Per-path value of optimal exercise at later dates, discounted to ``index``.

    ``tau[p]`` is the first exercise index of path ``p``, or -1 when the path
    is held through every date up to and including expiry.
    """

    value: np.ndarray
    tau: np.ndarray
    index: int

    @classmethod
    def at_expiry(cls, expiry_payoff: np.ndarray, n_steps: int) -> ContinuationTable:
        g = np.asarray(expiry_payoff, dtype=float).copy()
        return cls(g, np.where(g > 0, n_steps, -1), n_steps)

    def step_back(self, exercise: np.ndarray, immediate: np.ndarray, disc: float) -> None:
        """Move to ``index - 1``: exercised paths take the immediate payoff."""
        self.value = np.where(exercise, immediate, disc * self.value)
        self.tau = np.where(exercise, self.index - 1, self.tau)
        self.index -= 1


@dataclass(frozen=True)
class BoundaryPoint:
    threshold: float
    flag: Flag
    n_exercised: int
    degenerate: bool = False


@dataclass(frozen=True)
class BinnedPoint:
    thresholds: np.ndarray
    flags: list[Flag]
    edges: np.ndarray
    inherited: np.ndarray


@dataclass(frozen=True)
class ObjectiveCurve:
    index: int
    candidates: np.ndarray
    values: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "candidate", "objective"])
            for c, v in zip(self.candidates, self.values):
                w.writerow([self.index, repr(float(c)), repr(float(v))])


@dataclass(frozen=True)
class AuxSegments:
    """Auxiliary paths used only while locating the boundary at one index."""

    coordinate: np.ndarray
    immediate: np.ndarray
    held: np.ndarray
    weights: np.ndarray


def hold_flag(side: int) -> Flag:
    return Flag.BELOW if side > 0 else Flag.ABOVE


def exercise_flag(side: int) -> Flag:
    return Flag.ABOVE if side > 0 else Flag.BELOW


class ExerciseBoundary:
    """Per-index thresholds, one per ``S``-bin (a single bin for vanilla contracts)."""

    def __init__(self, times, side: int, strike: float, n_bins: int = 1, kind: str = "vanilla-put"):
        self.times = np.asarray(times, dtype=float)
        n = len(self.times)
        self.side = side
        self.strike = strike
        self.kind = kind
        self.n_bins = n_bins
        self.thresholds = np.full((n, n_bins), np.nan)
        self.flags = np.full((n, n_bins), hold_flag(side).value, dtype=object)
        self.edges = np.zeros((n, n_bins - 1))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def binned(self) -> bool:
        return self.n_bins > 1 or self.kind.endswith("avg-put")

    def set_point(self, i: int, point: BoundaryPoint) -> None:
        self.thresholds[i, :] = point.threshold
        self.flags[i, :] = point.flag.value
        self.edges[i, :] = 0.0

    def set_binned(self, i: int, point: BinnedPoint) -> None:
        self.thresholds[i] = point.thresholds
        self.flags[i] = [f.value for f in point.flags]
        self.edges[i] = point.edges

    def exercise_mask(self, i: int, s: np.ndarray, s_bar: np.ndarray | None = None) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        coord = s if s_bar is None or not self.binned else np.asarray(s_bar, dtype=float)
        k = np.searchsorted(self.edges[i], s, side="right") if self.n_bins > 1 else 0
        thr = self.thresholds[i][k]
        live = self.flags[i][k] != hold_flag(self.side).value
        return live & (self.side * coord < self.side * thr)

    def scalar(self) -> np.ndarray:
        """Single-bin thresholds as a 1-D array."""
        return self.thresholds[:, 0]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.n_bins == 1:
                w.writerow(["index", "time", "flag", "threshold"])
                for i, t in enumerate(self.times):
                    w.writerow([i, repr(float(t)), self.flags[i, 0], repr(float(self.thresholds[i, 0]))])
            else:
                w.writerow(["index", "time", "flags", "thresholds", "bin_edges"])
                for i, t in enumerate(self.times):
                    w.writerow([i, repr(float(t)), ";".join(self.flags[i]),
                                ";".join(repr(float(v)) for v in self.thresholds[i]),
                                ";".join(repr(float(v)) for v in self.edges[i])])


# -- coordinates ---------------------------------------------------------------

def state_at(sample: PathSample, contract: ContractSpec, i: int) -> tuple[np.ndarray, np.ndarray | None]:
    s = sample.values[:, i]
    if not contract.is_average:
        return s, None
    return s, running_average(sample.values[:, : i + 1], contract.averaging)[:, -1]


def coordinate(contract: ContractSpec, s, s_bar=None) -> np.ndarray:
    if contract.is_average:
        return np.asarray(s_bar, dtype=float)
    return contract.side * np.asarray(s, dtype=float)


def _candidate_coordinate(contract: ContractSpec, candidate):
    c = np.asarray(candidate, dtype=float)
    return c if contract.is_average else contract.side * c


def _to_threshold(contract: ContractSpec, c: float) -> float:
    # average kinds already live in average units with side +1
    return contract.side * c


def _cap(contract: ContractSpec, c: float) -> float:
    """Exercising where the payoff is zero never helps, so cap at the strike."""
    return min(c, contract.side * contract.strike)


def _flag(side: int, c: float, lo: float, hi: float) -> Flag:
    if c <= lo:
        return hold_flag(side)
    if c >= hi:
        return exercise_flag(side)
    return Flag.LOCATED


# -- objective -----------------------------------------------------------------

def _held(sample: PathSample, i: int, continuation: ContinuationTable) -> np.ndarray:
    if continuation.index != i + 1:
        raise ParameterError(f"continuation refers to index {continuation.index}, need {i + 1}")
    return math.exp(-sample.params.r * sample.grid.steps[i]) * continuation.value


def policy_payoff(i: int, candidate, sample: PathSample, contract: ContractSpec,
                  continuation: ContinuationTable, paths=None):
    """Pathwise payoff of the policy "exercise iff coordinate < candidate".

    ``candidate`` is in price units (average units for average kinds) and may
    be an array broadcast against the paths.  ``paths`` selects path indices.
    """
    s, s_bar = state_at(sample, contract, i)
    exercise = coordinate(contract, s, s_bar) < _candidate_coordinate(contract, candidate)
    out = np.where(exercise, payoff(contract, s, s_bar), _held(sample, i, continuation))
    return out if paths is None else out[paths]


def objective(i: int, candidate, sample: PathSample, contract: ContractSpec,
              continuation: ContinuationTable) -> float:
    """Weighted mean of :func:`policy_payoff` over the sample."""
    w = sample.weights
    return float(np.dot(w, policy_payoff(i, candidate, sample, contract, continuation)) / w.sum())


def objective_curve(i: int, candidates, sample: PathSample, contract: ContractSpec,
                    continuation: ContinuationTable) -> ObjectiveCurve:
    cands = np.asarray(candidates, dtype=float)
    s, s_bar = state_at(sample, contract, i)
    vals = _objective_on_grid(_candidate_coordinate(contract, cands),
                              coordinate(contract, s, s_bar),
                              sample.weights * (payoff(contract, s, s_bar) - _held(sample, i, continuation)))
    base = np.dot(sample.weights, _held(sample, i, continuation))
    return ObjectiveCurve(i, cands, (base + vals) / sample.weights.sum())


def _objective_on_grid(cands: np.ndarray, coord: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Summed gain of exercising ``coord < c`` for every candidate ``c`` (any order)."""
    order = np.argsort(cands, kind="stable")
    sorted_c = cands[order]
    first = np.searchsorted(sorted_c, coord, side="right")
    acc = np.cumsum(np.bincount(first, weights=gain, minlength=len(cands) + 1))[: len(cands)]
    out = np.empty_like(acc)
    out[order] = acc
    return out


# -- maximisation --------------------------------------------------------------

def _scan_exact(coord: np.ndarray, gain: np.ndarray) -> tuple[float, int, bool]:
    """Best cut among sampled coordinates; ties resolve to the smaller exercise set."""
    order = np.argsort(coord, kind="stable")
    cs = coord[order]
    n = len(cs)
    total = np.concatenate(([0.0], np.cumsum(gain[order])))
    valid = np.ones(n + 1, dtype=bool)
    valid[1:n] = cs[:-1] < cs[1:]
    k = int(np.argmax(np.where(valid, total, -np.inf)))
    degenerate = cs[0] == cs[-1]
    if k == n:
        return float(np.nextafter(cs[-1], np.inf)), k, degenerate
    return float(cs[k]), k, degenerate


def count_local_maxima(values: np.ndarray) -> int:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return 0
    v = v[np.concatenate(([True], v[1:] != v[:-1]))]
    if len(v) == 1:
        return 1
    up = np.concatenate(([True], v[1:] > v[:-1]))
    down = np.concatenate((v[:-1] > v[1:], [True]))
    return int(np.count_nonzero(up & down))


def _scan_grid(coord: np.ndarray, gain: np.ndarray, tol: float,
               n_grid: int = N_GRID, zoom: int = ZOOM) -> tuple[float, int, bool]:
    """Coarse-to-fine grid search; stops at spacing <= tol or a multimodal grid."""
    lo = float(coord.min())
    hi = float(np.nextafter(coord.max(), np.inf))
    if coord.min() == coord.max():
        return _scan_exact(coord, gain)
    cands = np.linspace(lo, hi, n_grid)
    h = (hi - lo) / (n_grid - 1)
    offsets = np.arange(n_grid) - 0.5 * (n_grid - 1)
    half = np.arange(n_grid // 2) - 0.5 * (n_grid // 2 - 1)
    while True:
        vals = _objective_on_grid(cands, coord, gain)
        best = int(np.argmax(vals))
        if h <= tol or count_local_maxima(vals) > 1:
            break
        last = best
        while last + 1 < len(vals) and vals[last + 1] == vals[best]:
            last += 1
        # a unimodal maximiser lies between the plateau's grid neighbours
        a, b = cands[max(best - 1, 0)], cands[min(last + 1, len(cands) - 1)]
        h /= zoom
        if b - a <= (n_grid - 1) * h:
            refined = 0.5 * (a + b) + offsets * h
        else:
            # no samples inside a wide plateau; only its two ends can hide a higher value
            refined = np.concatenate((cands[best] + half * h, cands[last] + half * h))
        refined = np.unique(np.clip(refined, lo, hi))
        if len(refined) < 2:
            break
        cands = refined
    c = float(cands[best])
    return c, int(np.count_nonzero(coord < c)), False


def default_tol(contract: ContractSpec) -> float:
    return 1e-4 * contract.strike


def _locate(coord, gain, contract: ContractSpec, mode: str, tol: float | None) -> BoundaryPoint:
    if len(coord) == 0:
        raise ParameterError("cannot locate a boundary on an empty sample")
    if mode in ("exact", "3a"):
        c, k, degenerate = _scan_exact(coord, gain)
    elif mode in ("grid", "3b"):
        c, k, degenerate = _scan_grid(coord, gain, default_tol(contract) if tol is None else tol)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if degenerate:
        warnings.warn("all paths share one state; boundary is not identifiable", RuntimeWarning,
                      stacklevel=3)
    lo, hi = float(coord.min()), float(coord.max())
    flag = _flag(1, c, lo, hi)
    c = _cap(contract, c)
    if flag is Flag.ABOVE and c <= hi:
        # capped at the strike while paths remain on the zero-payoff side
        flag = Flag.LOCATED
    side_flag = {Flag.BELOW: hold_flag(contract.side), Flag.ABOVE: exercise_flag(contract.side),
                 Flag.LOCATED: Flag.LOCATED}[flag]
    return BoundaryPoint(_to_threshold(contract, c), side_flag, int(np.count_nonzero(coord < c)), degenerate)


def _arrays(i, sample, contract, continuation, aux: AuxSegments | None):
    s, s_bar = state_at(sample, contract, i)
    coord = coordinate(contract, s, s_bar)
    gain = sample.weights * (payoff(contract, s, s_bar) - _held(sample, i, continuation))
    if aux is not None and len(aux.coordinate):
        coord = np.concatenate((coord, aux.coordinate))
        gain = np.concatenate((gain, aux.weights * (aux.immediate - aux.held)))
    return coord, gain


def locate_boundary_mode_a(i: int, sample: PathSample, contract: ContractSpec,
                           continuation: ContinuationTable, aux: AuxSegments | None = None) -> BoundaryPoint:
    """Exact maximiser over sampled coordinates, by sorting then a cumulative scan."""
    if sample.n_paths < 2:
        raise ParameterError("need at least two paths")
    coord, gain = _arrays(i, sample, contract, continuation, aux)
    return _locate(coord, gain, contract, "exact", None)


def locate_boundary_mode_b(i: int, sample: PathSample, contract: ContractSpec,
                           continuation: ContinuationTable, tol: float | None = None,
                           aux: AuxSegments | None = None) -> BoundaryPoint:
    """Maximiser over a grid of candidates refined around the incumbent."""
    if tol is not None and tol <= 0:
        raise ParameterError("tol must be positive")
    coord, gain = _arrays(i, sample, contract, continuation, aux)
    return _locate(coord, gain, contract, "grid", tol)


def early_cutoff_check(i: int, sample: PathSample, contract: ContractSpec, threshold: float,
                       aux: AuxSegments | None = None) -> Decision:
    """Freeze when the threshold sits at (or beyond) the extreme sampled coordinate."""
    s, s_bar = state_at(sample, contract, i)
    coord = coordinate(contract, s, s_bar)
    if aux is not None and len(aux.coordinate):
        coord = np.concatenate((coord, aux.coordinate))
    c = _candidate_coordinate(contract, threshold)
    if c <= coord.min() or c >= coord.max():
        return Decision.FREEZE
    return Decision.CONTINUE


def frozen_point(contract: ContractSpec, coord: np.ndarray, flag: Flag) -> BoundaryPoint:
    """Boundary record for an index beyond the cutoff."""
    if flag == hold_flag(contract.side):
        return BoundaryPoint(_to_threshold(contract, float(coord.min())), flag, 0)
    c = _cap(contract, float(np.nextafter(coord.max(), np.inf)))
    return BoundaryPoint(_to_threshold(contract, c), flag, int(np.count_nonzero(coord < c)))


def flashlight_augment(i: int, sample: PathSample, previous_threshold: float, contract: ContractSpec,
                       boundary: ExerciseBoundary, n_aux: int, seed: int,
                       width: float | None = None) -> AuxSegments:
    """Fresh path segments started around the boundary found at ``i + 1``.

    Start prices are spread log-uniformly over ``previous_threshold *
    exp(+-width)`` (default width ``sigma * sqrt(T - t_i)``), stepped to expiry
    under the same process and exercised against the boundary already fixed at
    later indices.  The segments only enter the objective at index ``i``.
    """
    if contract.is_average:
        raise ParameterError("auxiliary segments are implemented for vanilla contracts")
    params, t = sample.params, sample.grid.times
    n = sample.grid.n_steps
    if n_aux <= 0 or params.sigma == 0 or not np.isfinite(previous_threshold) or previous_threshold <= 0:
        empty = np.empty(0)
        return AuxSegments(empty, empty, empty, empty)
    if width is None:
        width = params.sigma * math.sqrt(t[n] - t[i])
    draws = rng.uniforms(seed, (rng.AUXILIARY, i), n_aux, 1)[:, 0]
    z = rng.normals(seed, (rng.AUXILIARY, i, 1), n_aux, n - i)
    log_s = math.log(previous_threshold) + width * (2.0 * draws - 1.0)
    start = np.exp(log_s)
    value = np.zeros(n_aux)
    alive = np.ones(n_aux, dtype=bool)
    dt = sample.grid.steps
    for j in range(i + 1, n + 1):
        log_s = log_s + params.drift * dt[j - 1] + params.sigma * math.sqrt(dt[j - 1]) * z[:, j - i - 1]
        s = np.exp(log_s)
        hit = alive & boundary.exercise_mask(j, s)
        value[hit] = payoff(contract, s[hit]) * math.exp(-params.r * (t[j] - t[i + 1]))
        alive &= ~hit
    held = math.exp(-params.r * dt[i]) * value
    w = np.full(n_aux, float(sample.weights.mean()))
    return AuxSegments(contract.side * start, payoff(contract, start), held, w)


def locate_binned_boundary(i: int, sample: PathSample, contract: ContractSpec,
                           continuation: ContinuationTable, n_bins: int = 20, mode: str = "grid",
                           tol: float | None = None, min_paths: int = MIN_BIN_PATHS,
                           s_bar: np.ndarray | None = None, binning: str = "population") -> BinnedPoint:
    """Per-bin thresholds in average units over bins in ``S_i``.

    ``binning="population"`` (default) splits the sorted paths into bins of
    equal size; ``"width"`` uses equal-width bins over the sampled range.
    Bins holding fewer than ``min_paths`` paths take the threshold of the
    nearest populated bin and are marked in ``inherited``.
    """
    if n_bins < 1:
        raise ParameterError("n_bins must be >= 1")
    if not contract.is_average:
        raise ParameterError("binned boundaries apply to average contracts")
    s = sample.values[:, i]
    if s_bar is None:
        s_bar = state_at(sample, contract, i)[1]
    gain = sample.weights * (payoff(contract, s, s_bar) - _held(sample, i, continuation))
    return _binned(s, s_bar, gain, contract, n_bins, mode, tol, min_paths, binning)


def _bins(s: np.ndarray, n_bins: int, binning: str) -> tuple[list[np.ndarray], np.ndarray]:
    if binning == "width":
        edges = np.linspace(s.min(), s.max(), n_bins + 1)[1:-1]
        k = np.searchsorted(edges, s, side="right")
        return [np.flatnonzero(k == j) for j in range(n_bins)], edges
    if binning != "population":
        raise ParameterError(f"unknown binning {binning!r}")
    order = np.argsort(s, kind="stable")
    chunks = np.array_split(order, n_bins)
    # array_split leaves empty chunks only at the end; their edges go to +inf
    edges = np.array([0.5 * (s[chunks[k][-1]] + s[chunks[k + 1][0]]) if len(chunks[k + 1]) else np.inf
                      for k in range(n_bins - 1)])
    return chunks, edges


def _binned(s, s_bar, gain, contract, n_bins, mode, tol, min_paths, binning="population") -> BinnedPoint:
    chunks, edges = _bins(s, n_bins, binning)
    thresholds = np.full(n_bins, np.nan)
    flags: list[Flag | None] = [None] * n_bins
    populated = np.array([len(ch) >= min_paths for ch in chunks])
    if not populated.any():
        populated[int(np.argmax([len(ch) for ch in chunks]))] = True
    for k, ch in enumerate(chunks):
        if populated[k]:
            p = _locate(s_bar[ch], gain[ch], contract, mode, tol)
            thresholds[k], flags[k] = p.threshold, p.flag
    idx = np.flatnonzero(populated)
    for k in np.flatnonzero(~populated):
        src = idx[np.argmin(np.abs(idx - k))]
        thresholds[k], flags[k] = thresholds[src], flags[src]
    return BinnedPoint(thresholds, flags, edges, ~populated)
