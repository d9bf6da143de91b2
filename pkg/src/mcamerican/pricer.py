"""Monte Carlo pricing: European estimator, backward boundary tracking with the
in-sample (upward biased) American estimate, and repricing of a fixed boundary
on an independent sample (downward biased)."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary import (
    AuxSegments,
    BoundaryPoint,
    ContinuationTable,
    ExerciseBoundary,
    MIN_BIN_PATHS,
    Flag,
    _binned,
    _locate,
    coordinate,
    exercise_flag,
    flashlight_augment,
    frozen_point,
    hold_flag,
)
from .contracts import ContractSpec, payoff, running_average
from .errors import ParameterError
from .process import PathSample, ProcessParams, TimeGrid, simulate

BIAS_TAGS = ("in-sample-up", "independent-down", "averaged", "european-unbiased")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std_error: float
    n_paths: int
    bias_tag: str
    contract: ContractSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.bias_tag not in BIAS_TAGS:
            raise ParameterError(f"unknown bias tag {self.bias_tag!r}")
        if self.std_error < 0 or self.n_paths < 1:
            raise ParameterError("std_error must be >= 0 and n_paths >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("contract")
        return d


def weighted_mean_se(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """Self-normalised weighted mean and its delta-method standard error.

    With unit weights this is the sample mean and ``std / sqrt(N)``; unequal
    weights shrink the effective sample size ``(sum w)**2 / sum w**2``.
    """
    if len(x) and np.all(x == x[0]):
        return float(x[0]), 0.0
    sw = w.sum()
    mean = float(np.dot(w, x) / sw)
    n = len(x)
    if n < 2:
        return mean, 0.0
    resid = w * (x - mean)
    se = math.sqrt(float(np.dot(resid, resid)) * n / (n - 1)) / sw
    return mean, se


def _averages(sample: PathSample, contract: ContractSpec) -> np.ndarray | None:
    return running_average(sample.values, contract.averaging) if contract.is_average else None


def price_european(sample: PathSample, contract: ContractSpec) -> PriceEstimate:
    """Weighted mean of discounted expiry payoffs (average kinds use the final average)."""
    if contract.style != "european":
        raise ParameterError("price_european needs a European contract")
    s_t = sample.values[:, -1]
    s_bar = running_average(sample.values, contract.averaging)[:, -1] if contract.is_average else None
    disc = math.exp(-sample.params.r * sample.grid.expiry)
    v, se = weighted_mean_se(disc * payoff(contract, s_t, s_bar), sample.weights)
    return PriceEstimate(v, se, sample.n_paths, "european-unbiased", contract)


@dataclass
class TrackResult:
    """Outcome of the backward sweep down to index ``table.index``."""

    table: ContinuationTable
    boundary: ExerciseBoundary
    aux_steps: list[int] = field(default_factory=list)
    frozen_at: int | None = None


def _needs_light(coord_s: np.ndarray, threshold: float, sigma: float, dt: float, min_coverage: int) -> bool:
    if not np.isfinite(threshold) or threshold <= 0 or sigma == 0:
        return False
    band = 2.0 * sigma * math.sqrt(dt)
    near = np.abs(np.log(coord_s) - math.log(threshold)) <= band
    return int(np.count_nonzero(near)) < min_coverage


def track_boundary(sample: PathSample, contract: ContractSpec, mode: str = "grid", cutoff: bool = True,
                   flashlight: bool = False, n_aux: int = 2000, min_coverage: int = 100,
                   aux_seed: int | None = None, n_bins: int = 20, tol: float | None = None,
                   binning: str = "population", stop_index: int = 1) -> TrackResult:
    """Sweep backward from expiry, locating the boundary and updating the
    continuation table at every index down to ``stop_index``.

    ``cutoff`` freezes the boundary outside the sample for all earlier indices
    once it reaches the extreme sampled path.  ``flashlight`` adds auxiliary
    segments around the previous boundary whenever fewer than
    ``min_coverage`` paths lie within two local standard deviations of it.
    """
    if sample.grid.n_steps != contract.n_steps or not math.isclose(sample.grid.expiry, contract.expiry):
        raise ParameterError("sample grid does not match the contract")
    if flashlight and contract.is_average:
        raise ParameterError("auxiliary segments are implemented for vanilla contracts")
    n = sample.grid.n_steps
    params = sample.params
    w = sample.weights
    values = sample.values
    averages = _averages(sample, contract)
    dt = sample.grid.steps
    bins = n_bins if contract.is_average else 1
    boundary = ExerciseBoundary(sample.grid.times, contract.side, contract.strike, bins, contract.kind)
    boundary.set_point(n, BoundaryPoint(contract.strike, Flag.LOCATED, 0))
    s_bar_n = averages[:, n] if averages is not None else None
    table = ContinuationTable.at_expiry(payoff(contract, values[:, n], s_bar_n), n)
    result = TrackResult(table, boundary)
    frozen: Flag | None = None
    seed = sample.seed if aux_seed is None else aux_seed

    for i in range(n - 1, max(stop_index, 1) - 1, -1):
        s = values[:, i]
        s_bar = averages[:, i] if averages is not None else None
        immediate = payoff(contract, s, s_bar)
        disc = math.exp(-params.r * dt[i])
        coord = coordinate(contract, s, s_bar)
        if frozen is not None:
            boundary.set_point(i, frozen_point(contract, coord, frozen))
        elif contract.is_average:
            gain = w * (immediate - disc * table.value)
            point = _binned(s, s_bar, gain, contract, n_bins, mode, tol, MIN_BIN_PATHS, binning)
            boundary.set_binned(i, point)
            flags = set(point.flags)
            if cutoff and len(flags) == 1 and Flag.LOCATED not in flags:
                frozen = flags.pop()
                result.frozen_at = i
        else:
            gain = w * (immediate - disc * table.value)
            aux = None
            prev = boundary.thresholds[i + 1, 0]
            if flashlight and _needs_light(s, prev, params.sigma, dt[i], min_coverage):
                aux = flashlight_augment(i, sample, prev, contract, boundary, n_aux, seed)
                result.aux_steps.append(i)
            if aux is not None and len(aux.coordinate):
                point = _locate(np.concatenate((coord, aux.coordinate)),
                                np.concatenate((gain, aux.weights * (aux.immediate - aux.held))),
                                contract, mode, tol)
            else:
                point = _locate(coord, gain, contract, mode, tol)
            boundary.set_point(i, point)
            if cutoff and point.flag is not Flag.LOCATED:
                frozen = point.flag
                result.frozen_at = i
        table.step_back(boundary.exercise_mask(i, s, s_bar), immediate, disc)
    return result


def _finish(sample: PathSample, contract: ContractSpec, result: TrackResult) -> PriceEstimate:
    """Index-0 decision and the in-sample estimate."""
    table, boundary = result.table, result.boundary
    s0 = sample.params.s0
    held = math.exp(-sample.params.r * sample.grid.steps[0]) * table.value
    cont, se = weighted_mean_se(held, sample.weights)
    now = float(payoff(contract, s0, s0))
    c0 = float(coordinate(contract, s0, s0))
    if now > cont:
        boundary.set_point(0, BoundaryPoint(contract.side * float(np.nextafter(c0, np.inf)),
                                            exercise_flag(contract.side), sample.n_paths))
        table.step_back(np.ones(sample.n_paths, dtype=bool), np.full(sample.n_paths, now), 1.0)
        return PriceEstimate(now, 0.0, sample.n_paths, "in-sample-up", contract)
    boundary.set_point(0, BoundaryPoint(s0, hold_flag(contract.side), 0))
    table.value, table.index = held, 0
    return PriceEstimate(cont, se, sample.n_paths, "in-sample-up", contract)


def price_american_on_sample(sample: PathSample, contract: ContractSpec, mode: str = "grid",
                             cutoff: bool = True, flashlight: bool = False, n_aux: int = 2000,
                             n_bins: int = 20, tol: float | None = None, binning: str = "population",
                             return_result: bool = False):
    """In-sample American estimate and boundary on an existing sample."""
    if contract.style != "american":
        raise ParameterError("price_american needs an American contract")
    result = track_boundary(sample, contract, mode, cutoff, flashlight, n_aux, n_bins=n_bins, tol=tol,
                            binning=binning)
    est = _finish(sample, contract, result)
    if return_result:
        return est, result.boundary, result
    return est, result.boundary


def price_american(params: ProcessParams, contract: ContractSpec, n_paths: int, seed: int,
                   mode: str = "grid", cutoff: bool = True, flashlight: bool = False,
                   importance: bool = False, n_aux: int = 2000, n_bins: int = 20,
                   tol: float | None = None, binning: str = "population",
                   threads: int = 1) -> tuple[PriceEstimate, ExerciseBoundary]:
    """Simulate a sample and return the in-sample estimate with its boundary.

    Parameters
    ----------
    mode : {"grid", "exact"}
        ``"exact"`` maximises over sampled coordinates (sort and scan);
        ``"grid"`` refines a candidate grid and stops early on a multimodal
        objective.  ``"3a"``/``"3b"`` are accepted as aliases.
    cutoff : bool
        Freeze the boundary outside the sample once it reaches an extreme path.
    flashlight : bool
        Add auxiliary segments where the sample thins out near the boundary.
    importance : bool
        Draw tilted terminal values and fill paths by bridge sampling.
    """
    grid = TimeGrid.for_contract(contract)
    sample = simulate(params, grid, n_paths, seed, contract, importance, threads)
    return price_american_on_sample(sample, contract, mode, cutoff, flashlight, n_aux, n_bins, tol, binning)


def evaluate_policy(sample: PathSample, contract: ContractSpec, boundary: ExerciseBoundary) -> PriceEstimate:
    """Exercise each path at its first index inside the exercise region.

    Paths still alive at expiry receive the terminal payoff whatever the
    boundary says there.
    """
    grid = sample.grid
    if boundary.n_steps != grid.n_steps or not np.allclose(boundary.times, grid.times, rtol=1e-12, atol=0):
        raise ParameterError("boundary grid does not match the sample grid")
    s0 = sample.params.s0
    if boundary.exercise_mask(0, np.array([s0]), np.array([s0]))[0]:
        return PriceEstimate(float(payoff(contract, s0, s0)), 0.0, sample.n_paths, "independent-down", contract)
    averages = _averages(sample, contract)
    value = np.zeros(sample.n_paths)
    alive = np.ones(sample.n_paths, dtype=bool)
    r = sample.params.r
    for i in range(1, grid.n_steps + 1):
        s = sample.values[:, i]
        s_bar = averages[:, i] if averages is not None else None
        hit = alive if i == grid.n_steps else alive & boundary.exercise_mask(i, s, s_bar)
        value[hit] = payoff(contract, s[hit], None if s_bar is None else s_bar[hit]) * math.exp(-r * grid.times[i])
        alive &= ~hit
    v, se = weighted_mean_se(value, sample.weights)
    return PriceEstimate(v, se, sample.n_paths, "independent-down", contract)


def reprice_independent(params: ProcessParams, contract: ContractSpec, boundary: ExerciseBoundary,
                        n_paths: int, seed2: int, importance: bool = False, threads: int = 1) -> PriceEstimate:
    """Price a fixed boundary on a fresh sample drawn from ``seed2``."""
    if boundary.n_steps != contract.n_steps:
        raise ParameterError("boundary has a different number of dates than the contract")
    grid = TimeGrid.for_contract(contract)
    sample = simulate(params, grid, n_paths, seed2, contract, importance, threads)
    return evaluate_policy(sample, contract, boundary)


def price_averaged(in_sample: PriceEstimate, independent: PriceEstimate) -> PriceEstimate:
    if (in_sample.contract is not None and independent.contract is not None
            and in_sample.contract != independent.contract):
        raise ParameterError("estimates refer to different contracts")
    value = 0.5 * (in_sample.value + independent.value)
    se = 0.5 * math.hypot(in_sample.std_error, independent.std_error)
    return PriceEstimate(value, se, min(in_sample.n_paths, independent.n_paths), "averaged",
                         in_sample.contract or independent.contract)


def result_record(contract: ContractSpec, params: ProcessParams, seeds: dict, flags: dict,
                  estimates: dict[str, PriceEstimate], boundary_file: str | None = None) -> dict:
    """JSON-ready pricing record."""
    return {
        "contract": contract.to_dict(),
        "params": params.to_dict(),
        "seeds": seeds,
        "flags": flags,
        "estimates": {k: v.to_dict() for k, v in estimates.items()},
        "boundary_file": boundary_file,
    }


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True)
