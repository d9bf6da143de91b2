"""Random-option error studies, the arithmetic-average approximation and the
objective-curve sweep on the demo put."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .boundary import ObjectiveCurve, _locate, coordinate, objective_curve, state_at, _held
from .contracts import KINDS, ContractSpec, payoff
from .errors import ParameterError
from .lattice import TreeConfig, black_scholes, critical_prices, crr_price, geo_asian_closed_form, geo_avg_tree
from .pricer import (
    evaluate_policy,
    price_american_on_sample,
    price_averaged,
    price_european,
    track_boundary,
)
from .process import ProcessParams, TimeGrid, simulate

# means and standard deviations of (r, sigma, s0, X, T)
TABLE_MEANS = (0.10, 0.40, 100.0, 100.0, 0.50)
TABLE_SDS = (0.05, 0.20, 50.0, 50.0, 0.25)

HIST_EDGES = np.linspace(-0.05, 0.05, 21)
POPULATIONS = ("in_sample", "independent", "averaged", "european")

DEMO_PARAMS = ProcessParams(r=0.10, sigma=0.40, s0=50.0)
DEMO_CONTRACT = ContractSpec("vanilla-put", strike=50.0, expiry=5.0 / 12.0, n_steps=50)
DEMO_STEP = 45


def strike_window(kind: str) -> float:
    """Half-width of the strike window in units of ``sigma * sqrt(T)``."""
    return 1.0 if kind.endswith("avg-put") else 2.0


def sample_random_options(n: int, seed: int, kind: str = "vanilla-put",
                          n_steps: int = 100) -> list[tuple[ProcessParams, ContractSpec]]:
    """Draw ``n`` random (process, contract) pairs.

    Each parameter is redrawn until positive.  The strike is then redrawn
    until ``ln X`` lies within ``k sigma sqrt(T)`` of ``ln s0 + r T`` (k = 2
    for vanilla kinds, 1 for average kinds).
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if kind not in KINDS:
        raise ParameterError(f"unknown kind {kind!r}")
    gen = np.random.default_rng(seed)
    k = strike_window(kind)

    def positive(j):
        while True:
            v = gen.normal(TABLE_MEANS[j], TABLE_SDS[j])
            if v > 0:
                return float(v)

    out = []
    for _ in range(n):
        r, sigma, s0, strike, expiry = (positive(j) for j in range(5))
        centre, half = math.log(s0) + r * expiry, k * sigma * math.sqrt(expiry)
        while abs(math.log(strike) - centre) > half:
            strike = positive(3)
        out.append((ProcessParams(r, sigma, s0), ContractSpec(kind, strike, expiry, "american", n_steps)))
    return out


def approx_arith_price(a_gm_bt: float, e_gm_bt: float, e_am_mc: float) -> float:
    """American arithmetic-average price from its geometric counterpart:
    tree American geometric minus tree European geometric plus MC European arithmetic."""
    return a_gm_bt - e_gm_bt + e_am_mc


@dataclass(frozen=True)
class StudyConfig:
    n_options: int = 100
    n_paths: int = 100_000
    n_steps: int = 100
    mode: str = "exact"
    kind: str = "vanilla-put"
    seed: int = 0
    importance: bool = True
    n_bins: int = 20
    binning: str = "population"
    cutoff: bool = True
    flashlight: bool = False
    exclude_below: float = 1e-4
    threads: int = 1

    def __post_init__(self):
        if self.n_options < 1 or self.n_paths < 2 or self.n_steps < 1:
            raise ParameterError("n_options >= 1, n_paths >= 2 and n_steps >= 1 required")
        if self.mode not in ("exact", "grid", "3a", "3b"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> StudyConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown study fields: {sorted(unknown)}")
        return cls(**data)

    def option_seeds(self, index: int) -> tuple[int, int]:
        """(boundary sample seed, independent sample seed) for option ``index``."""
        state = np.random.SeedSequence([self.seed, index]).generate_state(2, dtype=np.uint64)
        return int(state[0]), int(state[1])


@dataclass
class ErrorRecord:
    index: int
    params: dict
    contract: dict
    seeds: list[int]
    status: str = "ok"
    oracle: float | None = None
    oracle_european: float | None = None
    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    message: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _oracles(params: ProcessParams, contract: ContractSpec, threads: int = 1) -> tuple[float, float]:
    """(American oracle, European oracle) for the study's kind."""
    n = contract.n_steps
    if contract.kind in ("vanilla-put", "vanilla-call"):
        return crr_price(TreeConfig(n, params, contract))[0], black_scholes(contract.with_style("european"), params)
    if contract.kind == "geo-avg-put":
        return geo_avg_tree(TreeConfig(n, params, contract)), geo_asian_closed_form(contract.with_style("european"), params)
    raise ParameterError("arithmetic averages have no tree oracle")


def price_option(config: StudyConfig, index: int, params: ProcessParams, contract: ContractSpec) -> ErrorRecord:
    seed1, seed2 = config.option_seeds(index)
    rec = ErrorRecord(index, params.to_dict(), contract.to_dict(), [seed1, seed2])
    grid = TimeGrid.for_contract(contract)
    try:
        sample = simulate(params, grid, config.n_paths, seed1, contract, config.importance, config.threads)
        european = price_european(sample, contract.with_style("european"))
        up, boundary = price_american_on_sample(sample, contract, config.mode, config.cutoff, config.flashlight,
                                                n_bins=config.n_bins, binning=config.binning)
        fresh = simulate(params, grid, config.n_paths, seed2, contract, config.importance, config.threads)
        down = evaluate_policy(fresh, contract, boundary)
        ests = {"in_sample": up, "independent": down, "averaged": price_averaged(up, down), "european": european}
        rec.estimates = {k: v.to_dict() for k, v in ests.items()}
        if contract.kind == "arith-avg-put":
            geo = ContractSpec("geo-avg-put", contract.strike, contract.expiry, "american", contract.n_steps)
            a_gm = geo_avg_tree(TreeConfig(contract.n_steps, params, geo))
            e_gm = geo_avg_tree(TreeConfig(contract.n_steps, params, geo.with_style("european")))
            rec.oracle = approx_arith_price(a_gm, e_gm, european.value)
            rec.oracle_european = None
        else:
            rec.oracle, rec.oracle_european = _oracles(params, contract)
    except Exception as exc:  # per-option failures are recorded, the study goes on
        rec.status, rec.message = "failed", f"{type(exc).__name__}: {exc}"
        return rec
    if rec.oracle < config.exclude_below * params.s0:
        rec.status = "excluded"
        return rec
    for name in ("in_sample", "independent", "averaged"):
        rec.errors[name] = (rec.estimates[name]["value"] - rec.oracle) / rec.oracle
    if rec.oracle_european is not None and rec.oracle_european >= config.exclude_below * params.s0:
        rec.errors["european"] = (rec.estimates["european"]["value"] - rec.oracle_european) / rec.oracle_european
    rec.errors["gap"] = (rec.estimates["in_sample"]["value"] - rec.estimates["independent"]["value"]) / rec.oracle
    return rec


def histogram(values, edges: np.ndarray = HIST_EDGES) -> list[dict]:
    """Fixed bins plus underflow/overflow rows; density is per unit of relative error."""
    x = np.asarray(values, dtype=float)
    total = len(x)
    counts, _ = np.histogram(x[(x >= edges[0]) & (x <= edges[-1])], bins=edges)
    rows = [{"bin": "underflow", "lo": -math.inf, "hi": float(edges[0]), "center": math.nan,
             "count": int(np.count_nonzero(x < edges[0]))}]
    for k, c in enumerate(counts):
        rows.append({"bin": str(k), "lo": float(edges[k]), "hi": float(edges[k + 1]),
                     "center": 0.5 * float(edges[k] + edges[k + 1]), "count": int(c)})
    rows.append({"bin": "overflow", "lo": float(edges[-1]), "hi": math.inf, "center": math.nan,
                 "count": int(np.count_nonzero(x > edges[-1]))})
    for row in rows:
        width = row["hi"] - row["lo"]
        frac = row["count"] / total if total else 0.0
        row["density"] = frac / width if math.isfinite(width) else frac
    return rows


def histogram_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "lo", "hi", "center", "count", "density"])
    for r in rows:
        w.writerow([r["bin"], repr(r["lo"]), repr(r["hi"]), repr(r["center"]), r["count"], repr(r["density"])])
    return buf.getvalue()


@dataclass
class StudyResult:
    config: StudyConfig
    records: list[ErrorRecord]

    def errors(self, population: str) -> np.ndarray:
        return np.array([r.errors[population] for r in self.records
                         if r.status == "ok" and population in r.errors])

    @property
    def n_excluded(self) -> int:
        return sum(r.status == "excluded" for r in self.records)

    @property
    def n_failed(self) -> int:
        return sum(r.status == "failed" for r in self.records)

    def summary(self) -> dict:
        out = {"n_records": len(self.records), "n_excluded": self.n_excluded, "n_failed": self.n_failed}
        for pop in POPULATIONS + ("gap",):
            x = self.errors(pop)
            if len(x):
                out[pop] = {"n": len(x), "mean": float(x.mean()),
                            "std": float(x.std(ddof=1)) if len(x) > 1 else 0.0}
        return out

    def histograms(self) -> dict[str, list[dict]]:
        return {pop: histogram(self.errors(pop)) for pop in POPULATIONS + ("gap",) if len(self.errors(pop))}

    def write(self, out_dir: str | Path) -> dict:
        """Write records, histograms and a manifest; returns the manifest."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"records.jsonl": "".join(r.to_json() + "\n" for r in self.records)}
        for pop, rows in self.histograms().items():
            files[f"hist_{pop}.csv"] = histogram_csv(rows)
        digests = {}
        for name, text in files.items():
            (out / name).write_text(text)
            digests[name] = hashlib.sha256(text.encode()).hexdigest()
        cfg = json.dumps(self.config.to_dict(), sort_keys=True)
        manifest = {
            "config": self.config.to_dict(),
            "option_seeds": [r.seeds for r in self.records],
            "inputs_sha256": hashlib.sha256(cfg.encode()).hexdigest(),
            "outputs_sha256": digests,
            "summary": self.summary(),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
        return manifest


def run_error_study(config: StudyConfig, out_dir: str | Path | None = None, progress=None) -> StudyResult:
    """Price every drawn option and compare with its oracle.

    Vanilla kinds compare with the CRR tree at the study's step count,
    geometric averages with the average tree, and arithmetic averages with the
    geometric-adjusted approximation.  European counterparts compare with
    their closed forms.
    """
    options = sample_random_options(config.n_options, config.seed, config.kind, config.n_steps)
    records = []
    for j, (params, contract) in enumerate(options):
        records.append(price_option(config, j, params, contract))
        if progress is not None:
            progress(records[-1])
    result = StudyResult(config, records)
    if out_dir is not None:
        result.write(out_dir)
    return result


# -- objective sweep -----------------------------------------------------------

def demo_tree_boundary(refine: int = 20) -> np.ndarray:
    return critical_prices(TreeConfig(DEMO_CONTRACT.n_steps, DEMO_PARAMS, DEMO_CONTRACT, refine=refine))


@dataclass(frozen=True)
class SweepPoint:
    n_paths: int
    seed: int
    curve: ObjectiveCurve
    argmax: float
    spacing: float


def sweep_point(n_paths: int, seed: int, candidates: np.ndarray | None = None,
                step: int = DEMO_STEP, tree_boundary: float | None = None) -> SweepPoint:
    """Objective curve and exact argmax at ``step`` after tracking later dates on one sample.

    ``spacing`` is the mean distance between neighbouring sampled prices near
    ``tree_boundary`` (NaN when no boundary is given).
    """
    c = DEMO_CONTRACT
    grid = TimeGrid.for_contract(c)
    sample = simulate(DEMO_PARAMS, grid, n_paths, seed)
    table = track_boundary(sample, c, mode="exact", stop_index=step + 1).table
    if candidates is None:
        candidates = np.linspace(0.6 * c.strike, c.strike, 100)
    curve = objective_curve(step, candidates, sample, c, table)
    s, s_bar = state_at(sample, c, step)
    gain = sample.weights * (payoff(c, s, s_bar) - _held(sample, step, table))
    point = _locate(coordinate(c, s, s_bar), gain, c, "exact", None)
    spacing = math.nan
    if tree_boundary is not None:
        half = 0.05 * c.strike
        near = np.count_nonzero(np.abs(s - tree_boundary) <= half)
        spacing = 2 * half / near if near else math.inf
    return SweepPoint(n_paths, seed, curve, point.threshold, spacing)


def objective_sweep(out_dir: str | Path | None = None, ns=(100, 1_000, 10_000, 100_000), seed: int = 0,
                    n_candidates: int = 100, lo: float | None = None, hi: float | None = None) -> dict:
    """Objective curves at the demo step for each sample size, one CSV per size,
    plus a JSON summary holding the tree boundary and the located argmax."""
    tree = float(demo_tree_boundary()[DEMO_STEP])
    c = DEMO_CONTRACT
    cands = np.linspace(0.6 * c.strike if lo is None else lo, c.strike if hi is None else hi, n_candidates)
    summary = {"step": DEMO_STEP, "tree_boundary": tree, "seed": seed, "runs": []}
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for n in ns:
        pt = sweep_point(int(n), seed, cands, tree_boundary=tree)
        name = f"objective_N{int(n)}.csv"
        summary["runs"].append({"n_paths": int(n), "argmax": pt.argmax, "file": name,
                                "curve_argmax": float(cands[int(np.argmax(pt.curve.values))])})
        if out is not None:
            pt.curve.to_csv(out / name)
    if out is not None:
        (out / "sweep.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return summary
