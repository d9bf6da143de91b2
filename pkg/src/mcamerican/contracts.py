"""Option contracts, exercise payoffs, discounting and running averages."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from .errors import ParameterError

KINDS = ("vanilla-put", "vanilla-call", "geo-avg-put", "arith-avg-put")
STYLES = ("european", "american")


@dataclass(frozen=True)
class ContractSpec:
    """An option on a single underlying.

    Average kinds average over the whole lifetime, fixing at ``S_0`` and at
    every grid point (``i + 1`` fixings at index ``i``).  An American contract
    may be exercised at every grid point, so on a finite grid it is a Bermudan
    contract with ``n_steps`` dates.
    """

    kind: str
    strike: float
    expiry: float
    style: str = "american"
    n_steps: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.style not in STYLES:
            raise ParameterError(f"style must be one of {STYLES}, got {self.style!r}")
        if not (math.isfinite(self.strike) and self.strike > 0):
            raise ParameterError(f"strike must be positive, got {self.strike}")
        if not (math.isfinite(self.expiry) and self.expiry > 0):
            raise ParameterError(f"expiry must be positive, got {self.expiry}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def averaging(self) -> str | None:
        return {"geo-avg-put": "geometric", "arith-avg-put": "arithmetic"}.get(self.kind)

    @property
    def is_average(self) -> bool:
        return self.averaging is not None

    @property
    def side(self) -> int:
        """+1 when low coordinates are exercised (puts), -1 for calls."""
        return -1 if self.kind == "vanilla-call" else 1

    @property
    def is_american(self) -> bool:
        return self.style == "american"

    def with_style(self, style: str) -> ContractSpec:
        return replace(self, style=style)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ContractSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown contract fields: {sorted(unknown)}")
        missing = {"kind", "strike", "expiry"} - set(data)
        if missing:
            raise ParameterError(f"missing contract fields: {sorted(missing)}")
        try:
            kw = dict(data)
            kw["strike"] = float(kw["strike"])
            kw["expiry"] = float(kw["expiry"])
            if "n_steps" in kw:
                kw["n_steps"] = int(kw["n_steps"])
        except (TypeError, ValueError) as exc:
            raise ParameterError(f"bad contract field value: {exc}") from exc
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> ContractSpec:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ParameterError("contract JSON must be an object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class AugmentedState:
    s: float
    s_bar: float

    def __post_init__(self):
        if not (self.s > 0 and self.s_bar > 0):
            raise ParameterError("augmented state values must be positive")


def payoff(contract: ContractSpec, s, s_bar=None):
    """Vectorised exercise value; average kinds read ``s_bar`` only."""
    x = contract.strike
    if contract.kind == "vanilla-put":
        return np.maximum(x - np.asarray(s, dtype=float), 0.0)
    if contract.kind == "vanilla-call":
        return np.maximum(np.asarray(s, dtype=float) - x, 0.0)
    if s_bar is None:
        raise ParameterError(f"{contract.kind} payoff needs the running average")
    return np.maximum(x - np.asarray(s_bar, dtype=float), 0.0)


def exercise_payoff(contract: ContractSpec, state: AugmentedState) -> float:
    return float(payoff(contract, state.s, state.s_bar))


def update_average(contract: ContractSpec, s_bar_prev: float, s_new: float, i: int) -> float:
    """Fold fixing ``i`` into an average taken over fixings ``0..i-1``."""
    if i < 1:
        raise ParameterError("step index must be >= 1")
    if contract.averaging == "arithmetic":
        return (i * s_bar_prev + s_new) / (i + 1)
    if contract.averaging == "geometric":
        return math.exp((i * math.log(s_bar_prev) + math.log(s_new)) / (i + 1))
    raise ParameterError(f"{contract.kind} carries no running average")


def running_average(values: np.ndarray, averaging: str) -> np.ndarray:
    """Running averages along axis 1 over fixings ``0..i`` inclusive."""
    counts = np.arange(1, values.shape[-1] + 1, dtype=float)
    if averaging == "arithmetic":
        return np.cumsum(values, axis=-1) / counts
    if averaging == "geometric":
        return np.exp(np.cumsum(np.log(values), axis=-1) / counts)
    raise ParameterError(f"unknown averaging {averaging!r}")


def discount_factor(r: float, dt: float) -> float:
    if dt < 0:
        raise ParameterError("discounting interval must be nonnegative")
    return math.exp(-r * dt)
