"""Certificate reports, deterministic JSON encoding, and bounded parallel maps."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def thread_count() -> int:
    """Worker cap from MF_THREADS (default 1)."""
    raw = os.environ.get("MF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_ordered(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """``list(map(fn, items))``, optionally on a thread pool; order is preserved."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values and infinities to JSON-safe values ("inf", "-inf", "nan")."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@dataclass
class PointRecord:
    x: np.ndarray
    margin: float
    worst_xi: np.ndarray | None = None
    worst_v: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"x": self.x, "margin": self.margin, "worst_xi": self.worst_xi,
                "worst_v": self.worst_v}


@dataclass
class CertificateReport:
    scenario: str
    variant: str
    tol: float
    points: list[PointRecord]
    verdict: str
    witnesses: list[PointRecord] = field(default_factory=list)
    hypothesis_checks: dict = field(default_factory=dict)
    m_estimates: list[float] | None = None
    notes: list[str] = field(default_factory=list)
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def max_margin(self) -> float:
        return max((p.margin for p in self.points), default=-math.inf)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "variant": self.variant,
            "tol": self.tol,
            "points": [p.to_dict() for p in self.points],
            "verdict": self.verdict,
            "witnesses": [p.to_dict() for p in self.witnesses],
            "hypothesis_checks": self.hypothesis_checks,
            "notes": self.notes,
            "seed": self.seed,
            "max_margin": self.max_margin,
        }
        if self.m_estimates is not None:
            out["m_estimates"] = self.m_estimates
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())


def verdict_from_margins(records: Iterable[PointRecord], tol: float) -> tuple[str, list[PointRecord]]:
    records = list(records)
    witnesses = [r for r in records if r.margin > tol]
    return (FAIL if witnesses else PASS), witnesses
