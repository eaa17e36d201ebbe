"""Trial records, summaries, confidence intervals, and deterministic CSV IO."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    phat = errors / trials
    z2 = z * z
    denom = 1 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == trials else min(1.0, center + half)
    return lo, hi


@dataclass
class GpTrialRecord:
    trial: int
    n: int
    R: float
    Rtilde: float
    jammer_id: str
    encoder_fallback: bool
    decoded: bool
    m: int
    mhat: int
    error_type: str


@dataclass
class GpSummary:
    n: int
    R: float
    jammer_id: str
    trials: int
    errors: int
    err_rate: float
    ci_lo: float
    ci_hi: float


@dataclass
class DpTrialRecord:
    trial: int
    n: int
    R: float
    Rtilde: float
    jammer_id: str
    encoder_fallback: bool
    decoded: bool
    m: int
    mhat: int
    error_type: str
    yu_cosine: float
    power_x: float
    fallback: bool          # transmitted the zero sequence (power guard)
    jammer_power: float


@dataclass
class DpSummary:
    n: int
    R: float
    jammer_id: str
    trials: int
    errors: int
    err_rate: float
    ci_lo: float
    ci_hi: float
    theta: float
    quantile05_yu: float


@dataclass
class LemmaRecord:
    lemma_id: str
    param_json: str
    n: int
    trials: int
    violations: int
    rate: float
    bound: float
    ci_lo: float
    ci_hi: float


def _cell(v) -> str:
    # repr round-trips floats exactly, keeping reruns byte-identical
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows, record_type=None) -> None:
    """Write dataclass rows (all one type) with a header; deterministic bytes."""
    rows = list(rows)
    if record_type is None:
        if not rows:
            raise ValueError("cannot infer a header from zero rows")
        record_type = type(rows[0])
    names = [f.name for f in fields(record_type)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            d = asdict(r)
            w.writerow([_cell(d[k]) for k in names])


def summarize_gp(records, z: float = 1.959963984540054) -> GpSummary:
    rows = list(records)
    errs = sum(1 for r in rows if not r.decoded)
    lo, hi = wilson_interval(errs, len(rows), z)
    first = rows[0]
    return GpSummary(
        n=first.n, R=first.R, jammer_id=first.jammer_id, trials=len(rows),
        errors=errs, err_rate=errs / len(rows), ci_lo=lo, ci_hi=hi,
    )


def summarize_dp(records, theta: float, z: float = 1.959963984540054) -> DpSummary:
    rows = list(records)
    errs = sum(1 for r in rows if not r.decoded)
    lo, hi = wilson_interval(errs, len(rows), z)
    cos = sorted(r.yu_cosine for r in rows)
    q05 = cos[int(0.05 * (len(cos) - 1))]
    first = rows[0]
    return DpSummary(
        n=first.n, R=first.R, jammer_id=first.jammer_id, trials=len(rows),
        errors=errs, err_rate=errs / len(rows), ci_lo=lo, ci_hi=hi,
        theta=theta, quantile05_yu=q05,
    )
