"""Batch front-end: experiment configs in, CSV tables and a manifest out.

Five subcommands cover the package surface: ``capacity`` (closed form or
solver), ``simulate-gp`` and ``simulate-dp`` (Monte Carlo block-error runs),
``lemmas`` (concentration-bound experiments), and ``sweep`` (repeat one of the
above along a config axis).  A run happens in three phases: the whole config
is parsed and validated first (any problem exits 2 with nothing written),
then the computation runs in memory (failures exit 3 with nothing written),
and only then are the CSVs, the optional SVG, and ``manifest.jsonl`` written.

The manifest pins the raw config hash, the effective seed, package and
dependency versions, every default the CLI filled in, and a digest per output
file.  It carries no timestamps and is rewritten on each run, so a rerun of
the same config and seed reproduces every output byte.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import (
    DpChannelSpec,
    GpChannelSpec,
    GpSolverConfig,
    ShannonStrategy,
    dp_avc_capacity,
    gp_avc_capacity,
    worst_memoryless_jammer,
)
from .dp_codec import (
    DpSimParams,
    derive_constants,
    rate_bin_default,
    simulate_dp,
    theta,
)
from .errors import AvcjamError, ConfigError
from .gp_codec import GpSimParams, simulate_gp
from .jammers import (
    gaussian_iid_truncated,
    memoryless_jammer,
    message_aware_jammer,
    random_direction_full_power,
    state_cancelling_jammer,
    zero_jammer,
)
from .lemmas import (
    MarkovConfig,
    hoeffding_records,
    hoeffding_wor_tail,
    markov_violation_rate,
    sphere_cap_montecarlo,
)
from .probability import ConditionalKernel, Distribution, mutual_information
from .records import (
    DpTrialRecord,
    GpTrialRecord,
    LemmaRecord,
    summarize_dp,
    summarize_gp,
    write_csv,
)

_SVG_HASHSALT = "avcjam"

# every key the schema knows, per section; anything else is a config error
_SECTION_KEYS = {
    "channel": {"kind", "p", "lam", "sigma2", "sigma_s2", "preset", "p0", "p1",
                "w", "shape", "p_s"},
    "code": {"n", "rate", "rate_scale", "rate_bin", "delta", "delta1", "gamma",
             "eps1", "eps", "mode", "use_permutation", "calibration_trials",
             "n_aux", "p_u_given_s", "strategy"},
    "jammer": {"kind", "lam", "delta", "q", "base", "base_lam", "base_delta",
               "base_q", "message_mod"},
    "run": {"trials", "seed", "out"},
    "solver": {"n_aux", "n_starts", "inner_tol", "max_ascent_iters",
               "grid_resolution", "seed"},
    "lemmas": {"which", "cap_gamma", "cap_n", "cap_trials", "markov_trials",
               "markov_delta0", "markov_n_grid", "markov_delta_grid",
               "population", "marked", "sample", "ts", "hoeffding_trials"},
    "sweep": {"target", "axis", "values"},
}

_LEMMA_NAMES = ("markov_iid", "markov_rare_cell", "sphere_cap", "hoeffding")

# default Markov-experiment instance: a correlated binary pair with a noisy
# relay kernel, small enough to run at every grid blocklength
_MARKOV_XY = ((0.3, 0.2), (0.2, 0.3))
_MARKOV_Z_GIVEN_Y = ((0.8, 0.2), (0.3, 0.7))


@dataclass
class CapacityRow:
    kind: str
    param_json: str
    capacity: float


@dataclass
class SweepRow:
    axis: str
    value: str
    capacity: str
    err_rate: str
    ci_lo: str
    ci_hi: str
    failed: bool
    error: str


def _pjson(**kv) -> str:
    return json.dumps(kv, sort_keys=True, separators=(",", ":"))


def _floats(text: str) -> list[float]:
    toks = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    if not toks:
        raise ConfigError("empty numeric list")
    return [float(t) for t in toks]


def _ints(text: str) -> list[int]:
    vals = []
    for t in re.split(r"[,\s]+", text.strip()):
        if t:
            vals.append(int(t))
    if not vals:
        raise ConfigError("empty integer list")
    return vals


class Cfg:
    """Typed access to a parsed key=value config with strict key checking."""

    def __init__(self, sections: dict):
        self.sections = sections

    @classmethod
    def load(cls, path: Path) -> "Cfg":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        sections = {}
        for name in parser.sections():
            if name not in _SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]")
            body = dict(parser.items(name))
            for key in body:
                if key not in _SECTION_KEYS[name]:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
            sections[name] = body
        return cls(sections)

    def clone(self) -> "Cfg":
        return Cfg({s: dict(b) for s, b in self.sections.items()})

    def set(self, section: str, key: str, value: str) -> None:
        self.sections.setdefault(section, {})[key] = value

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def raw(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def _fetch(self, section, key, default, required):
        val = self.raw(section, key)
        if val is None:
            if required:
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            return default
        return val

    def get_str(self, section, key, default=None, required=False):
        return self._fetch(section, key, default, required)

    def get_float(self, section, key, default=None, required=False):
        val = self._fetch(section, key, default, required)
        if val is None or isinstance(val, float):
            return val
        try:
            return float(val)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {val!r} is not a number") from exc

    def get_int(self, section, key, default=None, required=False):
        val = self._fetch(section, key, default, required)
        if val is None or isinstance(val, int):
            return val
        try:
            return int(val)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {val!r} is not an integer") from exc

    def get_bool(self, section, key, default=False):
        val = self.raw(section, key)
        if val is None:
            return default
        low = str(val).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key} = {val!r} is not a boolean")


# ---------------------------------------------------------------------------
# channel, jammer, and parameter construction


def _dp_channel(cfg: Cfg) -> DpChannelSpec:
    return DpChannelSpec(
        p=cfg.get_float("channel", "p", required=True),
        lam=cfg.get_float("channel", "lam", required=True),
        sigma2=cfg.get_float("channel", "sigma2", required=True),
        sigma_s2=cfg.get_float("channel", "sigma_s2", required=True),
    )


def _gp_preset(cfg: Cfg):
    """Build (spec, param dict) from a named instance or raw tables."""
    preset = cfg.get_str("channel", "preset")
    if preset == "stuck_at":
        p = cfg.get_float("channel", "p", 0.2)
        if not 0 <= p <= 1:
            raise ConfigError("stuck_at needs 0 <= p <= 1")
        w = np.zeros((2, 3, 1, 2))
        w[:, 0, 0, 0] = 1.0
        w[:, 1, 0, 1] = 1.0
        for x in range(2):
            w[x, 2, 0, x] = 1.0
        spec = GpChannelSpec(ConditionalKernel(w),
                             Distribution([p / 2, p / 2, 1 - p]))
        return spec, {"preset": "stuck_at", "p": p}
    if preset == "xor":
        w = np.zeros((2, 2, 2, 2))
        for x in range(2):
            for s in range(2):
                for j in range(2):
                    w[x, s, j, x ^ s ^ j] = 1.0
        spec = GpChannelSpec(ConditionalKernel(w), Distribution([0.5, 0.5]))
        return spec, {"preset": "xor"}
    if preset == "bsc_pair":
        p0 = cfg.get_float("channel", "p0", 0.05)
        p1 = cfg.get_float("channel", "p1", 0.15)
        w = np.zeros((2, 2, 2, 2))
        for x in range(2):
            for s in range(2):
                for j, pf in enumerate((p0, p1)):
                    w[x, s, j, x] = 1 - pf
                    w[x, s, j, 1 - x] = pf
        spec = GpChannelSpec(ConditionalKernel(w), Distribution([0.5, 0.5]))
        return spec, {"p0": p0, "p1": p1, "preset": "bsc_pair"}
    if preset is not None:
        raise ConfigError(f"unknown preset {preset!r}")
    shape_txt = cfg.get_str("channel", "shape", required=True)
    shape = tuple(_ints(shape_txt))
    if len(shape) != 4:
        raise ConfigError("shape must have four axes: x,s,j,y")
    flat = _floats(cfg.get_str("channel", "w", required=True))
    if len(flat) != int(np.prod(shape)):
        raise ConfigError(f"w has {len(flat)} entries, shape wants {np.prod(shape)}")
    p_s = _floats(cfg.get_str("channel", "p_s", required=True))
    if len(p_s) != shape[1]:
        raise ConfigError("p_s length must match the state axis")
    spec = GpChannelSpec(ConditionalKernel(np.array(flat).reshape(shape)),
                         Distribution(p_s))
    return spec, {"preset": "raw", "shape": list(shape)}


def _dp_jammer_payload(cfg: Cfg, spec: DpChannelSpec, prefix: str = "") -> dict:
    kind = cfg.get_str("jammer", prefix + "kind" if prefix else "kind",
                       "gaussian_iid_truncated" if prefix else None,
                       required=not prefix)
    key = (lambda k: prefix + k if prefix else k)
    lam = cfg.get_float("jammer", key("lam"), spec.lam)
    if kind == "message_aware":
        if prefix:
            raise ConfigError("message_aware cannot be its own base")
        base_kind = cfg.get_str("jammer", "base", "gaussian_iid_truncated")
        base = _dp_jammer_payload(cfg, spec, prefix="base_")
        base["kind"] = base_kind
        if base_kind not in ("gaussian_iid_truncated", "state_cancelling",
                             "random_direction", "zero"):
            raise ConfigError(f"unknown message_aware base {base_kind!r}")
        mod = cfg.get_int("jammer", "message_mod")
        return {"kind": kind, "base": base, "message_mod": mod}
    if kind == "gaussian_iid_truncated":
        return {"kind": kind, "lam": lam,
                "delta": cfg.get_float("jammer", key("delta"), 0.05)}
    if kind in ("state_cancelling", "random_direction"):
        return {"kind": kind, "lam": lam}
    if kind == "zero":
        return {"kind": kind}
    raise ConfigError(f"unknown jammer kind {kind!r}")


def _build_dp_jammer(payload: dict):
    kind = payload["kind"]
    if kind == "message_aware":
        base = _build_dp_jammer(payload["base"])
        mod = payload["message_mod"]
        mm = None if mod is None else (lambda m: m % mod)
        return message_aware_jammer(base, mm)
    if kind == "gaussian_iid_truncated":
        return gaussian_iid_truncated(payload["lam"], payload["delta"])
    if kind == "state_cancelling":
        return state_cancelling_jammer(payload["lam"])
    if kind == "random_direction":
        return random_direction_full_power(payload["lam"])
    return zero_jammer()


def _gp_jammer_payload(cfg: Cfg, spec: GpChannelSpec, prefix: str = "") -> dict:
    kind = cfg.get_str("jammer", prefix + "kind" if prefix else "kind",
                       "memoryless" if prefix else None, required=not prefix)
    key = (lambda k: prefix + k if prefix else k)
    if kind == "message_aware":
        if prefix:
            raise ConfigError("message_aware cannot be its own base")
        base_kind = cfg.get_str("jammer", "base", "memoryless")
        base = _gp_jammer_payload(cfg, spec, prefix="base_")
        base["kind"] = base_kind
        if base_kind not in ("memoryless", "zero"):
            raise ConfigError(f"unknown message_aware base {base_kind!r}")
        mod = cfg.get_int("jammer", "message_mod")
        return {"kind": kind, "base": base, "message_mod": mod}
    if kind == "memoryless":
        raw = cfg.get_str("jammer", key("q"), "worst")
        if raw.strip() == "worst":
            return {"kind": kind, "q": "worst"}
        q = np.array(_floats(raw)).reshape(spec.n_states, spec.n_jam)
        ConditionalKernel(q)  # validates row stochasticity
        return {"kind": kind, "q": q.tolist()}
    if kind == "zero":
        return {"kind": kind}
    raise ConfigError(f"unknown jammer kind {kind!r} for a discrete channel")


def _build_gp_jammer(payload: dict):
    kind = payload["kind"]
    if kind == "message_aware":
        base = _build_gp_jammer(payload["base"])
        mod = payload["message_mod"]
        mm = None if mod is None else (lambda m: m % mod)
        return message_aware_jammer(base, mm)
    if kind == "memoryless":
        return memoryless_jammer(ConditionalKernel(np.array(payload["q"])))
    return zero_jammer()


def _fill_worst_q(payload: dict, q: np.ndarray) -> None:
    if payload["kind"] == "message_aware":
        _fill_worst_q(payload["base"], q)
    elif payload["kind"] == "memoryless" and payload["q"] == "worst":
        payload["q"] = q.tolist()


def _solver_config(cfg: Cfg) -> GpSolverConfig:
    kwargs = {}
    for key, getter in (("n_aux", cfg.get_int), ("n_starts", cfg.get_int),
                        ("inner_tol", cfg.get_float),
                        ("max_ascent_iters", cfg.get_int),
                        ("grid_resolution", cfg.get_int),
                        ("seed", cfg.get_int)):
        val = getter("solver", key)
        if val is not None:
            kwargs[key] = val
    return GpSolverConfig(**kwargs)


def _gp_tables(cfg: Cfg, spec: GpChannelSpec):
    """Optional explicit (P_{U|S}, strategy) override from [code]."""
    pus_txt = cfg.get_str("code", "p_u_given_s")
    strat_txt = cfg.get_str("code", "strategy")
    if (pus_txt is None) != (strat_txt is None):
        raise ConfigError("p_u_given_s and strategy must be given together")
    if pus_txt is None:
        return None, None
    n_aux = cfg.get_int("code", "n_aux", spec.n_inputs)
    if strat_txt.strip() == "identity":
        if n_aux != spec.n_inputs:
            raise ConfigError("identity strategy needs n_aux == |X|")
        table = np.tile(np.arange(n_aux)[:, None], (1, spec.n_states))
    else:
        table = np.array(_ints(strat_txt)).reshape(n_aux, spec.n_states)
        if table.min() < 0 or table.max() >= spec.n_inputs:
            raise ConfigError("strategy entries must index channel inputs")
    if pus_txt.strip() == "uniform":
        pus = np.full((spec.n_states, n_aux), 1.0 / n_aux)
    else:
        pus = np.array(_floats(pus_txt)).reshape(spec.n_states, n_aux)
    return ConditionalKernel(pus), ShannonStrategy(table)


def _rate_spec(cfg: Cfg):
    rate = cfg.get_float("code", "rate")
    scale = cfg.get_float("code", "rate_scale")
    if (rate is None) == (scale is None):
        raise ConfigError("give exactly one of rate / rate_scale in [code]")
    if rate is not None:
        if rate <= 0:
            raise ConfigError("rate must be positive")
        return "abs", rate
    if scale <= 0:
        raise ConfigError("rate_scale must be positive")
    return "scale", scale


def _shards(trials: int, jobs: int) -> list[tuple[int, int]]:
    parts = max(1, min(jobs, trials))
    cuts = [round(i * trials / parts) for i in range(parts + 1)]
    return [(cuts[i], cuts[i + 1]) for i in range(parts) if cuts[i] < cuts[i + 1]]


def _dp_shard(payload: dict) -> list:
    spec = DpChannelSpec(**payload["channel"])
    params = DpSimParams(**payload["params"])
    jammer = _build_dp_jammer(payload["jammer"])
    records, _ = simulate_dp(spec, params, jammer, payload["trials"],
                             payload["seed"],
                             trial_range=tuple(payload["trial_range"]))
    return records


def _gp_shard(payload: dict) -> list:
    spec = GpChannelSpec(ConditionalKernel(np.array(payload["w"])),
                         Distribution(np.array(payload["p_s"])))
    params = GpSimParams(**payload["params"])
    strategy = ShannonStrategy(np.array(payload["strategy"]))
    pus = ConditionalKernel(np.array(payload["pus"]))
    jammer = _build_gp_jammer(payload["jammer"])
    records, _ = simulate_gp(spec, strategy, pus, params, jammer,
                             payload["trials"], payload["seed"],
                             trial_range=tuple(payload["trial_range"]))
    return records


def _run_shards(worker, payload: dict, trials: int, jobs: int) -> list:
    ranges = _shards(trials, jobs)
    payloads = [dict(payload, trial_range=list(r)) for r in ranges]
    if len(payloads) == 1:
        return worker(payloads[0])
    records = []
    with ProcessPoolExecutor(max_workers=len(payloads)) as pool:
        for chunk in pool.map(worker, payloads):
            records.extend(chunk)
    return records


# ---------------------------------------------------------------------------
# per-command planners: validate everything, return (execute_fn, resolved)


def _plan_capacity(cfg: Cfg, common: dict):
    kind = cfg.get_str("channel", "kind", required=True)
    if kind == "dp":
        spec = _dp_channel(cfg)
        resolved = {"channel": {"kind": "dp", "p": spec.p, "lam": spec.lam,
                                "sigma2": spec.sigma2,
                                "sigma_s2": spec.sigma_s2}}

        def execute():
            value = dp_avc_capacity(spec)
            row = CapacityRow(kind="dp",
                              param_json=_pjson(p=spec.p, lam=spec.lam,
                                                sigma2=spec.sigma2,
                                                sigma_s2=spec.sigma_s2),
                              capacity=value)
            resolved["capacity"] = value
            return {"capacity.csv": ([row], CapacityRow)}

        return execute, resolved
    if kind != "gp":
        raise ConfigError(f"channel kind must be gp or dp, got {kind!r}")
    spec, chan_params = _gp_preset(cfg)
    solver_cfg = _solver_config(cfg)
    resolved = {"channel": dict(chan_params, kind="gp"),
                "solver": {"n_aux": solver_cfg.n_aux,
                           "n_starts": solver_cfg.n_starts,
                           "grid_resolution": solver_cfg.grid_resolution,
                           "max_ascent_iters": solver_cfg.max_ascent_iters,
                           "seed": solver_cfg.seed}}

    def execute():
        result = gp_avc_capacity(spec, solver_cfg)
        row = CapacityRow(kind="gp", param_json=_pjson(**chan_params),
                          capacity=result.value)
        resolved["capacity"] = result.value
        return {"capacity.csv": ([row], CapacityRow)}

    return execute, resolved


def _plan_simulate_dp(cfg: Cfg, common: dict):
    if cfg.get_str("channel", "kind", "dp") != "dp":
        raise ConfigError("simulate-dp needs channel kind = dp")
    spec = _dp_channel(cfg)
    jam_payload = _dp_jammer_payload(cfg, spec)
    _build_dp_jammer(jam_payload)  # constructor-level validation
    rate_mode, rate_val = _rate_spec(cfg)
    n = cfg.get_int("code", "n", required=True)
    if n < 2:
        raise ConfigError("blocklength n must be at least 2")
    eps1 = cfg.get_float("code", "eps1")
    eps = cfg.get_float("code", "eps", 0.1)
    consts = derive_constants(spec, eps1)
    rate_bin = cfg.get_float("code", "rate_bin")
    if rate_bin is None:
        rate_bin = rate_bin_default(spec, consts.eps1, eps)
    delta1 = cfg.get_float("code", "delta1")
    if delta1 is None:
        delta1 = 0.05 * spec.sigma_s2 * consts.alpha
        if delta1 <= 0:
            delta1 = 0.05 * spec.p
    mode = cfg.get_str("code", "mode", "auto")
    trials = common["trials"] if common["trials"] is not None \
        else cfg.get_int("run", "trials", 500)
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    rate = rate_val if rate_mode == "abs" else rate_val * dp_avc_capacity(spec)
    if rate <= 0:
        raise ConfigError("resolved rate must be positive")
    params = DpSimParams(n=n, rate=rate, rate_bin=rate_bin,
                         eps1=consts.eps1, delta1=delta1, eps=eps, mode=mode)
    resolved = {
        "channel": {"kind": "dp", "p": spec.p, "lam": spec.lam,
                    "sigma2": spec.sigma2, "sigma_s2": spec.sigma_s2},
        "code": {"n": n, "rate": rate, "rate_bin": rate_bin,
                 "eps1": consts.eps1, "delta1": delta1, "eps": eps,
                 "mode": mode},
        "jammer": jam_payload,
        "run": {"trials": trials, "seed": common["seed"]},
    }

    def execute():
        payload = {
            "channel": {"p": spec.p, "lam": spec.lam, "sigma2": spec.sigma2,
                        "sigma_s2": spec.sigma_s2},
            "params": {"n": n, "rate": rate, "rate_bin": rate_bin,
                       "eps1": consts.eps1, "delta1": delta1, "eps": eps,
                       "mode": mode},
            "jammer": jam_payload,
            "trials": trials,
            "seed": common["seed"],
        }
        records = _run_shards(_dp_shard, payload, trials, common["jobs"])
        summary = summarize_dp(records, theta(spec, consts.eps1))
        return {"dp_trials.csv": (records, DpTrialRecord),
                "dp_summary.csv": ([summary], type(summary))}

    return execute, resolved


def _plan_simulate_gp(cfg: Cfg, common: dict):
    if cfg.get_str("channel", "kind", "gp") != "gp":
        raise ConfigError("simulate-gp needs channel kind = gp")
    spec, chan_params = _gp_preset(cfg)
    pus, strategy = _gp_tables(cfg, spec)
    solver_cfg = _solver_config(cfg)
    jam_payload = _gp_jammer_payload(cfg, spec)
    rate_mode, rate_val = _rate_spec(cfg)
    n = cfg.get_int("code", "n", required=True)
    if n < 2:
        raise ConfigError("blocklength n must be at least 2")
    rate_bin_cfg = cfg.get_float("code", "rate_bin")
    delta = cfg.get_float("code", "delta")
    delta1 = cfg.get_float("code", "delta1")
    gamma = cfg.get_float("code", "gamma")
    use_perm = cfg.get_bool("code", "use_permutation", False)
    cal_trials = cfg.get_int("code", "calibration_trials", 200)
    trials = common["trials"] if common["trials"] is not None \
        else cfg.get_int("run", "trials", 500)
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    delta_res = delta if delta is not None else float(n) ** (-1.0 / 3.0)
    delta1_res = delta1 if delta1 is not None else 2.0 * delta_res
    resolved = {
        "channel": dict(chan_params, kind="gp"),
        "code": {"n": n, "delta": delta_res, "delta1": delta1_res,
                 "gamma": gamma if gamma is not None else "calibrated",
                 "use_permutation": use_perm,
                 "calibration_trials": cal_trials},
        "jammer": {k: v for k, v in jam_payload.items() if k != "q"},
        "run": {"trials": trials, "seed": common["seed"]},
    }

    def execute():
        if pus is None:
            result = gp_avc_capacity(spec, solver_cfg)
            pus_k, strat_k = result.p_u_given_s, result.strategy
            value, worst_q = result.value, result.worst_q.t
        else:
            pus_k, strat_k = pus, strategy
            worst_q, value, _ = worst_memoryless_jammer(pus_k, strat_k, spec)
            worst_q = worst_q.t if hasattr(worst_q, "t") else np.asarray(worst_q)
        rate = rate_val if rate_mode == "abs" else rate_val * value
        if rate <= 0:
            raise ConfigError("resolved rate must be positive; the channel "
                              "value is zero or negative")
        rate_bin = rate_bin_cfg
        if rate_bin is None:
            pus_t = pus_k.t if hasattr(pus_k, "t") else np.asarray(pus_k)
            i_us = mutual_information(spec.p_s.p[:, None] * pus_t)
            rate_bin = 0.0 if i_us <= 1e-9 else i_us + 0.05
        _fill_worst_q(jam_payload, np.asarray(worst_q))
        params = {"n": n, "rate": rate, "rate_bin": rate_bin, "delta": delta,
                  "delta1": delta1, "gamma": gamma,
                  "use_permutation": use_perm,
                  "calibration_trials": cal_trials}
        payload = {
            "w": spec.w.t.tolist(),
            "p_s": spec.p_s.p.tolist(),
            "pus": (pus_k.t if hasattr(pus_k, "t") else pus_k).tolist(),
            "strategy": strat_k.table.tolist(),
            "params": params,
            "jammer": jam_payload,
            "trials": trials,
            "seed": common["seed"],
        }
        records = _run_shards(_gp_shard, payload, trials, common["jobs"])
        summary = summarize_gp(records)
        resolved["code"]["rate"] = rate
        resolved["code"]["rate_bin"] = rate_bin
        resolved["gp_value"] = value
        return {"gp_trials.csv": (records, GpTrialRecord),
                "gp_summary.csv": ([summary], type(summary))}

    return execute, resolved


def _plan_lemmas(cfg: Cfg, common: dict):
    which_txt = cfg.get_str("lemmas", "which", "all")
    which = [w for w in re.split(r"[,\s]+", which_txt.strip()) if w]
    if which == ["all"]:
        which = list(_LEMMA_NAMES)
    for name in which:
        if name not in _LEMMA_NAMES:
            raise ConfigError(f"unknown lemma experiment {name!r}")
    if not which:
        raise ConfigError("empty lemma selection")
    seed = common["seed"]
    t_over = common["trials"]
    cap_gammas = _floats(cfg.get_str("lemmas", "cap_gamma", "0.2, 0.5"))
    cap_ns = _ints(cfg.get_str("lemmas", "cap_n", "100, 200"))
    cap_trials = t_over or cfg.get_int("lemmas", "cap_trials", 200000)
    markov_trials = t_over or cfg.get_int("lemmas", "markov_trials", 1500)
    markov_delta0 = cfg.get_float("lemmas", "markov_delta0", 0.02)
    markov_n = tuple(_ints(cfg.get_str("lemmas", "markov_n_grid",
                                       "50, 100, 200")))
    markov_deltas = tuple(_floats(cfg.get_str(
        "lemmas", "markov_delta_grid", "0.04, 0.06, 0.08, 0.10, 0.14")))
    population = cfg.get_int("lemmas", "population", 1000)
    marked = cfg.get_int("lemmas", "marked", 400)
    sample = cfg.get_int("lemmas", "sample", 100)
    ts = _floats(cfg.get_str("lemmas", "ts", "0.05, 0.10, 0.15, 0.20"))
    hoeff_trials = t_over or cfg.get_int("lemmas", "hoeffding_trials", 20000)
    resolved = {"lemmas": {
        "which": which, "cap_gamma": cap_gammas, "cap_n": cap_ns,
        "cap_trials": cap_trials, "markov_trials": markov_trials,
        "markov_delta0": markov_delta0, "markov_n_grid": list(markov_n),
        "markov_delta_grid": list(markov_deltas), "population": population,
        "marked": marked, "sample": sample, "ts": ts,
        "hoeffding_trials": hoeff_trials,
    }, "run": {"seed": seed}}

    def execute():
        rows: list[LemmaRecord] = []
        for name in which:
            if name in ("markov_iid", "markov_rare_cell"):
                crafted = "one_rare_cell" if name == "markov_rare_cell" else None
                mc = MarkovConfig(
                    p_joint_xy=np.array(_MARKOV_XY),
                    p_z_given_y=np.array(_MARKOV_Z_GIVEN_Y),
                    delta0=markov_delta0, n_grid=markov_n,
                    delta_grid=markov_deltas, trials=markov_trials,
                    seed=seed + (1 if crafted else 0), crafted=crafted)
                rows.extend(markov_violation_rate(mc).records)
            elif name == "sphere_cap":
                for i, (g, nn) in enumerate(
                        (g, nn) for g in cap_gammas for nn in cap_ns):
                    est = sphere_cap_montecarlo(g, nn, cap_trials, seed + i)
                    rows.append(est.record())
            else:
                pts = hoeffding_wor_tail(population, marked, sample, ts,
                                         hoeff_trials, seed)
                rows.extend(hoeffding_records(pts, population, marked,
                                              sample, hoeff_trials))
        return {"lemmas.csv": (rows, LemmaRecord)}

    return execute, resolved


_TARGETS = {"capacity": _plan_capacity,
            "simulate-gp": _plan_simulate_gp,
            "simulate-dp": _plan_simulate_dp}

# which (csv name, column) a sweep samples from each target's outputs
_SWEEP_METRIC = {"capacity": "capacity.csv",
                 "simulate-gp": "gp_summary.csv",
                 "simulate-dp": "dp_summary.csv"}


def _plan_sweep(cfg: Cfg, common: dict):
    target = cfg.get_str("sweep", "target", required=True)
    if target not in _TARGETS:
        raise ConfigError(f"sweep target must be one of {sorted(_TARGETS)}")
    axis = cfg.get_str("sweep", "axis", required=True)
    if axis.count(".") != 1:
        raise ConfigError("axis must look like section.key")
    section, key = axis.split(".")
    if section not in _SECTION_KEYS or key not in _SECTION_KEYS[section]:
        raise ConfigError(f"axis {axis!r} is not a known config field")
    values_txt = cfg.get_str("sweep", "values", required=True)
    values = [v for v in re.split(r"[,\s]+", values_txt.strip()) if v]
    if not values:
        raise ConfigError("sweep values must be a non-empty list")
    # the base config must be valid at the first value; later points may fail
    probe = cfg.clone()
    probe.set(section, key, values[0])
    _TARGETS[target](probe, common)
    resolved = {"sweep": {"target": target, "axis": axis, "values": values}}

    def execute():
        rows = []
        for value in values:
            point = cfg.clone()
            point.set(section, key, value)
            row = SweepRow(axis=axis, value=value, capacity="", err_rate="",
                           ci_lo="", ci_hi="", failed=False, error="")
            try:
                sub_exec, _ = _TARGETS[target](point, common)
                outputs = sub_exec()
                src = outputs[_SWEEP_METRIC[target]][0][0]
                if target == "capacity":
                    row.capacity = repr(float(src.capacity))
                else:
                    row.err_rate = repr(float(src.err_rate))
                    row.ci_lo = repr(float(src.ci_lo))
                    row.ci_hi = repr(float(src.ci_hi))
            except Exception as exc:  # per-point isolation, sweep continues
                row.failed = True
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
        return {"sweep.csv": (rows, SweepRow)}

    return execute, resolved


_PLANNERS = dict(_TARGETS, lemmas=_plan_lemmas, sweep=_plan_sweep)


# ---------------------------------------------------------------------------
# output writing


def _render_svg(command: str, outputs: dict, outdir: Path) -> Path | None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = _SVG_HASHSALT
    from matplotlib import pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    drew = False
    if command == "sweep":
        rows = outputs["sweep.csv"][0]
        xs, ys = [], []
        for row in rows:
            if row.failed:
                continue
            try:
                xs.append(float(row.value))
            except ValueError:
                xs.append(len(xs))
            ys.append(float(row.capacity or row.err_rate))
        if xs:
            label = "capacity" if rows and rows[0].capacity else "err_rate"
            ax.plot(xs, ys, marker="o")
            ax.set_xlabel(rows[0].axis)
            ax.set_ylabel(label)
            drew = True
    elif command == "capacity":
        rows = outputs["capacity.csv"][0]
        ax.bar(range(len(rows)), [r.capacity for r in rows])
        ax.set_ylabel("capacity (bits)")
        drew = True
    elif command in ("simulate-gp", "simulate-dp"):
        name = "gp_summary.csv" if command == "simulate-gp" else "dp_summary.csv"
        rows = outputs[name][0]
        xs = range(len(rows))
        errs = [r.err_rate for r in rows]
        yerr = [[r.err_rate - r.ci_lo for r in rows],
                [r.ci_hi - r.err_rate for r in rows]]
        ax.errorbar(xs, errs, yerr=yerr, fmt="o", capsize=4)
        ax.set_xticks(list(xs), [r.jammer_id for r in rows], fontsize=7)
        ax.set_ylabel("block error rate")
        drew = True
    elif command == "lemmas":
        rows = outputs["lemmas.csv"][0]
        xs = range(len(rows))
        ax.plot(xs, [max(r.rate, 1e-12) for r in rows], "o", label="rate")
        ax.plot(xs, [max(r.bound, 1e-12) for r in rows], "x", label="bound")
        ax.set_yscale("log")
        ax.set_ylabel("violation rate")
        ax.legend()
        drew = True
    if not drew:
        plt.close(fig)
        return None
    fig.tight_layout()
    path = outdir / f"{command}.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _versions(plot: bool) -> dict:
    import scipy

    out = {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
    }
    if plot:
        import matplotlib

        out["matplotlib"] = matplotlib.__version__
    return out


def _write_all(outdir: Path, command: str, outputs: dict, run_info: dict,
               resolved: dict, plot: bool) -> list[Path]:
    paths = []
    for name in sorted(outputs):
        rows, rtype = outputs[name]
        target = outdir / name
        write_csv(target, rows, rtype)
        paths.append(target)
    if plot:
        svg = _render_svg(command, outputs, outdir)
        if svg is not None:
            paths.append(svg)
    lines = [dict(run_info, type="run"), {"resolved": resolved, "type": "config"}]
    for path in sorted(paths):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        lines.append({"path": path.name, "sha256": digest, "type": "output"})
    manifest = outdir / "manifest.jsonl"
    with open(manifest, "w", newline="\n") as fh:
        for obj in lines:
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    paths.append(manifest)
    return paths


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avcjam",
        description="batch capacity, coding-simulation, and bound experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("capacity", "channel capacity (closed form or minimax solver)"),
        ("simulate-gp", "discrete binned-codebook block-error simulation"),
        ("simulate-dp", "spherical dirty-paper block-error simulation"),
        ("lemmas", "concentration and cap-measure bound experiments"),
        ("sweep", "repeat a target command along one config axis"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the .ini config")
        p.add_argument("--out", default=None, help="output directory "
                       "(falls back to [run] out)")
        p.add_argument("--seed", type=int, default=None,
                       help="override [run] seed")
        p.add_argument("--trials", type=int, default=None,
                       help="override trial counts")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for trial batches")
        p.add_argument("--plot", action="store_true",
                       help="also render a deterministic SVG summary plot")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = Cfg.load(Path(args.config))
        config_sha = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
        seed = args.seed if args.seed is not None \
            else cfg.get_int("run", "seed", 0)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        common = {"seed": seed, "trials": args.trials, "jobs": args.jobs}
        out_txt = args.out or cfg.get_str("run", "out")
        if out_txt is None:
            raise ConfigError("no output directory: pass --out or set [run] out")
        execute, resolved = _PLANNERS[args.command](cfg, common)
        outdir = Path(out_txt)
        outdir.mkdir(parents=True, exist_ok=True)
    except (AvcjamError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run_info = {
        "command": args.command,
        "config_sha256": config_sha,
        "jobs": args.jobs,
        "plot": bool(args.plot),
        "seed": seed,
        "trials": args.trials,
        "versions": _versions(bool(args.plot)),
    }
    try:
        outputs = execute()
        paths = _write_all(outdir, args.command, outputs, run_info, resolved,
                           bool(args.plot))
    except Exception as exc:  # any computation failure maps to one exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for path in paths:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
