"""Seeded Monte-Carlo experiments and figure-data CSV export.

A trial draws one scenario from ``master_seed + index`` and runs every
configured mode on it:

* ``stage1``   -- EE maximization only,
* ``proposed`` -- Stage 1 followed by Stage 2, once per rho,
* ``fairness`` -- Stage 2 with rho = 0 (no EE floor).

Trials are independent, so they are farmed out to a bounded process pool and
reduced afterwards by the parent.  Every trial is re-created from its seed,
which makes the CSVs independent of the worker count.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import ChannelConfig, generate_scenario
from .stage1 import stage1_optimize
from .stage2 import lse_fairness, stage2_optimize
from .sysmodel import SystemConfig, dbm_to_watt, fdma_carriers

log = logging.getLogger(__name__)

MODES = ("stage1", "proposed", "fairness")
SWEEPS = ("none", "pmax", "nris")
DEFAULT_PMAX_DBM = (5.0, 15.0, 25.0, 35.0, 40.0, 45.0)
DEFAULT_NRIS = (4, 16, 36, 64, 100, 144, 196, 256, 324, 400)

# Relative slack used by the invariant checks.
FLOOR_TOL = 1e-6
FEAS_TOL = 1e-9


def rho_label(rho: float) -> str:
    return f"{round(100 * rho):d}"


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig = field(default_factory=SystemConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sweep: str = "none"
    sweep_values: tuple = ()
    rhos: tuple = (0.85, 0.5)
    trials: int = 50
    master_seed: int = 0
    out_dir: str = "results"
    modes: tuple = MODES
    workers: int = 1
    strict: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if not self.sweep_values and self.sweep != "none":
            default = DEFAULT_PMAX_DBM if self.sweep == "pmax" else DEFAULT_NRIS
            object.__setattr__(self, "sweep_values", default)
        values = tuple(self.sweep_values)
        object.__setattr__(self, "sweep_values", values)
        if self.sweep != "none" and list(values) != sorted(values):
            raise ValueError("sweep values must be sorted ascending")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not self.rhos or any(not 0.0 <= r <= 1.0 for r in self.rhos):
            raise ValueError("rho values must lie in [0, 1]")
        bad = set(self.modes) - set(MODES)
        if bad or not self.modes:
            raise ValueError(f"modes must be a nonempty subset of {MODES}, got {self.modes}")

    @property
    def points(self) -> tuple:
        return self.sweep_values if self.sweep != "none" else (None,)

    def config_at(self, point) -> SystemConfig:
        """System configuration at one sweep point."""
        if self.sweep == "pmax":
            return replace(self.base, p_max=float(dbm_to_watt(point)))
        if self.sweep == "nris":
            return replace(self.base, N=int(point))
        return self.base

    def labels(self) -> list:
        """Report keys in output order."""
        out = []
        if "stage1" in self.modes:
            out.append("stage1")
        if "proposed" in self.modes:
            out += [f"prop{rho_label(r)}" for r in self.rhos]
        if "fairness" in self.modes:
            out.append("fairness")
        return out


@dataclass
class TrialRecord:
    point: object
    index: int
    seed: int
    user_pos: np.ndarray
    weights: np.ndarray
    reports: dict
    eta_star: float
    floors: dict
    flags: list = field(default_factory=list)
    wall_time: float = 0.0


def run_trial(spec: ExperimentSpec, index: int, point=None) -> TrialRecord:
    """One scenario, every configured mode; deterministic in (spec, index, point)."""
    t0 = time.perf_counter()
    cfg = spec.config_at(point)
    seed = spec.master_seed + index
    geom, ch = generate_scenario(np.random.default_rng(seed), cfg, spec.channel)
    s1, eta = stage1_optimize(ch, cfg)
    reports, floors = {}, {}
    if "stage1" in spec.modes:
        reports["stage1"] = s1
        floors["stage1"] = 0.0
    runs = []
    if "proposed" in spec.modes:
        runs += [(f"prop{rho_label(r)}", r) for r in spec.rhos]
    if "fairness" in spec.modes:
        runs.append(("fairness", 0.0))
    for label, rho in runs:
        reports[label] = stage2_optimize(ch, cfg, s1, rho=rho)
        floors[label] = rho * eta
    flags = [f"{label}: not converged" for label, r in reports.items() if not r.converged]
    if not s1.converged and "stage1" not in reports:
        flags.append("stage1: not converged")
    return TrialRecord(
        point=point,
        index=index,
        seed=seed,
        user_pos=geom.user_pos,
        weights=ch.w,
        reports=reports,
        eta_star=eta,
        floors=floors,
        flags=flags,
        wall_time=time.perf_counter() - t0,
    )


def check_invariants(rec: TrialRecord, cfg: SystemConfig) -> list:
    """Violated per-trial invariants, as readable strings (empty when clean)."""
    bad = []
    base = rec.reports.get("stage1")
    for label, r in rec.reports.items():
        floor = rec.floors.get(label, 0.0)
        if r.ee < floor * (1.0 - FLOOR_TOL):
            bad.append(f"{label}: EE {r.ee:.6g} below floor {floor:.6g}")
        if not np.allclose(np.abs(r.V), 1.0 / np.sqrt(cfg.M), rtol=0, atol=1e-12):
            bad.append(f"{label}: precoder entries not constant modulus")
        if np.any(r.p < 0) or r.p.sum() > cfg.p_max * (1.0 + FEAS_TOL):
            bad.append(f"{label}: power {r.p.sum():.6g} W outside [0, {cfg.p_max:.6g}]")
        lse = lse_fairness(r.rates, rec.weights, cfg.zeta, cfg.bandwidth)
        gap = cfg.bandwidth * np.log(cfg.K) / cfg.zeta
        slack = FEAS_TOL * max(abs(r.min_weighted_rate), 1.0)
        if not r.min_weighted_rate - gap - slack <= lse <= r.min_weighted_rate + slack:
            bad.append(f"{label}: LSE value {lse:.6g} outside its sandwich bound")
        if base is not None and label != "stage1":
            if r.min_weighted_rate < base.min_weighted_rate * (1.0 - FEAS_TOL):
                bad.append(f"{label}: min weighted rate below Stage 1")
    return bad


def _trial_job(args):
    spec, index, point = args
    return run_trial(spec, index, point)


def run_trials(spec: ExperimentSpec) -> list:
    """All (point, trial) records in point-major order."""
    jobs = [(spec, i, pt) for pt in spec.points for i in range(spec.trials)]
    if spec.workers == 1 or len(jobs) == 1:
        records = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_trial_job, jobs, chunksize=1))
    return records


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list
    tables: dict  # file name -> (header, rows)
    violations: list


def _mean(records, label, attr):
    return float(np.mean([getattr(r.reports[label], attr) for r in records]))


def _padded_mean(traces) -> np.ndarray:
    """Mean of traces of unequal length, each padded with its final value."""
    n = max(len(t) for t in traces)
    arr = np.array([list(t) + [t[-1]] * (n - len(t)) for t in traces], dtype=float)
    return arr.mean(axis=0)


def _sweep_column(label: str) -> str:
    if label == "stage1":
        return "maxEE"
    if label == "fairness":
        return "eeAware"
    return label


def _conv_column(label: str) -> str:
    return "maxEE" if label == "stage1" else ("maxF" + label[4:] if label.startswith("prop") else label)


def build_tables(spec: ExperimentSpec, records: list) -> dict:
    """Per-figure tables of means, in Mbit/s/J (EE) and Mbit/s (rates)."""
    labels = spec.labels()
    tables = {}
    if spec.sweep == "none":
        for name, attr, scale in (("conv_EE.csv", "ee_trace", 1e-6), ("conv_mwr.csv", "fairness_trace", 1e-6)):
            conv = [l for l in labels if l != "fairness"]
            cols = {l: _padded_mean([getattr(r.reports[l], attr) for r in records]) * scale for l in conv}
            n = max((c.size for c in cols.values()), default=0)
            header = ["iter"] + [_conv_column(l) for l in conv]
            rows = []
            for i in range(n):
                rows.append([i] + [cols[l][min(i, cols[l].size - 1)] for l in conv])
            tables[name] = (header, rows)
        return tables

    axis, prefix = ("P", "P") if spec.sweep == "pmax" else ("nRIS", "N")
    header = [axis] + [_sweep_column(l) for l in labels]
    for suffix, attr, scale in (("EE", "ee", 1e-6), ("JFI", "jain", 1.0), ("mwr", "min_weighted_rate", 1e-6)):
        rows = []
        for pt in spec.points:
            group = [r for r in records if r.point == pt]
            rows.append([pt] + [_mean(group, l, attr) * scale for l in labels])
        tables[f"{prefix}_{suffix}.csv"] = (header, rows)
    return tables


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


TRIAL_HEADER = [
    "point", "trial", "seed", "mode", "ee", "min_weighted_rate", "jain",
    "sum_power", "converged", "iterations", "flags", "wall_time",
]


def trial_rows(records: list) -> list:
    rows = []
    for rec in records:
        pt = "" if rec.point is None else rec.point
        for label, r in rec.reports.items():
            rows.append([
                pt, rec.index, rec.seed, label, r.ee, r.min_weighted_rate, r.jain,
                float(r.p.sum()), r.converged, r.iterations, ";".join(rec.flags), rec.wall_time,
            ])
    return rows


def plot_script(tables: dict) -> str:
    """gnuplot script drawing every emitted figure table to PNG."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set grid", "set terminal pngcairo size 800,600"]
    for name, (header, _) in tables.items():
        stem = name[:-4]
        lines.append(f"set output '{stem}.png'")
        lines.append(f"set xlabel '{header[0]}'")
        plots = [f"'{name}' using 1:{i + 2} with linespoints" for i in range(len(header) - 1)]
        lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_experiment(spec: ExperimentSpec, write: bool = True) -> ExperimentResult:
    """Run every trial, aggregate per point and mode, optionally write the files.

    With ``spec.strict`` any invariant violation raises ``RuntimeError`` after
    the files are written.
    """
    records = run_trials(spec)
    violations = []
    for rec in records:
        for msg in check_invariants(rec, spec.config_at(rec.point)):
            violations.append(f"point={rec.point} trial={rec.index}: {msg}")
        for msg in rec.flags:
            log.warning("point=%s trial=%d: %s", rec.point, rec.index, msg)
    tables = build_tables(spec, records)
    if write:
        out = Path(spec.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from exc
        for name, (header, rows) in tables.items():
            write_csv(out / name, header, rows)
        write_csv(out / "trials.csv", TRIAL_HEADER, trial_rows(records))
        script = out / "plots.gp"
        try:
            script.write_text(plot_script(tables), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {script}: {exc}") from exc
    if violations and spec.strict:
        raise RuntimeError(f"{len(violations)} invariant violations, first: {violations[0]}")
    for v in violations:
        log.error(v)
    return ExperimentResult(spec, records, tables, violations)


# -- configuration -----------------------------------------------------------


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _vec3(text: str) -> tuple:
    v = _floats(text)
    if len(v) != 3:
        raise ValueError("expected three coordinates")
    return v


# key -> (parser, (low, high) or None, description of the range)
CONFIG_KEYS = {
    "M": (int, (1, 4096)),
    "N": (int, (1, 4096)),
    "K": (int, (1, 64)),
    "bandwidth_hz": (float, (1.0, 1e12)),
    "center_freq_hz": (float, (1e6, 1e13)),
    "pmax_dbm": (float, (-50.0, 80.0)),
    "noise_dbm": (float, (-250.0, 30.0)),
    "pbs_dbw": (float, (-100.0, 50.0)),
    "pue_dbm": (float, (-100.0, 60.0)),
    "ptheta_dbm": (float, (-100.0, 60.0)),
    "xi": (float, (1.0, 100.0)),
    "rho": (_floats, (0.0, 1.0)),
    "zeta": (float, (1e-9, 1e9)),
    "alpha": (float, (1e-12, 1e6)),
    "epsilon": (float, (1e-15, 1.0)),
    "max_iters": (int, (1, 100000)),
    "phase_max_iters": (int, (1, 1000000)),
    "dinkelbach_warm_start": (_bool, None),
    "stage2_phase_reset": (_bool, None),
    "n_paths": (int, (1, 64)),
    "nlos_offset_db": (float, (0.0, 100.0)),
    "fading_var_db": (float, (0.0, 100.0)),
    "w_low": (float, (1e-9, 1e9)),
    "w_high": (float, (1e-9, 1e9)),
    "bs_pos": (_vec3, None),
    "ris_pos": (_vec3, None),
    "trials": (int, (1, 10**7)),
    "seed": (int, (0, 2**63 - 1)),
    "sweep": (str, None),
    "pmax_sweep_dbm": (_floats, (-50.0, 80.0)),
    "nris_sweep": (_ints, (1, 4096)),
    "modes": (lambda t: tuple(x for x in t.replace(",", " ").split()), None),
    "workers": (int, (1, 1024)),
    "out": (str, None),
    "strict": (_bool, None),
}


def _convert(key: str, raw: str):
    if key not in CONFIG_KEYS:
        raise ValueError(f"unknown config key {key!r}")
    parser, bounds = CONFIG_KEYS[key]
    try:
        value = parser(raw) if isinstance(raw, str) else raw
    except ValueError as exc:
        raise ValueError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    if bounds is not None:
        lo, hi = bounds
        items = value if isinstance(value, tuple) else (value,)
        if not items or any(not lo <= x <= hi for x in items):
            raise ValueError(f"{key} = {raw!r} outside accepted range [{lo:g}, {hi:g}]")
    return value


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def parse_config(path=None, overrides: Optional[dict] = None) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a config file and/or overrides.

    dB-valued keys are converted to linear units here.  Unknown keys and
    out-of-range values raise ``ValueError`` naming the key.
    """
    raw = read_config_file(path) if path is not None else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    v = {k: _convert(k, r) for k, r in raw.items()}

    sys_kw = {}
    for key in ("M", "N", "K", "xi", "zeta", "alpha", "epsilon", "max_iters",
                "phase_max_iters", "dinkelbach_warm_start", "stage2_phase_reset"):
        if key in v:
            sys_kw[key] = v[key]
    if "bandwidth_hz" in v:
        sys_kw["bandwidth"] = v["bandwidth_hz"]
    if "pmax_dbm" in v:
        sys_kw["p_max"] = float(dbm_to_watt(v["pmax_dbm"]))
    if "noise_dbm" in v:
        sys_kw["noise_power"] = float(dbm_to_watt(v["noise_dbm"]))
    if "pbs_dbw" in v:
        sys_kw["p_bs"] = 10 ** (v["pbs_dbw"] / 10)
    if "ptheta_dbm" in v:
        sys_kw["p_theta"] = float(dbm_to_watt(v["ptheta_dbm"]))
    K = v.get("K", SystemConfig.K)
    if "pue_dbm" in v:
        sys_kw["p_ue"] = (float(dbm_to_watt(v["pue_dbm"])),) * K
    center = v.get("center_freq_hz", 28e9)
    if "center_freq_hz" in v or "bandwidth_hz" in v or "K" in v:
        sys_kw["carriers"] = fdma_carriers(K, center, v.get("bandwidth_hz", SystemConfig.bandwidth))
    base = SystemConfig(**sys_kw)

    chan_kw = {k: v[k] for k in ("n_paths", "nlos_offset_db", "fading_var_db", "w_low", "w_high", "bs_pos", "ris_pos") if k in v}
    if "center_freq_hz" in v:
        chan_kw["center_freq"] = center
    channel = ChannelConfig(**chan_kw)

    sweep = v.get("sweep", "none")
    if sweep not in SWEEPS:
        raise ValueError(f"sweep = {sweep!r} not one of {SWEEPS}")
    values = ()
    if sweep == "pmax":
        values = v.get("pmax_sweep_dbm", DEFAULT_PMAX_DBM)
    elif sweep == "nris":
        values = v.get("nris_sweep", DEFAULT_NRIS)

    modes = v.get("modes", MODES)
    bad = set(modes) - set(MODES)
    if bad:
        raise ValueError(f"modes contains {sorted(bad)}; accepted: {', '.join(MODES)}")

    return ExperimentSpec(
        base=base,
        channel=channel,
        sweep=sweep,
        sweep_values=values,
        rhos=v.get("rho", (0.85, 0.5)),
        trials=v.get("trials", 50),
        master_seed=v.get("seed", 0),
        out_dir=v.get("out", "results"),
        modes=tuple(modes),
        workers=v.get("workers", 1),
        strict=v.get("strict", False),
    )


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
