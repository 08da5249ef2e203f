"""Text and binary serialisation.

Model config files are flat ``key = value`` text::

    # two alleles, asymmetric mutation
    d = 2
    theta = 1.0
    P = 0.9, 0.1, 0.2, 0.8      # row-major
    gamma = 0, 0                # optional, defaults to zeros

Every CSV starts with a ``#`` comment line carrying the parameter hash and
seed, then a header row.  Floats are written with 17 significant digits so
they read back bit-exactly.
"""
from __future__ import annotations

import csv
import io as _io
import math
import os
from pathlib import Path

import numpy as np

from .core import ModelParams, ProbTable, validate
from .errors import InvalidConfig

KEYS = ("d", "theta", "P", "gamma")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidConfig(f"{key}: cannot parse {text!r} as numbers") from exc


def parse_config(text: str) -> ModelParams:
    """Parse the ``key = value`` model format; unknown or missing keys are errors."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}; allowed {KEYS}")
        if key in raw:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for key in ("theta", "P"):
        if key not in raw:
            raise InvalidConfig(f"config is missing {key!r}")
    P = _floats(raw["P"], "P")
    if "d" in raw:
        try:
            d = int(raw["d"])
        except ValueError as exc:
            raise InvalidConfig(f"d: not an integer: {raw['d']!r}") from exc
    else:
        d = int(round(math.sqrt(len(P))))
    if d < 2 or len(P) != d * d:
        raise InvalidConfig(f"P has {len(P)} entries, expected d*d with d={d}")
    theta = _floats(raw["theta"], "theta")
    if len(theta) != 1:
        raise InvalidConfig("theta must be a single number")
    gamma = _floats(raw["gamma"], "gamma") if "gamma" in raw else [0.0] * d
    if len(gamma) != d:
        raise InvalidConfig(f"gamma has {len(gamma)} entries, expected {d}")
    return validate(theta[0], np.array(P).reshape(d, d), np.array(gamma))


def read_config(path) -> ModelParams:
    return parse_config(Path(path).read_text())


def format_config(params: ModelParams) -> str:
    lines = [
        f"d = {params.d}",
        f"theta = {fmt(params.theta)}",
        "P = " + ", ".join(fmt(v) for v in params.P.ravel()),
        "gamma = " + ", ".join(fmt(v) for v in params.gamma),
    ]
    return "\n".join(lines) + "\n"


def write_config(params: ModelParams, path) -> None:
    Path(path).write_text(format_config(params))


# ---------------------------------------------------------------------------
# CSV helpers

def provenance_line(params_hash: str, seed=None, **extra) -> str:
    parts = [f"params_hash={params_hash}", f"seed={'none' if seed is None else seed}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def render_csv(header, rows, comment: str | None = None, trailer=()) -> str:
    buf = _io.StringIO()
    if comment:
        buf.write(comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in row])
    for line in trailer:
        buf.write(line + "\n")
    return buf.getvalue()


def write_text(path, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# probability tables

def table_csv(table: ProbTable, params_hash: str = "", seed=None) -> str:
    d = table.d
    header = [f"n{i + 1}" for i in range(d)] + ["log_p"]
    rows = [list(map(int, c)) + [float(v)] for c, v in zip(table.configs(), table.log_p)]
    sums = table.level_sums()
    trailer = [f"# size={m} sum_p={fmt(s)}" for m, s in enumerate(sums, 1)]
    comment = provenance_line(params_hash or table.meta.get("params_hash", ""), seed, N=table.max_size)
    return render_csv(header, rows, comment, trailer)


def write_table_csv(table: ProbTable, path, params_hash: str = "", seed=None) -> Path:
    return write_text(path, table_csv(table, params_hash, seed))


def read_table_csv(path) -> ProbTable:
    """Read a table CSV back; rows may come in any order."""
    meta = {}
    rows = []
    header = None
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta.setdefault(k, v)
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None or header[-1] != "log_p":
        raise InvalidConfig(f"{path}: not a probability table")
    d = len(header) - 1
    counts = np.array([[int(v) for v in r[:d]] for r in rows], dtype=np.int64)
    logs = np.array([float(r[d]) for r in rows])
    N = int(counts.sum(axis=1).max())
    shell = ProbTable(d, N, np.zeros(math.comb(N + d, d) - 1), meta)
    out = np.full(len(shell), np.nan)
    sizes = counts.sum(axis=1)
    for m in range(1, N + 1):
        sel = sizes == m
        if sel.any():
            out[shell.indices(counts[sel])] = logs[sel]
    if np.isnan(out).any():
        raise InvalidConfig(f"{path}: table is incomplete")
    return ProbTable(d, N, out, meta)


# ---------------------------------------------------------------------------
# binary cache

def cache_path(directory, params: ModelParams, N: int, policy_name: str) -> Path:
    return Path(directory) / f"{params.fingerprint()}_N{N}_{policy_name}.npz"


def save_table_cache(table: ProbTable, directory, params: ModelParams, policy_name: str) -> Path:
    path = cache_path(directory, params, table.max_size, policy_name)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, d=table.d, N=table.max_size, log_p=table.log_p, params_hash=params.fingerprint())
    return path


def load_table_cache(directory, params: ModelParams, N: int, policy_name: str) -> ProbTable | None:
    path = cache_path(directory, params, N, policy_name)
    if not path.exists():
        return None
    with np.load(path) as z:
        if str(z["params_hash"]) != params.fingerprint():
            return None
        return ProbTable(int(z["d"]), int(z["N"]), z["log_p"], {"params_hash": params.fingerprint()})


# ---------------------------------------------------------------------------
# ensembles and trajectories

def ensemble_csv(ens, seed=None) -> str:
    d = ens.d
    header = ["replica", "time"] + [f"x_{i + 1}" for i in range(d)]
    rows = []
    for r, rid in enumerate(ens.replica_ids):
        for s, t in enumerate(ens.times):
            rows.append([int(rid), float(t)] + [float(v) for v in ens.samples[r, s]])
    return render_csv(header, rows, provenance_line(ens.params_hash, seed))


def trajectory_csv(traj, params_hash: str, seed=None) -> str:
    d = len(traj.states[0])
    header = ["step"] + [f"n{i + 1}" for i in range(d)] + ["event"]
    rows = []
    for k, state in enumerate(traj.states):
        event = "start" if k == 0 else traj.events[k - 1]
        rows.append([k] + list(state) + [event])
    extra = {"truncated": "yes"} if traj.truncated else {}
    return render_csv(header, rows, provenance_line(params_hash, seed, **extra))


def default_out_dir() -> Path:
    return Path(os.environ.get("ASGLIMITS_OUT_DIR", "."))
