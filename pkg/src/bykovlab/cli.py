"""Command-line entry point.

One binary with subcommands.  Settings come from a JSON config file
(``--config``) with per-command flags on top; flags win.  Curves and time
series are written as CSV, scalar results as JSON and sweeps as JSON lines.
Every numeric file carries the tool version and a hash of the effective
configuration (a ``#`` header in CSV, a ``meta`` record in JSON, a sidecar
``.meta.json`` next to a JSON-lines atlas).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 search came back empty, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import BykovError, ConfigError, IoFailure, NotFound
from .integrator import IntegratorOptions, integrate
from .model import ModelParams, classify_symmetry, equilibria, load_catalog, saddle_ratio
from .sections import SectionGeometry

OUT_ENV = "BYKOVLAB_OUT"
DEFAULT_OUT = "bykovlab-out"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Neighborhoods:
    """Radii of the node balls U, connection neighbourhoods V and the network tube."""

    r_U: float = 0.15
    r_V: float = 0.1
    tube: float = 0.3


def _grid_cls():
    from .scanner import GridSpec

    return GridSpec


def _budget_cls():
    from .scanner import CellBudget

    return CellBudget


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs besides its own arguments.

    Defaults: ``ModelParams()`` (a1 = 1, a2 = -0.1, l1 = l2 = 0),
    ``IntegratorOptions()`` (rel 1e-10, abs 1e-12), ``SectionGeometry()``
    (eps 0.1, tau 0.5, chart radius and height 0.2), a 50 x 50 sweep of
    ``(0, 0.1]^2`` with the default ``CellBudget``, neighbourhood radii
    0.15 / 0.1 / 0.3, seed 0, one worker, and the output directory from
    ``$BYKOVLAB_OUT`` or ``./bykovlab-out``.
    """

    params: ModelParams = field(default_factory=ModelParams)
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    sections: SectionGeometry = field(default_factory=SectionGeometry)
    grid: object = field(default_factory=lambda: _grid_cls()())
    budget: object = field(default_factory=lambda: _budget_cls()())
    neighborhoods: Neighborhoods = field(default_factory=Neighborhoods)
    output: str | None = None
    seed: int = 0
    workers: int = 1

    _SECTIONS = ("params", "integrator", "sections", "sweep", "neighborhoods", "output", "seed", "workers")

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    # -- (de)serialization --

    def to_dict(self) -> dict:
        return {
            "params": _plain(self.params),
            "integrator": _plain(self.integrator),
            "sections": _plain(self.sections),
            "sweep": {"grid": _plain(self.grid), "budget": _plain(self.budget)},
            "neighborhoods": _plain(self.neighborhoods),
            "output": self.output,
            "seed": self.seed,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls._SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sweep = d.get("sweep", {})
        if not isinstance(sweep, dict) or set(sweep) - {"grid", "budget"}:
            raise ConfigError("sweep must be an object with keys 'grid' and 'budget'")
        kw = {
            "params": _build(ModelParams, d.get("params", {}), "params"),
            "integrator": _build(IntegratorOptions, d.get("integrator", {}), "integrator"),
            "sections": _build(SectionGeometry, d.get("sections", {}), "sections"),
            "grid": _build(_grid_cls(), sweep.get("grid", {}), "sweep.grid"),
            "budget": _build(_budget_cls(), sweep.get("budget", {}), "sweep.budget"),
            "neighborhoods": _build(Neighborhoods, d.get("neighborhoods", {}), "neighborhoods"),
            "output": _check(d.get("output"), (str, type(None)), "output"),
            "seed": _integer(d.get("seed", 0), "seed"),
            "workers": _integer(d.get("workers", 1), "workers"),
        }
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """Short SHA-256 of the canonical JSON form, leaving out settings that do not change results."""
        d = {k: v for k, v in self.to_dict().items() if k not in ("output", "workers")}
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def out_dir(self) -> Path:
        return Path(self.output or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def header(self) -> dict:
        return {"tool": "bykovlab", "version": __version__, "config_hash": self.digest()}


def _plain(obj) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(obj).items()}


def _check(v, types, where):
    if not isinstance(v, types):
        raise ConfigError(f"{where}: unexpected value {v!r}")
    return v


def _integer(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return int(v)


def _build(cls, d, where: str):
    """Instantiate a dataclass from a dict, coercing by the type of each default."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    proto = cls()
    kw = {}
    for k, v in d.items():
        ref = getattr(proto, k)
        name = f"{where}.{k}"
        if isinstance(ref, bool):
            kw[k] = _check(v, bool, name)
        elif isinstance(ref, int):
            kw[k] = _integer(v, name)
        elif isinstance(ref, float):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name}: expected a number, got {v!r}")
            kw[k] = float(v)
        elif isinstance(ref, tuple):
            if not isinstance(v, (list, tuple)) or len(v) != len(ref):
                raise ConfigError(f"{name}: expected a list of {len(ref)} numbers")
            kw[k] = tuple(float(x) for x in v)
        else:
            kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


# ---------------------------------------------------------------------------
# output helpers


class Output:
    """Writes files into the output directory, each tagged with the config header."""

    def __init__(self, cfg: RunConfig, sub: str):
        self.cfg = cfg
        self.dir = cfg.out_dir() / sub
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(f"cannot create {self.dir}: {exc}") from exc
        self.written: list[str] = []

    def _header_lines(self) -> list[str]:
        h = self.cfg.header()
        return [f"{h['tool']} {h['version']} config_hash={h['config_hash']}"]

    def csv(self, name: str, columns: Sequence[str], rows) -> Path:
        path = self.dir / name
        try:
            with open(path, "w", newline="") as fh:
                for line in self._header_lines():
                    fh.write(f"# {line}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for r in rows:
                    w.writerow([_fmt(v) for v in r])
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        self.written.append(str(path))
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        doc = {"meta": self.cfg.header(), **payload}
        try:
            path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        self.written.append(str(path))
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else None
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def read_curve_csv(path: str | Path) -> np.ndarray:
    """Numeric columns of a CSV file; ``#`` lines and a text header row are skipped."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in rec])
                except ValueError:
                    if rows:
                        raise ConfigError(f"{path}: non-numeric row {rec}")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path}: no numeric rows")
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ConfigError(f"{path}: expected 3 (R^3) or 4 (S^3) columns")
    return arr


# ---------------------------------------------------------------------------
# commands


def cmd_equilibria(cfg: RunConfig) -> dict:
    """Equilibria, eigenvalues, saddle indices and the saddle ratio."""
    p = cfg.params
    eqs = equilibria(p)
    report = {
        "params": p.to_dict(),
        "equilibria": [
            {
                "label": e.label,
                "location": e.location,
                "C": e.C,
                "E": e.E,
                "delta": e.delta,
                "morse_index": e.morse_index,
                "eigenvalues": [[z.real, z.imag] for z in e.eigenvalues],
                "radial_eigenvalue": e.radial_eigenvalue,
            }
            for e in eqs
        ],
        "rho": saddle_ratio(p),
    }
    Output(cfg, "equilibria").json("equilibria.json", report)
    return report


def _node_sojourns(visits) -> list:
    return [(v.label, v.t_in, v.t_out, v.t_out - v.t_in) for v in visits if v.kind == "node"]


def cmd_simulate(cfg: RunConfig, x0=None, T: float = 300.0, dt: float = 0.01,
                 pairs: Sequence[tuple[int, int]] = ((1, 2), (1, 3), (3, 4)),
                 itinerary: bool = True) -> dict:
    """Trajectory, coordinate projections, time series, sojourn times and itinerary."""
    from .scanner import REFERENCE_X0
    from .switching import Network, NeighborhoodSystem, itinerary as make_itinerary

    p = cfg.params
    x0 = np.asarray(REFERENCE_X0 if x0 is None else x0, dtype=float)
    if x0.shape != (4,) or not np.all(np.isfinite(x0)) or np.linalg.norm(x0) == 0:
        raise ConfigError("x0 must be four finite numbers, not all zero")
    x0 = x0 / np.linalg.norm(x0)
    if not (T > 0 and dt > 0):
        raise ConfigError("T and dt must be positive")
    traj, _ = integrate(p, x0, (0.0, T), cfg.integrator, t_eval=np.arange(0.0, T + 0.5 * dt, dt))
    out = Output(cfg, "simulate")
    out.csv("trajectory.csv", ["t", "x1", "x2", "x3", "x4"], ([t, *x] for t, x in zip(traj.t, traj.x)))
    for a, b in pairs:
        if not (1 <= a <= 4 and 1 <= b <= 4 and a != b):
            raise ConfigError(f"bad projection pair ({a}, {b})")
        out.csv(f"projection_x{a}_x{b}.csv", ["t", f"x{a}", f"x{b}"],
                ([t, x[a - 1], x[b - 1]] for t, x in zip(traj.t, traj.x)))
    out.csv("timeseries.csv", ["t", "x4", "norm_drift"],
            ([t, x[3], np.linalg.norm(x) - 1.0] for t, x in zip(traj.t, traj.x)))
    summary = {"x0": x0, "T": T, "dt": dt, "drift_max": traj.drift_max, "n_samples": len(traj.t)}
    if itinerary:
        nb = cfg.neighborhoods
        net = Network.build(p, cfg.sections)
        nbhd = NeighborhoodSystem(net, nb.r_U, nb.r_V, nb.tube)
        visits = make_itinerary(traj, nbhd)
        out.csv("itinerary.csv", ["kind", "label", "t_in", "t_out"],
                ([v.kind, v.label, v.t_in, v.t_out] for v in visits))
        soj = _node_sojourns(visits)
        out.csv("sojourn.csv", ["node", "t_in", "t_out", "duration"], soj)
        summary["itinerary"] = [v.label for v in visits if v.kind == "connection"]
        summary["sojourn_times"] = [s[3] for s in soj]
    out.json("simulate.json", summary)
    return summary


def cmd_melnikov(cfg: RunConfig, branch: int = 0, samples: int = 200, direct: bool = False) -> dict:
    """Melnikov coefficients, zeros and M(t0) on one period."""
    from .melnikov import compute_connection, melnikov_coefficients, melnikov_direct

    if samples < 2:
        raise ConfigError("samples must be at least 2")
    conn = compute_connection(cfg.params, branch)
    res = melnikov_coefficients(conn, cfg.params)
    t0 = np.linspace(0.0, math.pi, samples)
    cols = ["t0", "M", "dM"]
    data = [t0, res.M(t0), res.dM(t0)]
    if direct:
        cols.append("M_direct")
        data.append(melnikov_direct(conn, t0))
    out = Output(cfg, "melnikov")
    out.csv("melnikov_M.csv", cols, zip(*data))
    report = res.to_dict()
    out.json("melnikov.json", report)
    return report


def cmd_manifolds(cfg: RunConfig, n_seeds: int = 256, tangency: tuple[float, float, int] | None = None) -> dict:
    """W^u(w) and W^s(v) on the entry wall of v, their crossings and optional tangency brackets."""
    from .manifolds import detect_tangency, detect_transverse_connections

    rep = detect_transverse_connections(cfg.params, cfg.sections, n_seeds=n_seeds)
    out = Output(cfg, "manifolds")
    for name, c in (("unstable_w.csv", rep.unstable_curve), ("stable_v.csv", rep.stable_curve)):
        out.csv(name, ["param", "x", "y"], zip(c.param, c.x, c.y))
    report = {
        "section": "I_v_in",
        "crossings": [asdict(c) for c in rep.crossings],
        "certified": len(rep.certified),
        "gamma1_pairs": rep.pairs,
    }
    if tangency is not None:
        lo, hi, n = tangency
        if n < 2 or not lo < hi:
            raise ConfigError("tangency grid needs lo < hi and at least 2 points")
        tr = detect_tangency(np.linspace(lo, hi, int(n)), cfg.params.with_(lambda2=0.0), cfg.sections)
        report["tangency_brackets"] = tr.brackets
        report["tangency_refined"] = [r.lambda1 for r in tr.refined] if tr.refined else []
    out.json("manifolds.json", report)
    return report


def cmd_return_map(cfg: RunConfig, n_range: tuple[int, int] | None = None, samples: int = 400) -> dict:
    """Horseshoe strips of the model return map and their transition matrix."""
    from .sections import verify_horseshoe

    rng = None if n_range is None else range(n_range[0], n_range[1] + 1)
    rep = verify_horseshoe(cfg.sections, equilibria(cfg.params), cfg.params, n_range=rng, samples=samples)
    report = rep.to_dict()
    Output(cfg, "return_map").json("return_map.json", report)
    return report


def cmd_sweep(cfg: RunConfig, limit: int | None = None) -> dict:
    """Classify the configured grid into a JSON-lines atlas (resumable)."""
    from .scanner import run_sweep

    out = Output(cfg, "sweep")
    path = out.dir / "atlas.jsonl"
    meta = out.dir / "atlas.meta.json"
    if meta.exists() and path.exists():
        try:
            prev = json.loads(meta.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"cannot read {meta}: {exc}") from exc
        if prev.get("sweep_hash") != _sweep_hash(cfg):
            raise ConfigError(f"{path} was written with a different configuration; use another --out")
    out.json("atlas.meta.json", {"sweep_hash": _sweep_hash(cfg), "config": cfg.to_dict()})
    s = run_sweep(cfg.grid, path, workers=cfg.workers, base=cfg.params, budget=cfg.budget, limit=limit)
    return {"n_cells": s.n_cells, "computed": s.computed, "counts": s.counts, "path": s.path}


def _sweep_hash(cfg: RunConfig) -> str:
    """Hash of the settings that determine atlas content (not workers or output)."""
    d = cfg.to_dict()
    key = {k: d[k] for k in ("params", "sweep")}
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


def cmd_switching(cfg: RunConfig, path: Sequence[str], x0=None, T: float = 400.0, dt: float = 0.01) -> dict:
    """Switching witness for ``path``: checked along a given trajectory or searched for."""
    from .switching import (Network, NeighborhoodSystem, NetworkPath, ShadowingBudget, find_shadowing_ic,
                            follows_path)

    npath = NetworkPath(tuple(path))
    nb = cfg.neighborhoods
    net = Network.build(cfg.params, cfg.sections)
    nbhd = NeighborhoodSystem(net, nb.r_U, nb.r_V, nb.tube)
    out = Output(cfg, "switching")
    if x0 is not None:
        x0 = np.asarray(x0, float)
        x0 = x0 / np.linalg.norm(x0)
        traj, _ = integrate(cfg.params, x0, (0.0, T), cfg.integrator, t_eval=np.arange(0.0, T + 0.5 * dt, dt))
        r = follows_path(traj, npath, nbhd)
        report = {"path": list(npath.connections), "x0": x0, "network": net.labels, "result": r.to_dict()}
        out.json("switching.json", report)
        if not r:
            raise NotFound(f"trajectory does not follow the path: {r.message}")
        return report
    res = find_shadowing_ic(npath, cfg.params, nbhd, ShadowingBudget(), cfg.sections)
    report = {
        "path": list(npath.connections),
        "network": net.labels,
        "x0": res.x0,
        "offset": res.offset,
        "evaluations": res.evaluations,
        "result": res.witness.to_dict(),
    }
    out.json("switching.json", report)
    return report


def cmd_perturbations(cfg: RunConfig, catalog: str | None = None) -> dict:
    """Symmetry class of each catalog term next to its claimed class."""
    terms = load_catalog(catalog)
    rows = []
    for t in terms:
        found = classify_symmetry(t, seed=cfg.seed)
        rows.append({"term": t.label, "claimed": t.claimed_symmetry, "computed": found,
                     "agree": (found == t.claimed_symmetry) if t.claimed_symmetry else None})
    report = {"terms": rows}
    Output(cfg, "perturbations").json("perturbations.json", report)
    return report


def cmd_linking(cfg: RunConfig, curve_a: str, curve_b: str, method: str = "auto",
                separation: float = 10.0) -> dict:
    """Integer linking number of two closed curves read from CSV (R^3 or S^3)."""
    from .manifolds import linking_number, linking_on_sphere

    A, B = read_curve_csv(curve_a), read_curve_csv(curve_b)
    if A.shape[1] != B.shape[1]:
        raise ConfigError("both curves must live in the same space (3 or 4 columns)")
    if A.shape[1] == 4:
        lk = linking_on_sphere(A, B, separation, method=method, seed=cfg.seed)
    else:
        lk = linking_number(A, B, separation, method=method, seed=cfg.seed)
    report = {"curve_a": str(curve_a), "curve_b": str(curve_b), "method": method, "linking": lk}
    Output(cfg, "linking").json("linking.json", report)
    return report


# ---------------------------------------------------------------------------
# argument parsing

_OVERRIDES = {
    # flag: (config section, key, type)
    "alpha1": ("params", "alpha1", float),
    "alpha2": ("params", "alpha2", float),
    "lambda1": ("params", "lambda1", float),
    "lambda2": ("params", "lambda2", float),
    "rel_tol": ("integrator", "rel_tol", float),
    "abs_tol": ("integrator", "abs_tol", float),
    "max_step": ("integrator", "max_step", float),
    "eps": ("sections", "eps", float),
    "tau": ("sections", "tau", float),
    "rotation_wv": ("sections", "rotation_wv", float),
    "r_U": ("neighborhoods", "r_U", float),
    "r_V": ("neighborhoods", "r_V", float),
    "tube": ("neighborhoods", "tube", float),
    "n1": ("grid", "n1", int),
    "n2": ("grid", "n2", int),
}


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--config", metavar="PATH", help="JSON run configuration")
    c.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    c.add_argument("--workers", type=int, help="worker processes for sweeps")
    c.add_argument("--seed", type=int, help="seed for all randomized search orderings")
    c.add_argument("--quiet", action="store_true", help="do not print the JSON result")
    for flag, (_, _, typ) in _OVERRIDES.items():
        c.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, metavar="X")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="bykovlab", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"bykovlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("equilibria", parents=[common], help="equilibria, eigenvalues, saddle ratio")

    s = sub.add_parser("simulate", parents=[common], help="trajectory, projections, itinerary")
    s.add_argument("--x0", type=float, nargs=4, metavar="X", help="initial point (normalized onto S^3)")
    s.add_argument("--T", type=float, default=300.0, help="integration time")
    s.add_argument("--dt", type=float, default=0.01, help="output sampling step")
    s.add_argument("--no-itinerary", action="store_true", help="skip the network itinerary")

    s = sub.add_parser("melnikov", parents=[common], help="Melnikov coefficients and M(t0)")
    s.add_argument("--branch", type=int, default=0, choices=(0, 1))
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--direct", action="store_true", help="also evaluate M(t0) by direct quadrature")

    s = sub.add_parser("manifolds", parents=[common], help="section curves, crossings, tangencies")
    s.add_argument("--seeds", type=int, default=256)
    s.add_argument("--tangency", type=float, nargs=3, metavar=("LO", "HI", "N"),
                   help="scan lambda1 in [LO, HI] on N points for tangencies")

    s = sub.add_parser("return-map", parents=[common], help="horseshoe strips and transition matrix")
    s.add_argument("--n-range", type=int, nargs=2, metavar=("N0", "N1"))
    s.add_argument("--samples", type=int, default=400)

    s = sub.add_parser("sweep", parents=[common], help="(lambda1, lambda2) atlas as JSON lines")
    s.add_argument("--limit", type=int, help="stop after this many new cells")

    s = sub.add_parser("switching", parents=[common], help="switching witness for a network path")
    s.add_argument("path", nargs="+", help="connection labels, e.g. '[v->w]+' '[w->v]_0'")
    s.add_argument("--x0", type=float, nargs=4, metavar="X", help="check this trajectory instead of searching")
    s.add_argument("--T", type=float, default=400.0)

    s = sub.add_parser("perturbations", parents=[common], help="symmetry table of the perturbation catalog")
    s.add_argument("--catalog", metavar="PATH", help="catalog JSON (default: bundled)")

    s = sub.add_parser("linking", parents=[common], help="linking number of two closed curves")
    s.add_argument("curve_a")
    s.add_argument("curve_b")
    s.add_argument("--method", choices=("auto", "gauss", "crossings"), default="auto")
    s.add_argument("--separation", type=float, default=10.0)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Config file (if any), then flag overrides."""
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    d = cfg.to_dict()
    for flag, (sec, key, _) in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if sec == "grid":
            d["sweep"]["grid"][key] = v
        else:
            d[sec][key] = v
    if args.out is not None:
        d["output"] = args.out
    if args.workers is not None:
        d["workers"] = args.workers
    if args.seed is not None:
        d["seed"] = args.seed
    return RunConfig.from_dict(d)


def run(args: argparse.Namespace) -> dict:
    cfg = config_from_args(args)
    c = args.command
    if c == "equilibria":
        return cmd_equilibria(cfg)
    if c == "simulate":
        return cmd_simulate(cfg, args.x0, args.T, args.dt, itinerary=not args.no_itinerary)
    if c == "melnikov":
        return cmd_melnikov(cfg, args.branch, args.samples, args.direct)
    if c == "manifolds":
        return cmd_manifolds(cfg, args.seeds, tuple(args.tangency) if args.tangency else None)
    if c == "return-map":
        return cmd_return_map(cfg, tuple(args.n_range) if args.n_range else None, args.samples)
    if c == "sweep":
        return cmd_sweep(cfg, args.limit)
    if c == "switching":
        return cmd_switching(cfg, args.path, args.x0, args.T)
    if c == "perturbations":
        return cmd_perturbations(cfg, args.catalog)
    if c == "linking":
        return cmd_linking(cfg, args.curve_a, args.curve_b, args.method, args.separation)
    raise ConfigError(f"unknown command {c!r}")  # pragma: no cover


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        result = run(args)
    except BykovError as exc:
        print(f"bykovlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"bykovlab: error: {exc}", file=sys.stderr)
        return IoFailure.exit_code
    if not args.quiet:
        print(json.dumps(_jsonable(result), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
