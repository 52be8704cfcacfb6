"""Command-line front end: configuration, serialisation and plots.

Subcommands map one-to-one onto library operations; everything here is
plumbing.  Artifacts are written atomically (temp file + rename), every
output file carries a header block with the resolved-config hash and
the tolerance set, and a single machine-readable JSON summary line goes
to standard output.  Human-oriented progress goes to standard error.

Exit codes: 0 success, 2 configuration/validation failure, 3 coverage
failure, 4 numerical failure, 5 oracle disagreement in `validate`.

Identical config and seed produce byte-identical CSV/JSON artifacts;
SVG output is a plain static plot and carries the same header comment
but no byte-level guarantee (renderer ids vary between runs).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys as _sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli

from .errors import (
    BracketingError,
    CoverageError,
    DomainError,
    LcsyncError,
    ValidationError,
)
from .extremal import critical_trajectory, final_bang_sign, rewind_extremal
from .limit_cycle import chi, find_limit_cycle
from .model import van_der_pol
from .oracle import direct_min_time
from .synthesis import (
    build_field,
    coexistence_curve,
    critical_K,
    min_time_curve,
    optimal_for_point,
    phase_diagram,
    switching_curves,
)

__all__ = ["RunConfig", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COVERAGE = 3
EXIT_NUMERICAL = 4
EXIT_VALIDATION = 5

_LOG = logging.getLogger("lcsync")

_TOL_KEYS = ("rel", "abs", "t_tol", "event_tol", "delta", "time_tie_tol", "feas_tol")


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    """Resolved run configuration: TOML file values overridden by flags.

    delta = 0 selects the adaptive match radius; event_tol is the event
    clock refinement tolerance (the integrator uses the tighter of t_tol
    and event_tol for its single time-resolution knob)."""

    system: str = "vdp"
    mu: float = 0.1
    K: float = 2.0
    region: str = "exterior"
    n_anchors: int = 256
    rel: float = 1e-10
    abs: float = 1e-10
    t_tol: float = 1e-10
    event_tol: float = 1e-10
    delta: float = 0.0
    time_tie_tol: float = 1e-5
    feas_tol: float = 1e-4
    t_back_max: float = 60.0
    max_bangs: int = 8
    out_dir: str = "out"
    formats: tuple[str, ...] = ("csv", "json")
    seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        if self.system != "vdp":
            raise ValidationError(
                f"unknown system {self.system!r}; custom systems enter through "
                "the library API (function-valued fields are not serialisable)"
            )
        if not (self.mu > 0):
            raise ValidationError(f"mu must be positive, got {self.mu!r}")
        if not (self.K > 0):
            raise ValidationError(f"K must be positive, got {self.K!r}")
        if self.region not in ("exterior", "interior"):
            raise ValidationError(f"region must be exterior or interior, got {self.region!r}")
        if self.n_anchors < 64:
            raise ValidationError("n_anchors must be at least 64")
        for key in ("rel", "abs", "t_tol", "event_tol", "time_tie_tol", "feas_tol"):
            if not (getattr(self, key) > 0):
                raise ValidationError(f"tolerance {key} must be positive")
        if self.delta < 0:
            raise ValidationError("delta must be zero (adaptive) or positive")
        if not (self.t_back_max > 0):
            raise ValidationError("t_back_max must be positive")
        if self.max_bangs < 1:
            raise ValidationError("max_bangs must be at least 1")
        if self.jobs < 1:
            raise ValidationError("jobs must be at least 1")
        bad = set(self.formats) - {"csv", "json", "svg"}
        if bad:
            raise ValidationError(f"unknown output formats: {sorted(bad)}")

    @property
    def config_hash(self) -> str:
        payload = dataclasses.asdict(self)
        # plumbing that cannot change computed numbers stays out of the hash
        for key in ("out_dir", "formats", "jobs"):
            payload.pop(key)
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def tolerances_line(self) -> str:
        return " ".join(f"{k}={getattr(self, k):g}" for k in _TOL_KEYS)

    @property
    def integrate_t_tol(self) -> float:
        return min(self.t_tol, self.event_tol)


_TOML_MAP = {
    ("system", "name"): "system",
    ("system", "mu"): "mu",
    ("force", "K"): "K",
    ("tolerances", "rel"): "rel",
    ("tolerances", "abs"): "abs",
    ("tolerances", "t_tol"): "t_tol",
    ("tolerances", "event_tol"): "event_tol",
    ("tolerances", "delta"): "delta",
    ("tolerances", "time_tie_tol"): "time_tie_tol",
    ("tolerances", "feas_tol"): "feas_tol",
    ("horizons", "t_back_max"): "t_back_max",
    ("horizons", "max_bangs"): "max_bangs",
    ("run", "region"): "region",
    ("run", "n_anchors"): "n_anchors",
    ("run", "out_dir"): "out_dir",
    ("run", "formats"): "formats",
    ("run", "seed"): "seed",
    ("run", "jobs"): "jobs",
}


def _load_config(path: "str | None") -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            doc = tomli.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as e:
        raise ValidationError(f"config file {path} is not valid TOML: {e}")
    out: dict[str, Any] = {}
    for (table, key), field_name in _TOML_MAP.items():
        if table in doc and key in doc[table]:
            out[field_name] = doc[table][key]
    known = {t for t, _ in _TOML_MAP}
    stray = set(doc) - known
    if stray:
        raise ValidationError(f"unknown config tables: {sorted(stray)}")
    return out


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    values = _load_config(getattr(args, "config", None))
    overrides = {
        "mu": args.mu,
        "K": args.K,
        "region": args.region,
        "n_anchors": args.n_anchors,
        "rel": args.rtol,
        "abs": args.atol,
        "delta": args.delta,
        "time_tie_tol": args.time_tie_tol,
        "feas_tol": args.feas_tol,
        "t_back_max": args.t_back_max,
        "max_bangs": args.max_bangs,
        "out_dir": args.out_dir,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    if "out_dir" not in values and os.environ.get("LCSYNC_OUT_DIR"):
        values["out_dir"] = os.environ["LCSYNC_OUT_DIR"]
    if isinstance(values.get("formats"), list):
        values["formats"] = tuple(values["formats"])
    if args.svg and "svg" not in values.get("formats", ("csv", "json")):
        values["formats"] = tuple(values.get("formats", ("csv", "json"))) + ("svg",)
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ValidationError(f"bad configuration value: {e}")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Serialisation helpers


def _py(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays for deterministic JSON."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    return obj


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _header_lines(sub: str, cfg: RunConfig) -> str:
    return (
        f"# lcsync {sub}\n"
        f"# config_hash: {cfg.config_hash}\n"
        f"# tolerances: {cfg.tolerances_line}\n"
    )


def _write_csv(
    path: Path, sub: str, cfg: RunConfig, columns: Sequence[str], rows: Sequence[Sequence[Any]]
) -> None:
    buf = io.StringIO()
    buf.write(_header_lines(sub, cfg))
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    _atomic_write(path, buf.getvalue().encode())


def _write_json(path: Path, sub: str, cfg: RunConfig, payload: dict) -> None:
    doc = {
        "meta": {
            "subcommand": sub,
            "config_hash": cfg.config_hash,
            "tolerances": {k: getattr(cfg, k) for k in _TOL_KEYS},
        }
    }
    doc.update(_py(payload))
    _atomic_write(path, (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode())


def _write_svg(path: Path, sub: str, cfg: RunConfig, fig) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    text = buf.getvalue().decode()
    nl = text.index("\n") + 1
    comment = f"<!-- lcsync {sub} config_hash={cfg.config_hash} tolerances: {cfg.tolerances_line} -->\n"
    _atomic_write(path, (text[:nl] + comment + text[nl:]).encode())


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_RED = "#c8102e"  # +K arcs
_BLUE = "#0057b7"  # -K arcs


# ---------------------------------------------------------------------------
# Shared construction


def _make_system(cfg: RunConfig):
    sys = van_der_pol(cfg.mu)
    _LOG.info("locating limit cycle (mu=%g)", cfg.mu)
    lc = find_limit_cycle(sys)
    return sys, lc


def _make_field(cfg: RunConfig, sys, lc, region: "str | None" = None, K: "float | None" = None):
    region = region or cfg.region
    _LOG.info("building %s field at K=%g with %d anchors", region, K or cfg.K, cfg.n_anchors)
    return build_field(
        sys,
        lc,
        K if K is not None else cfg.K,
        region=region,
        n_anchors=cfg.n_anchors,
        t_back_max=cfg.t_back_max,
        max_bangs=cfg.max_bangs,
        rtol=cfg.rel,
        atol=cfg.abs,
    )


def _arc_rows(traj_id: int, traj) -> list[tuple]:
    rows = []
    for arc_id, arc in enumerate(traj.arcs):
        F = arc.sign * traj.schedule.K
        for t, z in zip(arc.ts, arc.zs):
            rows.append((traj_id, arc_id, t, z[0], z[1], z[2], z[3], F))
    return rows


def _schedule_payload(traj) -> dict:
    return {
        "t_f": traj.schedule.t_f,
        "switches": list(traj.schedule.switches),
        "first_sign": traj.schedule.first_sign,
        "signs": list(traj.schedule.signs()),
        "K": traj.schedule.K,
    }


def _states_payload(times: Sequence[float], states) -> list[dict]:
    return [
        {"t": t, "x1": st.x.x1, "x2": st.x.x2, "p1": st.p1, "p2": st.p2}
        for t, st in zip(times, states)
    ]


# ---------------------------------------------------------------------------
# Subcommand runners (each returns the stdout summary dict)


def _run_limit_cycle(cfg: RunConfig, args: argparse.Namespace) -> dict:
    sys, lc = _make_system(cfg)
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "limit_cycle.csv"
        rows = [(t, xy[0], xy[1]) for t, xy in zip(lc.ts, lc.samples)]
        _write_csv(p, "limit-cycle", cfg, ("t", "x1", "x2"), rows)
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "limit_cycle.json"
        _write_json(
            p,
            "limit-cycle",
            cfg,
            {
                "mu": lc.mu,
                "period": lc.period,
                "x_max": lc.x_max,
                "n_samples": lc.n_samples,
                "contraction": lc.contraction,
                "kappa": lc.kappa,
                "resolution": lc.resolution,
            },
        )
        outputs.append(str(p))
    if "svg" in cfg.formats:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(lc.samples[:, 0], lc.samples[:, 1], "k-", lw=1.2, label="limit cycle")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.legend(loc="upper right", fontsize=8)
        ax.set_title(f"limit cycle, mu={cfg.mu:g}")
        p = out / "limit_cycle.svg"
        _write_svg(p, "limit-cycle", cfg, fig)
        plt.close(fig)
        outputs.append(str(p))
    return {"x_max": lc.x_max, "period": lc.period, "outputs": outputs}


def _run_extremal(cfg: RunConfig, args: argparse.Namespace) -> dict:
    sys, lc = _make_system(cfg)
    kw = dict(
        t_back_max=cfg.t_back_max,
        max_bangs=cfg.max_bangs,
        rtol=cfg.rel,
        atol=cfg.abs,
        t_tol=cfg.integrate_t_tol,
    )
    if args.side is not None:
        if cfg.region != "exterior":
            raise ValidationError(
                "--side selects the exterior critical branches; for the "
                "interior criticals rewind from --anchor-angle 0.0 or 0.5 "
                "with --region interior"
            )
        traj = critical_trajectory(sys, lc, args.side, cfg.K, **kw)
    else:
        theta = args.anchor_angle
        if theta is None:
            raise ValidationError("either --anchor-angle or --side is required")
        xf = lc.anchor_at(theta)
        signs = final_bang_sign(sys, lc, xf, cfg.region, cfg.K)
        if not signs:
            raise ValidationError(
                f"no {cfg.region}-consistent final bang sign at theta={theta:g}"
            )
        sign = args.final_sign if args.final_sign is not None else signs[0]
        if sign not in signs:
            raise ValidationError(
                f"--final-sign {sign} is inconsistent with the final-point "
                f"condition at theta={theta:g} (allowed: {list(signs)})"
            )
        traj = rewind_extremal(
            sys, lc, xf, sign, cfg.K, region=cfg.region,
            record_axis_crossings=True, **kw,
        )
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "extremal_arcs.csv"
        _write_csv(
            p, "extremal", cfg,
            ("traj_id", "arc_id", "t", "x1", "x2", "p1", "p2", "F"),
            _arc_rows(0, traj),
        )
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "extremal.json"
        _write_json(
            p, "extremal", cfg,
            {
                "schedule": _schedule_payload(traj),
                "switch_states": _states_payload(traj.schedule.switches, traj.switch_states),
                "axis_crossings": _states_payload(
                    [t for t, _ in traj.axis_crossings],
                    [st for _, st in traj.axis_crossings],
                ),
                "p0": traj.p0,
                "kind": traj.kind,
                "termination": traj.termination,
                "anchor": {"x1": traj.anchor.x1, "x2": traj.anchor.x2},
            },
        )
        outputs.append(str(p))
    if "svg" in cfg.formats:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(lc.samples[:, 0], lc.samples[:, 1], "k-", lw=1.0, label="limit cycle")
        for arc in traj.arcs:
            ax.plot(arc.zs[:, 0], arc.zs[:, 1], color=_RED if arc.sign > 0 else _BLUE, lw=1.0)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(f"extremal, K={cfg.K:g} ({traj.kind})")
        p = out / "extremal.svg"
        _write_svg(p, "extremal", cfg, fig)
        plt.close(fig)
        outputs.append(str(p))
    return {
        "t_f": traj.schedule.t_f,
        "n_switches": len(traj.schedule.switches),
        "kind": traj.kind,
        "outputs": outputs,
    }


def _run_field(cfg: RunConfig, args: argparse.Namespace) -> dict:
    sys, lc = _make_system(cfg)
    field = _make_field(cfg, sys, lc)
    sp, sm = switching_curves(field)
    bc = None
    if cfg.region == "interior" and not args.no_bc:
        _LOG.info("tracing the coexistence curve")
        bc = coexistence_curve(field)
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "field_arcs.csv"
        rows: list[tuple] = []
        for ti, traj in enumerate(field.extremals):
            rows.extend(_arc_rows(ti, traj))
        _write_csv(
            p, "field", cfg,
            ("traj_id", "arc_id", "t", "x1", "x2", "p1", "p2", "F"),
            rows,
        )
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "field_curves.json"
        payload = {
            "K": field.K,
            "region": field.region,
            "n_extremals": len(field.extremals),
            "anchor_thetas": list(field.anchor_thetas),
            "S_plus": sp.tolist(),
            "S_minus": sm.tolist(),
            "pruned": [tr.kind for tr in field.pruned],
            "trajectories": [
                {
                    "traj_id": ti,
                    "kind": tr.kind,
                    "t_f": tr.schedule.t_f,
                    "n_switches": len(tr.schedule.switches),
                    "p0": tr.p0,
                }
                for ti, tr in enumerate(field.extremals)
            ],
        }
        if bc is not None:
            payload["B_c"] = bc.tolist()
        _write_json(p, "field", cfg, payload)
        outputs.append(str(p))
    if "svg" in cfg.formats:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(6, 5))
        ax.plot(lc.samples[:, 0], lc.samples[:, 1], "k-", lw=1.4, label="limit cycle")
        stride = max(1, len(field.extremals) // 48)
        for traj in field.extremals[::stride]:
            for arc in traj.arcs:
                ax.plot(
                    arc.zs[:, 0], arc.zs[:, 1],
                    color=_RED if arc.sign > 0 else _BLUE, lw=0.5, alpha=0.7,
                )
        if len(sp):
            ax.plot(sp[:, 0], sp[:, 1], color="#2e8b57", lw=1.5, ls="--", label="S+")
        if len(sm):
            ax.plot(sm[:, 0], sm[:, 1], color="#7b2e8b", lw=1.5, ls="--", label="S-")
        if bc is not None and len(bc):
            ax.plot(bc[:, 0], bc[:, 1], "o", color="#e07b00", ms=2.5, label="B_c")
        ax.plot([], [], color=_RED, lw=1, label="F=+K")
        ax.plot([], [], color=_BLUE, lw=1, label="F=-K")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(f"{cfg.region} field, K={cfg.K:g}")
        ax.legend(loc="upper right", fontsize=7)
        p = out / "field.svg"
        _write_svg(p, "field", cfg, fig)
        plt.close(fig)
        outputs.append(str(p))
    return {
        "n_extremals": len(field.extremals),
        "n_S_plus": len(sp),
        "n_S_minus": len(sm),
        "n_B_c": 0 if bc is None else len(bc),
        "outputs": outputs,
    }


def _phase_row_worker(payload: tuple) -> tuple:
    (mu, K, x10s, n_anchors, t_back_max, max_bangs) = payload
    sys = van_der_pol(mu)
    lc = find_limit_cycle(sys)
    pdd = phase_diagram(
        sys, lc, np.array([K]), np.asarray(x10s),
        n_anchors=n_anchors, t_back_max=t_back_max, max_bangs=max_bangs,
    )
    curves = {f"{r}:{n}": pts for (r, n), pts in pdd.critical_curves.items()}
    return K, pdd.bang_counts[0].tolist(), curves, pdd.missing


def _run_phase_diagram(cfg: RunConfig, args: argparse.Namespace) -> dict:
    K_grid = np.linspace(args.K_min, args.K_max, args.K_count)
    x10_grid = np.linspace(args.x10_min, args.x_max, args.x10_count)
    if cfg.jobs > 1:
        _LOG.info("phase diagram rows across %d workers", cfg.jobs)
        jobs = [
            (cfg.mu, float(K), [float(v) for v in x10_grid],
             cfg.n_anchors, cfg.t_back_max, cfg.max_bangs)
            for K in K_grid
        ]
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = list(ex.map(_phase_row_worker, jobs))
        results.sort(key=lambda r: r[0])
        counts = np.array([r[1] for r in results])
        curves: dict[tuple[str, int], list] = {}
        missing: list = []
        for _, _, cur, miss in results:
            for key, pts in cur.items():
                region, n = key.split(":")
                curves.setdefault((region, int(n)), []).extend(pts)
            missing.extend(miss)
    else:
        sys, lc = _make_system(cfg)
        pdd = phase_diagram(
            sys, lc, K_grid, x10_grid,
            n_anchors=cfg.n_anchors, t_back_max=cfg.t_back_max, max_bangs=cfg.max_bangs,
        )
        counts = pdd.bang_counts
        curves = pdd.critical_curves
        missing = pdd.missing
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "phase_diagram.csv"
        rows = [
            (K_grid[i], x10_grid[j], int(counts[i, j]))
            for i in range(len(K_grid))
            for j in range(len(x10_grid))
        ]
        _write_csv(p, "phase-diagram", cfg, ("K", "x10", "bangs"), rows)
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "phase_diagram.json"
        _write_json(
            p, "phase-diagram", cfg,
            {
                "K_grid": K_grid.tolist(),
                "x10_grid": x10_grid.tolist(),
                "critical_curves": {
                    f"{region}:{n}": [[K, x] for K, x in pts]
                    for (region, n), pts in sorted(curves.items())
                },
                "missing": [
                    {"K_index": i, "x10_index": j, "reason": reason}
                    for i, j, reason in missing
                ],
            },
        )
        outputs.append(str(p))
    if "svg" in cfg.formats:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(6, 4.5))
        mesh = ax.pcolormesh(
            x10_grid, K_grid, counts, cmap="viridis", shading="nearest",
            vmin=0, vmax=max(1, counts.max()),
        )
        fig.colorbar(mesh, ax=ax, label="optimal bang count")
        for (region, n), pts in sorted(curves.items()):
            if not pts:
                continue
            arr = np.array(sorted(pts))
            ax.plot(arr[:, 1], arr[:, 0], lw=1.2, label=f"{region} n={n}")
        ax.set_xlabel("x10")
        ax.set_ylabel("K")
        ax.set_title("optimal bang count on the x1-axis")
        ax.legend(loc="upper right", fontsize=6)
        p = out / "phase_diagram.svg"
        _write_svg(p, "phase-diagram", cfg, fig)
        plt.close(fig)
        outputs.append(str(p))
    return {
        "shape": [len(K_grid), len(x10_grid)],
        "max_bangs_seen": int(counts.max()),
        "n_missing": len(missing),
        "outputs": outputs,
    }


def _parse_k_grid(spec: str) -> np.ndarray:
    """Accepts 'lo:hi:count' or a comma-separated list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad K grid {spec!r}; use lo:hi:count or a comma list")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 2 or not (0 < lo < hi):
            raise ValidationError(f"bad K grid {spec!r}")
        return np.linspace(lo, hi, count)
    try:
        vals = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise ValidationError(f"bad K grid {spec!r}")
    if len(vals) < 2 or np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
        raise ValidationError(f"K grid must be increasing and positive, got {spec!r}")
    return vals


def _parse_point(spec: str) -> tuple[float, float]:
    try:
        a, b = spec.split(",")
        return float(a), float(b)
    except ValueError:
        raise ValidationError(f"bad point {spec!r}; use 'x1,x2'")


def _run_min_time(cfg: RunConfig, args: argparse.Namespace) -> dict:
    x0 = _parse_point(args.x0)
    K_grid = _parse_k_grid(args.K_grid)
    sys, lc = _make_system(cfg)
    _LOG.info("minimum-time curve for (%g, %g) over %d force levels", *x0, len(K_grid))
    mtc = min_time_curve(
        sys, lc, x0, K_grid,
        n_anchors=cfg.n_anchors, t_back_max=cfg.t_back_max, max_bangs=cfg.max_bangs,
    )
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "min_time.csv"
        rows = list(zip(mtc.Ks, mtc.t_fs, [int(b) for b in mtc.bangs]))
        _write_csv(p, "min-time", cfg, ("K", "t_f", "bangs"), rows)
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "min_time.json"
        _write_json(
            p, "min-time", cfg,
            {
                "x0": list(x0),
                "region": mtc.region,
                "kinks": list(mtc.kinks),
                "slope_jumps": list(mtc.slope_jumps),
            },
        )
        outputs.append(str(p))
    if "svg" in cfg.formats:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5.5, 4))
        ax.plot(mtc.Ks, mtc.t_fs, "k.-", lw=1.0, ms=3)
        for kk in mtc.kinks:
            ax.axvline(kk, color=_RED, lw=0.8, ls=":")
        ax.set_xlabel("K")
        ax.set_ylabel("minimum time")
        ax.set_title(f"minimum time from ({x0[0]:g}, {x0[1]:g})")
        p = out / "min_time.svg"
        _write_svg(p, "min-time", cfg, fig)
        plt.close(fig)
        outputs.append(str(p))
    return {
        "region": mtc.region,
        "t_f_first": float(mtc.t_fs[0]),
        "t_f_last": float(mtc.t_fs[-1]),
        "kinks": [float(k) for k in mtc.kinks],
        "outputs": outputs,
    }


def _run_critical_k(cfg: RunConfig, args: argparse.Namespace) -> dict:
    sys, lc = _make_system(cfg)
    bracket = (args.K_lo, args.K_hi)
    _LOG.info("bisecting critical level n=%d in (%g, %g)", args.n, *bracket)
    Kc = critical_K(
        sys, lc, args.n, region=cfg.region, bracket=bracket, tol=args.tol,
        t_back_max=max(cfg.t_back_max, 80.0), max_bangs=max(cfg.max_bangs, 14),
    )
    out = Path(cfg.out_dir)
    outputs = []
    if "json" in cfg.formats:
        p = out / "critical_k.json"
        _write_json(
            p, "critical-k", cfg,
            {
                "n": args.n,
                "region": cfg.region,
                "K_c": Kc,
                "bracket": list(bracket),
                "tol": args.tol,
            },
        )
        outputs.append(str(p))
    return {"n": args.n, "region": cfg.region, "K_c": Kc, "outputs": outputs}


def _oracle_worker(payload: tuple) -> tuple:
    (idx, mu, K, pt, max_bangs, seed) = payload
    sys = van_der_pol(mu)
    lc = find_limit_cycle(sys)
    r = direct_min_time(sys, lc, pt, K, max_bangs=max_bangs, rng_seed=seed)
    return idx, r.t_f, r.n_bangs, r.miss


def _validate_points(cfg: RunConfig, lc, spec: str) -> list[tuple[float, float]]:
    if spec != "default":
        pts = []
        with open(spec) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or line.lower().startswith("x1"):
                    continue
                pts.append(_parse_point(line))
        if not pts:
            raise ValidationError(f"no points found in {spec}")
        return pts
    pts = [(5.0, 0.0), (1.0, 0.0)]
    rng = np.random.default_rng(cfg.seed)
    for scale_lo, scale_hi in ((1.1, 2.4), (0.15, 0.92)):
        for _ in range(6):
            a = lc.anchor_at(rng.uniform())
            r = rng.uniform(scale_lo, scale_hi)
            pts.append((r * a.x1, r * a.x2))
    return pts


def _run_validate(cfg: RunConfig, args: argparse.Namespace) -> dict:
    sys, lc = _make_system(cfg)
    pts = _validate_points(cfg, lc, args.points)
    regions = sorted({("exterior" if chi(lc, p) >= 0 else "interior") for p in pts})
    fields = {r: _make_field(cfg, sys, lc, region=r) for r in regions}
    field_answers = []
    for pt in pts:
        region = "exterior" if chi(lc, pt) >= 0 else "interior"
        ans = optimal_for_point(
            fields[region], pt,
            delta=cfg.delta if cfg.delta > 0 else None,
            refine=True, time_tie_tol=cfg.time_tie_tol,
        )
        field_answers.append((region, ans))
    jobs = [
        (i, cfg.mu, cfg.K, pts[i], len(ans.schedule.signs()) + 1, cfg.seed + i)
        for i, (_, ans) in enumerate(field_answers)
    ]
    _LOG.info("running the direct search on %d points", len(jobs))
    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            oracle_results = sorted(ex.map(_oracle_worker, jobs))
    else:
        oracle_results = [_oracle_worker(j) for j in jobs]
    rows = []
    n_agree = 0
    worst_gap = 0.0
    for (idx, t_o, n_o, miss), (region, ans) in zip(oracle_results, field_answers):
        pt = pts[idx]
        t_s = ans.t_f
        n_s = len(ans.schedule.signs())
        gap = abs(t_s - t_o) / max(t_o, 1e-12)
        agree = gap <= args.rel_gap_tol and n_s == n_o
        n_agree += agree
        worst_gap = max(worst_gap, gap)
        rows.append((pt[0], pt[1], cfg.K, region, t_s, t_o, gap, n_s, n_o, int(agree)))
    out = Path(cfg.out_dir)
    outputs = []
    if "csv" in cfg.formats:
        p = out / "validate.csv"
        _write_csv(
            p, "validate", cfg,
            ("x1", "x2", "K", "region", "t_field", "t_oracle", "rel_gap",
             "bangs_field", "bangs_oracle", "agree"),
            rows,
        )
        outputs.append(str(p))
    if "json" in cfg.formats:
        p = out / "validate.json"
        _write_json(
            p, "validate", cfg,
            {
                "n_points": len(pts),
                "n_agree": n_agree,
                "max_rel_gap": worst_gap,
                "rel_gap_tol": args.rel_gap_tol,
            },
        )
        outputs.append(str(p))
    summary = {
        "n_points": len(pts),
        "n_agree": n_agree,
        "max_rel_gap": worst_gap,
        "outputs": outputs,
    }
    if n_agree != len(pts):
        summary["status"] = "disagreement"
        summary["exit_code"] = EXIT_VALIDATION
    return summary


_RUNNERS = {
    "limit-cycle": _run_limit_cycle,
    "extremal": _run_extremal,
    "field": _run_field,
    "phase-diagram": _run_phase_diagram,
    "min-time": _run_min_time,
    "critical-k": _run_critical_k,
    "validate": _run_validate,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", help="TOML config file; flags override its values")
    g.add_argument("--mu", type=float, help="plant damping strength")
    g.add_argument("--K", type=float, help="force bound |F| <= K")
    g.add_argument("--region", choices=("exterior", "interior"))
    g.add_argument("--n-anchors", type=int, dest="n_anchors")
    g.add_argument("--rtol", type=float, help="integrator relative tolerance")
    g.add_argument("--atol", type=float, help="integrator absolute tolerance")
    g.add_argument("--delta", type=float, help="match radius; 0 = adaptive")
    g.add_argument("--time-tie-tol", type=float, dest="time_tie_tol")
    g.add_argument("--feas-tol", type=float, dest="feas_tol")
    g.add_argument("--t-back-max", type=float, dest="t_back_max")
    g.add_argument("--max-bangs", type=int, dest="max_bangs")
    g.add_argument("--seed", type=int, help="seed for randomised point sets")
    g.add_argument("--out-dir", dest="out_dir",
                   help="artifact directory (default: $LCSYNC_OUT_DIR or ./out)")
    g.add_argument("--svg", action="store_true", help="also emit SVG plots")
    g.add_argument("--jobs", type=int, help="parallel workers for sweeps")

    parser = argparse.ArgumentParser(
        prog="lcsync",
        description="Minimum-time bang-bang synchronisation to a Lienard limit cycle.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("limit-cycle", parents=[common],
                   help="locate the cycle; emit samples and summary")

    p = sub.add_parser("extremal", parents=[common],
                       help="rewind one extremal from a cycle anchor")
    p.add_argument("--anchor-angle", type=float, dest="anchor_angle",
                   help="anchor position as a time fraction along the cycle in [0, 1)")
    p.add_argument("--side", choices=("BLplus", "BRminus"),
                   help="exterior critical branch instead of a generic anchor")
    p.add_argument("--final-sign", type=int, choices=(-1, 1), dest="final_sign",
                   help="override the final bang sign (must satisfy the final-point condition)")

    p = sub.add_parser("field", parents=[common],
                       help="build the full backward field; emit arcs and curves")
    p.add_argument("--no-bc", action="store_true", dest="no_bc",
                   help="skip the interior coexistence curve")

    p = sub.add_parser("phase-diagram", parents=[common],
                       help="optimal bang counts over a (K, x10) grid")
    p.add_argument("--K-min", type=float, default=0.1, dest="K_min")
    p.add_argument("--K-max", type=float, default=2.0, dest="K_max")
    p.add_argument("--K-count", type=int, default=16, dest="K_count")
    p.add_argument("--x10-min", type=float, default=0.1, dest="x10_min")
    p.add_argument("--x-max", type=float, default=5.0, dest="x_max",
                   help="largest x10 on the grid")
    p.add_argument("--x10-count", type=int, default=21, dest="x10_count")

    p = sub.add_parser("min-time", parents=[common],
                       help="minimum time vs force bound for one start point")
    p.add_argument("--x0", required=True, help="start point 'x1,x2'")
    p.add_argument("--K-grid", required=True, dest="K_grid",
                   help="'lo:hi:count' or comma-separated increasing levels")

    p = sub.add_parser("critical-k", parents=[common],
                       help="bisect the force level where the critical extremal "
                            "gains its n-th axis crossing")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--K-lo", type=float, default=0.05, dest="K_lo")
    p.add_argument("--K-hi", type=float, default=2.0, dest="K_hi")
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("validate", parents=[common],
                       help="compare the field against the direct search point-by-point")
    p.add_argument("--points", default="default",
                   help="'default' or a CSV file of x1,x2 rows")
    p.add_argument("--rel-gap-tol", type=float, default=0.01, dest="rel_gap_tol")

    return parser


def main(argv: "Sequence[str] | None" = None) -> int:
    logging.basicConfig(stream=_sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except (ValidationError, DomainError) as e:
        print(json.dumps({"status": "config_error", "error": str(e)}, sort_keys=True))
        return EXIT_CONFIG
    try:
        summary = _RUNNERS[args.subcommand](cfg, args)
    except (ValidationError, DomainError) as e:
        print(json.dumps(
            {"status": "config_error", "error": str(e), "config_hash": cfg.config_hash},
            sort_keys=True,
        ))
        return EXIT_CONFIG
    except CoverageError as e:
        print(json.dumps(
            {"status": "coverage_error", "error": str(e), "config_hash": cfg.config_hash},
            sort_keys=True,
        ))
        return EXIT_COVERAGE
    except LcsyncError as e:
        print(json.dumps(
            {"status": "numerical_error", "error": str(e),
             "kind": type(e).__name__, "config_hash": cfg.config_hash},
            sort_keys=True,
        ))
        return EXIT_NUMERICAL
    code = summary.pop("exit_code", EXIT_OK)
    summary.setdefault("status", "ok")
    summary["subcommand"] = args.subcommand
    summary["config_hash"] = cfg.config_hash
    print(json.dumps(_py(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    _sys.exit(main())
