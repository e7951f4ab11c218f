"""Command-line entry point: analysis runs with machine-readable outputs.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 precondition
(e.g. system not semitoric).  JSON and CSV are the primary artifacts and
are byte-deterministic for a fixed (config, seed); SVG is derived and
never parsed back.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .critical import find_critical_points, is_semitoric
from .errors import NotSemitoricError, SemitoricError
from .fibration import bifurcation_diagram
from .invariants import semitoric_invariants
from .quantum import (hausdorff_distance, joint_spectrum, recover_polygon,
                      commutator_residual, build_operators)
from .svg import render_diagram, render_spectrum, render_weighted_polygon
from .systems import DEFAULT_TOL, builtin_names, builtin_system, load_system


@dataclass
class RunConfig:
    system: str = "spin-oscillator"
    window: tuple = (-2.0, 2.0, -1.5, 1.5)
    resolution: int = 40
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "out"
    formats: tuple = ("json", "csv", "svg")
    seed: int = 1234
    hbar: tuple = ()
    n_basis: int = 128
    cut_signs: tuple = None
    mc_samples: int = 200_000

    def validate(self):
        j0, j1, h0, h1 = self.window
        if not (j1 > j0 and h1 > h0):
            raise ValueError("window is empty or degenerate")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if any(h <= 0 for h in self.hbar):
            raise ValueError("hbar values must be positive")
        unknown = set(self.formats) - {"csv", "json", "svg"}
        if unknown:
            raise ValueError(f"unknown formats: {sorted(unknown)}")

    def hash(self):
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def metadata(self):
        return {"tool": "semitoric", "version": __version__,
                "config_hash": self.hash(), "seed": self.seed}


def _parse_window(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise ValueError("window needs x0,x1,y0,y1")
    return tuple(parts)


def _build_config(args):
    cfg = RunConfig()
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        fields = {f for f in RunConfig.__dataclass_fields__}
        bad = set(data) - fields
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        data = {k: tuple(v) if isinstance(v, list) else v
                for k, v in data.items()}
        cfg = replace(cfg, **data)
    overrides = {}
    if args.system is not None:
        overrides["system"] = args.system
    if args.window is not None:
        overrides["window"] = _parse_window(args.window)
    if args.resolution is not None:
        overrides["resolution"] = args.resolution
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.format:
        overrides["formats"] = tuple(args.format)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.hbar:
        overrides["hbar"] = tuple(args.hbar)
    if args.n_basis is not None:
        overrides["n_basis"] = args.n_basis
    if args.cut_signs is not None:
        overrides["cut_signs"] = tuple(
            int(s) for s in args.cut_signs.split(","))
    if args.mc_samples is not None:
        overrides["mc_samples"] = args.mc_samples
    if args.tol:
        tols = dict(cfg.tolerances)
        for item in args.tol:
            key, _, val = item.partition("=")
            if not val:
                raise ValueError(f"--tol expects KEY=VAL, got {item!r}")
            tols[key] = float(val)
        overrides["tolerances"] = tols
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_json(cfg, name, payload):
    payload = {"metadata": cfg.metadata(), **payload}
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1,
                  default=_json_default)
        fh.write("\n")
    return path


def _csv_header(cfg):
    meta = cfg.metadata()
    return (f"# semitoric {meta['version']} config={meta['config_hash']} "
            f"seed={meta['seed']}\n")


def _emit_error(exc, code):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                      "exit_code": code}, sort_keys=True))
    return code


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_systems_list(_cfg):
    rows = []
    for name in builtin_names():
        sys_ = builtin_system(name)
        rows.append((name, sys_.manifold.name,
                     "yes" if sys_.j_is_proper else "no", sys_.notes))
    widths = [max(len(r[k]) for r in rows + [("system", "manifold",
                                              "J proper", "notes")])
              for k in range(4)]
    header = ("system", "manifold", "J proper", "notes")
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return 0


def _load(cfg):
    try:
        return load_system(cfg.system)
    except (KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot load system {cfg.system!r}: {exc}")


def cmd_analyze(cfg):
    system = _load(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    records = find_critical_points(system, region=cfg.window,
                                   grid=max(8, cfg.resolution // 3),
                                   rng_seed=cfg.seed)
    diagram = bifurcation_diagram(system, cfg.window,
                                  resolution=cfg.resolution,
                                  records=records, rng_seed=cfg.seed)
    written = []
    if "json" in cfg.formats:
        written.append(_write_json(cfg, "critical_points.json", {
            "system": system.name,
            "window": list(cfg.window),
            "records": [r.to_dict() for r in records],
            "focus_focus_values": [list(v)
                                   for v in diagram.focus_focus_values],
        }))
    if "csv" in cfg.formats:
        path = os.path.join(cfg.output_dir, "bifurcation.csv")
        with open(path, "w") as fh:
            fh.write(_csv_header(cfg))
            fh.write("kind,c1,c2\n")
            lower, upper = diagram.boundary
            for j, h in lower:
                fh.write(f"boundary_lower,{j:.12g},{h:.12g}\n")
            for j, h in upper:
                fh.write(f"boundary_upper,{j:.12g},{h:.12g}\n")
            for value, will, rank in diagram.critical_values:
                tag = "focus_focus" if will == (0, 0, 1) and rank == 0 \
                    else f"rank{rank}"
                fh.write(f"critical_{tag},{value[0]:.12g},{value[1]:.12g}\n")
            for j, h in diagram.regular_samples:
                fh.write(f"regular,{j:.12g},{h:.12g}\n")
        written.append(path)
    if "svg" in cfg.formats:
        path = os.path.join(cfg.output_dir, "bifurcation.svg")
        render_diagram(diagram, path)
        written.append(path)
    print(json.dumps({"written": written, "critical_points": len(records),
                      "m_f": diagram.m_f}, sort_keys=True))
    return 0


def cmd_invariants(cfg):
    system = _load(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    inv = semitoric_invariants(
        system, window=cfg.window, resolution=cfg.resolution,
        cut_signs=cfg.cut_signs, mc_samples=cfg.mc_samples, seed=cfg.seed)
    written = []
    if "json" in cfg.formats:
        payload = inv.to_dict()
        payload["ingredients_valid"] = inv.details["ingredients_valid"]
        payload["ingredient_reasons"] = inv.details["ingredient_reasons"]
        written.append(_write_json(cfg, "invariants.json",
                                   {"system": system.name, **payload}))
    if "svg" in cfg.formats:
        path = os.path.join(cfg.output_dir, "polygon.svg")
        render_weighted_polygon(inv.polygon_class[0], path)
        written.append(path)
    print(json.dumps({"written": written, "m_f": inv.m_f}, sort_keys=True))
    return 0


def cmd_spectrum(cfg):
    system = _load(cfg)
    if system.name != "spin-oscillator":
        raise ValueError(
            "spectrum command supports the spin-oscillator system")
    if not cfg.hbar:
        raise ValueError("give at least one --hbar value")
    os.makedirs(cfg.output_dir, exist_ok=True)
    window = (cfg.window[0], cfg.window[1], cfg.window[2], cfg.window[3])
    written = []
    report = []
    prev_hull = None
    for hb in cfg.hbar:
        spec = joint_spectrum(hbar=hb, n_basis=cfg.n_basis, window=window)
        rec = recover_polygon(spec)
        j_mat, h_mat, _ = build_operators(hbar=hb, n_basis=min(cfg.n_basis, 64))
        entry = {
            "hbar": hb,
            "points": len(spec.points),
            "columns": len(spec.columns),
            "column_counts_preserved":
                rec.column_counts_in == rec.column_counts_out,
            "commutator_residual": commutator_residual(j_mat, h_mat),
            "certification_drift": spec.certification,
        }
        if prev_hull is not None:
            entry["hull_distance_to_previous"] = hausdorff_distance(
                rec.hull, prev_hull)
        prev_hull = rec.hull
        report.append(entry)
        tag = f"{hb:.6g}".replace(".", "p")
        if "csv" in cfg.formats:
            path = os.path.join(cfg.output_dir, f"spectrum_{tag}.csv")
            with open(path, "w") as fh:
                fh.write(_csv_header(cfg))
                fh.write("lambda_J,lambda_H,column\n")
                for k, (lj, lh) in enumerate(spec.columns):
                    for val in lh:
                        fh.write(f"{lj:.12g},{val:.12g},{k}\n")
            written.append(path)
        if "json" in cfg.formats and rec.snapped is not None:
            written.append(_write_json(
                cfg, f"recovered_polygon_{tag}.json",
                {"hbar": hb, "polygon": rec.snapped.to_json_dict(),
                 "column_counts": rec.column_counts_in}))
        if "svg" in cfg.formats:
            path = os.path.join(cfg.output_dir, f"spectrum_{tag}.svg")
            render_spectrum(spec, rec, path)
            written.append(path)
    if "json" in cfg.formats:
        written.append(_write_json(cfg, "spectrum_report.json",
                                   {"system": system.name,
                                    "report": report}))
    print(json.dumps({"written": written,
                      "hbar_values": list(cfg.hbar)}, sort_keys=True))
    return 0


COMMANDS = {
    "systems-list": cmd_systems_list,
    "analyze": cmd_analyze,
    "invariants": cmd_invariants,
    "spectrum": cmd_spectrum,
}


def make_parser():
    parser = argparse.ArgumentParser(
        prog="semitoric",
        description="analysis of semitoric integrable systems")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--system", help="builtin name or descriptor path")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--window", help="x0,x1,y0,y1 in value space")
    parser.add_argument("--resolution", type=int)
    parser.add_argument("--hbar", type=float, action="append", default=[])
    parser.add_argument("--n-basis", type=int, dest="n_basis")
    parser.add_argument("--cut-signs", dest="cut_signs",
                        help="comma-separated +1/-1 per focus-focus value")
    parser.add_argument("--mc-samples", type=int, dest="mc_samples")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--format", action="append", default=[],
                        choices=["csv", "json", "svg"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tol", action="append", default=[],
                        metavar="KEY=VAL")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = _build_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        return _emit_error(exc, 2)
    try:
        return COMMANDS[args.command](cfg)
    except ValueError as exc:
        return _emit_error(exc, 2)
    except NotSemitoricError as exc:
        payload = {"error": "NotSemitoricError", "message": str(exc),
                   "certificate": exc.certificate, "exit_code": 4}
        print(json.dumps(payload, sort_keys=True, default=_json_default))
        return 4
    except SemitoricError as exc:
        return _emit_error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
