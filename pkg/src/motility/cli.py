"""Command-line interface: ``motility <command> [options]``.

Commands: steady, spectrum, bifurcate, tw, massvel, simulate, verify.
Exit codes: 0 success, 2 failed model hypothesis (steady), 1 any error or a
failed acceptance check (verify).

Configuration files use flat key paths::

    # comment
    preset = "fig2"
    params.gamma = 0.75
    [time]
    dt = 5e-4          # becomes time.dt

Values are numbers, true/false, quoted or bare strings, or lists ``[a, b]``.
The only environment variable read is LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("motility")

PRESETS = {
    "fig1": {"params.m0": 3.0, "params.zeta": 4.0, "params.gamma": 0.03, "tw.V": [0.0, 0.1, 0.2, 0.3]},
    "fig2": {"params.m0": 1.1, "params.zeta": 2.1, "params.gamma": 0.75, "massvel.n": 41},
}


class ConfigError(ValueError):
    pass


class HypothesisFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- config


def _parse_value(text: str, lineno: int):
    text = text.strip()
    if not text:
        raise ConfigError(f"line {lineno}: missing value")
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"line {lineno}: unterminated list")
        inner = text[1:-1].strip()
        return [] if not inner else [_parse_value(part, lineno) for part in inner.split(",")]
    if text[0] in "\"'":
        if len(text) < 2 or text[-1] != text[0]:
            raise ConfigError(f"line {lineno}: unterminated string")
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.+-]*", text):
        raise ConfigError(f"line {lineno}: cannot parse value {text!r}")
    return text


def _strip_comment(line: str) -> str:
    quote = None
    for i, c in enumerate(line):
        if quote:
            if c == quote:
                quote = None
        elif c in "\"'":
            quote = c
        elif c == "#":
            return line[:i]
    return line


def parse_config(text: str) -> dict:
    """Parse the flat key-path format into {"section.key": value}."""
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if not all(part.isidentifier() for part in section.split(".")):
                raise ConfigError(f"line {lineno}: bad section name {section!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key or not all(part.isidentifier() for part in key.split(".")):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        full = f"{section}.{key}" if section else key
        if full in out:
            raise ConfigError(f"line {lineno}: duplicate key {full!r}")
        out[full] = _parse_value(value, lineno)
    return out


def resolve_config(cfg: dict, preset: str | None = None) -> dict:
    """Preset values overlaid by explicit config entries."""
    name = preset or cfg.get("preset")
    merged = {}
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[name])
        merged["preset"] = name
    merged.update({k: v for k, v in cfg.items() if k != "preset"})
    return merged


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _num(cfg: dict, key: str, default=None) -> float:
    value = cfg.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def model_params(cfg: dict):
    """ModelParams and the anchor radius from the ``params.*`` keys."""
    from .geometry import ModelParams
    from .stability import compliant_params, critical_radius_fixed_density

    zeta = _num(cfg, "params.zeta", 2.1)
    gamma = _num(cfg, "params.gamma", 0.75)
    if "params.p_h" in cfg:
        p = ModelParams(zeta, gamma, _num(cfg, "params.p_h"), _num(cfg, "params.k_e", 0.0))
        return p, (_num(cfg, "params.R") if "params.R" in cfg else None)
    m0 = _num(cfg, "params.m0", 1.1)
    if "params.R" in cfg:
        R = _num(cfg, "params.R")
    elif zeta > m0:
        R = critical_radius_fixed_density(m0, zeta)
    else:
        raise HypothesisFailure(f"zeta>m0 failed: zeta={zeta:.6g}, m0={m0:.6g}; give params.R explicitly")
    if "params.k_e" in cfg:
        return ModelParams.with_density(m0, R, zeta, gamma, _num(cfg, "params.k_e")), R
    return compliant_params(m0, R, zeta, gamma, _num(cfg, "params.margin", 1.5)), R


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def json_text(obj) -> str:
    from .acceptance import _plain

    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _viridis(t: float) -> str:
    stops = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]
    t = min(1.0, max(0.0, float(t))) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    a, b = stops[i], stops[i + 1]
    f = t - i
    return "#%02x%02x%02x" % tuple(int(round(a[j] + f * (b[j] - a[j]))) for j in range(3))


class SvgPlot:
    """Minimal SVG: polylines, filled circles, axes box and an optional color legend."""

    def __init__(self, xlim, ylim, width=480, height=360, title="", xlabel="", ylabel="", equal=False):
        self.w, self.h = width, height
        self.margin = 50
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x1 = x0 + 1.0
        if y1 <= y0:
            y1 = y0 + 1.0
        if equal:
            span = max(x1 - x0, y1 - y0)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0, x1, y0, y1 = cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.items = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.legend = None

    def _xy(self, x, y):
        m = self.margin
        px = m + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (self.w - 2 * m)
        py = self.h - m - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (self.h - 2 * m)
        return px, py

    def polyline(self, x, y, color="#1f4e79", width=1.5, closed=False):
        pts = [self._xy(a, b) for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b)]
        if closed and pts:
            pts.append(pts[0])
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{coords}"/>')

    def circles(self, x, y, colors, r=2.0):
        for a, b, c in zip(x, y, colors):
            px, py = self._xy(a, b)
            self.items.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" fill="{c}"/>')

    def color_legend(self, vmin, vmax, label):
        self.legend = (vmin, vmax, label)

    def text(self) -> str:
        m = self.margin
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" font-family="sans-serif" font-size="11">',
               f'<rect x="{m}" y="{m}" width="{self.w - 2 * m}" height="{self.h - 2 * m}" fill="none" stroke="#444"/>',
               f'<text x="{self.w / 2:.0f}" y="{m / 2:.0f}" text-anchor="middle" font-size="13">{self.title}</text>',
               f'<text x="{self.w / 2:.0f}" y="{self.h - 12}" text-anchor="middle">{self.xlabel}</text>',
               f'<text x="14" y="{self.h / 2:.0f}" transform="rotate(-90 14 {self.h / 2:.0f})" text-anchor="middle">{self.ylabel}</text>',
               f'<text x="{m}" y="{self.h - m + 14}" text-anchor="middle">{_fmt(self.xlim[0])}</text>',
               f'<text x="{self.w - m}" y="{self.h - m + 14}" text-anchor="middle">{_fmt(self.xlim[1])}</text>',
               f'<text x="{m - 4}" y="{self.h - m}" text-anchor="end">{_fmt(self.ylim[0])}</text>',
               f'<text x="{m - 4}" y="{m + 4}" text-anchor="end">{_fmt(self.ylim[1])}</text>']
        out += self.items
        if self.legend is not None:
            vmin, vmax, label = self.legend
            x = self.w - m + 8
            for i in range(20):
                y = m + (19 - i) * (self.h - 2 * m) / 20
                out.append(f'<rect x="{x}" y="{y:.1f}" width="10" height="{(self.h - 2 * m) / 20 + 0.5:.1f}" fill="{_viridis(i / 19)}"/>')
            out.append(f'<text x="{x}" y="{m - 4}">{_fmt(vmax)}</text>')
            out.append(f'<text x="{x}" y="{self.h - m + 12}">{_fmt(vmin)}</text>')
            out.append(f'<text x="{x + 12}" y="{self.h / 2:.0f}">{label}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _limits(*arrays, pad=0.05):
    vals = np.concatenate([np.ravel(np.asarray(a, dtype=float)) for a in arrays])
    vals = vals[np.isfinite(vals)]
    lo, hi = float(np.min(vals)), float(np.max(vals))
    span = hi - lo if hi > lo else max(1.0, abs(hi))
    return lo - pad * span, hi + pad * span


class Output:
    """Writes artifacts to the output directory and keeps a manifest."""

    def __init__(self, out_dir: str, command: str, cfg: dict):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.files = []

    def write(self, name: str, text: str) -> None:
        (self.dir / name).write_text(text)
        self.files.append({"file": name, "sha256": hashlib.sha256(text.encode()).hexdigest(),
                           "config_hash": self.hash, "version": __version__})

    def finish(self) -> None:
        manifest = {"command": self.command, "version": __version__, "config_hash": self.hash, "config": self.cfg,
                    "files": sorted(self.files, key=lambda f: f["file"])}
        (self.dir / "manifest.json").write_text(json_text(manifest))


# ---------------------------------------------------------------- commands


def cmd_steady(cfg: dict, args, out: Output) -> int:
    from .stability import classify, radial_steady_state

    p, R = model_params(cfg)
    R = float(R)
    cl = classify(R, p)
    report = {"params": p.to_dict(), **cl.to_dict()}
    failed = cl.failed()
    if not failed:
        st = radial_steady_state(R, p)
        report.update({"phi0": st.phi0, "mass": st.mass, "residuals": st.residuals()})
    report["failed_hypotheses"] = failed
    if args.format == "csv":
        rows = [(k, v) for k, v in sorted(report.items()) if not isinstance(v, (dict, list))]
        rows += [(f"hypothesis.{h['name']}", h["passed"]) for h in report["hypotheses"]]
        out.write("steady.csv", csv_text(["key", "value"], rows))
    elif args.format == "svg":
        t = np.linspace(0, 2 * np.pi, 200)
        svg = SvgPlot((-R, R), (-R, R), title=f"resting disk R={R:.4g}: {cl.label}", equal=True)
        svg.polyline(R * np.cos(t), R * np.sin(t), closed=True)
        out.write("steady.svg", svg.text())
    out.write("report.json", json_text(report))
    print(json_text(report), end="")
    if failed:
        print(f"motility.stability: failed hypotheses: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def cmd_spectrum(cfg: dict, args, out: Output) -> int:
    from .stability import classify, full_spectrum, radial_steady_state

    p, R = model_params(cfg)
    R = float(R)
    n_r = int(cfg.get("spectrum.n_r", 32 if args.quick else 64))
    n_max = int(cfg.get("spectrum.n_max", 8))
    sp = full_spectrum(radial_steady_state(R, p), n_max=n_max, n_r=n_r, jobs=args.jobs)
    summary = {"R": R, "classification": classify(R, p).label, "zero_multiplicity": sp.zero_multiplicity,
               "zero_tol": sp.zero_tol, "scale": sp.scale, "max_re_nonzero": sp.max_real(exclude_zero=True),
               "extrapolated": {str(k): [[z.real, z.imag] for z in v] for k, v in sorted(sp.extrapolated.items())}}
    if args.format == "csv":
        out.write("spectrum.csv", sp.to_csv())
    elif args.format == "json":
        rows = [{"mode": int(n), "re": float(l.real), "im": float(l.imag), "residual": float(r)}
                for n, l, r in zip(sp.modes, sp.eigenvalues, sp.residuals)]
        out.write("spectrum.json", json_text({**summary, "eigenvalues": rows}))
    else:
        lead = []
        for n in range(n_max + 1):
            sel = sp.eigenvalues[sp.modes == n][:6]
            lead.append(sel)
        pts = np.concatenate(lead)
        svg = SvgPlot(_limits(pts.real), _limits(pts.imag, [-1, 1]), title="leading eigenvalues per mode",
                      xlabel="Re", ylabel="Im")
        for n, sel in enumerate(lead):
            svg.circles(sel.real, sel.imag, [_viridis(n / max(1, n_max))] * sel.size, r=3)
        svg.color_legend(0, n_max, "mode")
        out.write("spectrum.svg", svg.text())
    out.write("summary.json", json_text(summary))
    print(json_text(summary), end="")
    return 0


def cmd_bifurcate(cfg: dict, args, out: Output) -> int:
    from .bifurcation import f_of_r, find_bifurcation_radius, scan_sign_changes
    from .stability import phi1_slope

    p, R_anchor = model_params(cfg)
    R_min = _num(cfg, "bifurcate.R_min", 0.2)
    R_max = _num(cfg, "bifurcate.R_max", 6.0)
    roots = {}
    for printed in (False, True):
        br = scan_sign_changes(lambda R: f_of_r(R, p, printed), R_min, R_max, 600)
        roots["printed" if printed else "primary"] = [find_bifurcation_radius(p, b, printed).to_dict() for b in br]
    grid = np.linspace(R_min, R_max, 201)
    rows = []
    for R in grid:
        try:
            rows.append((R, f_of_r(R, p), f_of_r(R, p, True), phi1_slope(R, p.density(R), p.zeta) - 1.0))
        except ValueError:
            rows.append((R, math.nan, math.nan, math.nan))
    report = {"params": p.to_dict(), "anchor_R": R_anchor, "roots": roots}
    if cfg.get("preset") == "fig1":
        from .acceptance import FIG1_REFERENCE_R0

        report["reference_R0"] = FIG1_REFERENCE_R0
    if args.format == "csv":
        out.write("bifurcation.csv", csv_text(["R", "F", "F_printed", "phi1_slope_minus_1"], rows))
    elif args.format == "json":
        out.write("bifurcation.json", json_text({**report, "table": [list(r) for r in rows]}))
    else:
        a = np.array(rows, dtype=float)
        svg = SvgPlot((R_min, R_max), _limits(np.clip(a[:, 1], -5, 5), [0]), title="F(R)", xlabel="R", ylabel="F")
        svg.polyline(a[:, 0], np.clip(a[:, 1], -5, 5))
        svg.polyline([R_min, R_max], [0, 0], color="#999", width=0.8)
        out.write("bifurcation.svg", svg.text())
    out.write("report.json", json_text(report))
    print(json_text(report), end="")
    return 0


def _tw_setup(cfg: dict):
    from .bifurcation import tw_expand

    p, R0 = model_params(cfg)
    return tw_expand(float(R0), p)


def cmd_tw(cfg: dict, args, out: Output) -> int:
    from .bifurcation import tw_fields

    tw = _tw_setup(cfg)
    Vs = [float(v) for v in np.atleast_1d(cfg.get("tw.V", [0.0, 0.05, 0.1]))]
    n_r = int(cfg.get("tw.n_r", 16 if args.quick else 32))
    n_phi = int(cfg.get("tw.n_phi", 64 if args.quick else 128))
    summary = {"expansion": tw.to_dict(), "shapes": []}
    svg = None
    fields = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for V in Vs:
            fields.append(tw_fields(tw, V, n_r, n_phi))
    for w in caught:
        log.warning("%s", w.message)
    mmax = max(float(np.max(f.myosin.values)) for f in fields)
    mmin = min(float(np.min(f.myosin.values)) for f in fields)
    for f in fields:
        V = f.V
        phi = f.myosin.grid.phi
        bm = f.boundary_myosin()
        arg = float(phi[int(np.argmax(bm))])
        summary["shapes"].append({"V": V, "boundary_argmax_phi": arg, "rear_max": bool(V == 0 or abs(arg - math.pi) <= 0.2),
                                  "max_deformation": float(np.max(np.abs(f.shape.rho(phi)))),
                                  "coords": f.coords, "beyond_valid_range": bool(abs(V) > tw.valid_V)})
        if args.format == "csv":
            rows = [("boundary", x, y, m, u) for x, y, m, u in zip(f.x[-1], f.y[-1], bm, f.potential.values[-1])]
            rows += [("interior", x, y, m, u) for x, y, m, u in
                     zip(f.x[:-1].ravel(), f.y[:-1].ravel(), f.myosin.values[:-1].ravel(), f.potential.values[:-1].ravel())]
            out.write(f"tw_V{V:.3f}.csv", csv_text(["part", "x", "y", "myosin", "potential"], rows))
    if args.format == "svg":
        allx = np.concatenate([np.ravel(f.x) + 2.5 * tw.R0 * i for i, f in enumerate(fields)])
        ally = np.concatenate([np.ravel(f.y) for f in fields])
        svg = SvgPlot(_limits(allx), _limits(ally), width=260 * len(fields), height=300, equal=False,
                      title="traveling-wave shapes and myosin", xlabel="x (panels offset)", ylabel="y")
        for i, f in enumerate(fields):
            off = 2.5 * tw.R0 * i
            colors = [_viridis((v - mmin) / (mmax - mmin + 1e-300)) for v in f.myosin.values.ravel()]
            svg.circles(np.ravel(f.x) + off, np.ravel(f.y), colors, r=1.5)
            svg.polyline(np.append(f.x[-1], f.x[-1][0]) + off, np.append(f.y[-1], f.y[-1][0]), color="#000")
        svg.color_legend(mmin, mmax, "myosin")
        out.write("tw.svg", svg.text())
    if args.format == "json":
        for f, s in zip(fields, summary["shapes"]):
            s["boundary_x"] = f.x[-1].tolist()
            s["boundary_y"] = f.y[-1].tolist()
            s["boundary_myosin"] = f.boundary_myosin().tolist()
        out.write("tw.json", json_text(summary))
    out.write("summary.json", json_text({k: v for k, v in summary.items()}))
    print(json_text({"shapes": [{k: v for k, v in s.items() if not k.startswith("boundary_")} for s in summary["shapes"]]}), end="")
    return 0


def cmd_massvel(cfg: dict, args, out: Output) -> int:
    from .bifurcation import mass_vs_velocity

    tw = _tw_setup(cfg)
    V_max = _num(cfg, "massvel.V_max", tw.valid_V)
    n = int(cfg.get("massvel.n", 21 if args.quick else 41))
    curve = mass_vs_velocity(tw, np.linspace(0.0, V_max, n), jobs=args.jobs)
    s = curve.slopes()
    summary = {"R0": tw.R0, "valid_V": tw.valid_V, "critical_mass": curve.critical_mass,
               "turning_velocity": curve.turning_velocity(), "initial_slope_negative": bool(s[1] < 0),
               "monotone": bool(np.all(s <= 0) or np.all(s >= 0))}
    if args.format == "csv":
        out.write("massvel.csv", curve.to_csv())
    elif args.format == "json":
        out.write("massvel.json", json_text({**summary, "V": curve.velocities, "M": curve.masses,
                                             "M_truncated": curve.masses_truncated}))
    else:
        svg = SvgPlot(_limits(curve.masses), _limits(curve.velocities), title="velocity vs total myosin",
                      xlabel="M", ylabel="V")
        svg.polyline(curve.masses, curve.velocities)
        out.write("massvel.svg", svg.text())
    out.write("summary.json", json_text(summary))
    print(json_text(summary), end="")
    return 0


def _sim_config(cfg: dict):
    from .simulator import SimConfig

    keys = {}
    for k, v in cfg.items():
        section = k.split(".", 1)[0]
        if section in ("grid", "time", "init", "events", "solver"):
            keys[k] = v
    p, R = model_params(cfg)
    keys.setdefault("init.R", float(R))
    sim = SimConfig.from_dict(keys)
    return sim, p


def cmd_simulate(cfg: dict, args, out: Output) -> int:
    from .simulator import _initial, run, seed_reference, steady_reference

    sim, p = _sim_config(cfg)
    if args.quick:
        sim.t_end = min(sim.t_end, 20 * sim.dt)
    state, seed = _initial(sim, p)
    ref = seed_reference(seed) if seed is not None else steady_reference(p, state.mass(), state.shape.R)
    traj = run(sim, state=state, reference=ref)
    summary = {"event": traj.event, "message": traj.message, "t_final": traj.times[-1],
               "mass_rel_drift": abs(traj.mass[-1] - traj.mass[0]) / traj.mass[0],
               "deviation_initial": float(traj.deviation()[0]), "deviation_final": float(traj.deviation()[-1]),
               "Xc_final": traj.Xc[-1]}
    if args.format == "csv":
        out.write("trajectory.csv", traj.to_csv())
        out.write("final_myosin.csv", traj.states[-1].myosin.to_csv())
    elif args.format == "json":
        out.write("trajectory.json", json_text(traj.to_dict()))
    else:
        d = np.maximum(traj.deviation(), 1e-300)
        svg = SvgPlot(_limits(traj.times), _limits(np.log10(d)), title="deviation from reference",
                      xlabel="t", ylabel="log10 deviation")
        svg.polyline(traj.times, np.log10(d))
        out.write("trajectory.svg", svg.text())
    out.write("summary.json", json_text(summary))
    print(json_text(summary), end="")
    return 1 if traj.event not in ("t_end", "converged", "blowup") else 0


def cmd_verify(cfg: dict, args, out: Output) -> int:
    from .acceptance import run_checks

    results = run_checks(quick=args.quick, log=print)
    table = ["criterion  status  seconds  name"]
    table += [f"{r.key:9d}  {'PASS' if r.passed else 'FAIL':6s}  {r.seconds:7.1f}  {r.name}" for r in results]
    out.write("verify_summary.txt", "\n".join(table) + "\n")
    out.write("verify.json", json_text([r.to_dict() for r in results]))
    failed = [r.key for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


COMMANDS = {
    "steady": cmd_steady,
    "spectrum": cmd_spectrum,
    "bifurcate": cmd_bifurcate,
    "tw": cmd_tw,
    "massvel": cmd_massvel,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key-path config file")
    common.add_argument("--out", metavar="DIR", default="motility_out", help="output directory")
    common.add_argument("--format", choices=("csv", "json", "svg"), default="csv")
    common.add_argument("--jobs", type=int, default=1, metavar="N")
    common.add_argument("--quick", action="store_true", help="coarser grids and shorter runs")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
    parser = argparse.ArgumentParser(prog="motility", description=__doc__.split("\n")[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"motility {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(func.__doc__ or name).strip().split("\n")[0])
    return parser


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = parse_config(text)
    for item in args.set:
        extra = parse_config(item)
        if not extra:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.update(extra)
    return resolve_config(cfg, args.preset)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        out = Output(args.out, args.command, cfg)
        code = COMMANDS[args.command](cfg, args, out)
        out.finish()
        return code
    except ConfigError as exc:
        print(f"motility.cli: config error: {exc}", file=sys.stderr)
        return 1
    except HypothesisFailure as exc:
        print(f"motility.cli: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported with module-qualified message
        mod = type(exc).__module__
        print(f"{mod}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
