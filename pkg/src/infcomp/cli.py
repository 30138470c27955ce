"""Command-line front end.

Examples::

    infcomp solve --builtin U --s=-5 --z=1
    infcomp verify --builtin U --grid -8:-1,-2:2 --n 5x5 --tol 1e-9
    infcomp summability --builtin U
    infcomp asympt --z 1 --alpha=-1 --t 5,10,15,20
    infcomp compint --g "exp(s*z)" --z 1 --n 4096 --cutoff 40 --s 0
    infcomp sqrtop --s 0.25 --z 0.1 --depth 60
    infcomp builtin list

Exit codes: 0 success, 1 verification threshold missed, 2 domain or parse
error, 3 non-convergence or overflow, 64 usage error, 74 I/O error.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import asympt, compint, dsolve
from .composer import DomainSpec, LeftStrip, Rect, SDisk, ZDisk, summability_report
from .errors import DivisionNearZero, NonConvergent, OmegaError, Overflow
from .expr import evaluate, parse

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_DOMAIN = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64
EXIT_IO = 74

CSV_COLUMNS = ("s_re", "s_im", "val_re", "val_im", "residual", "n_terms", "flag")
COMMANDS = ("solve", "verify", "summability", "telescope", "asympt", "compint", "sqrtop",
            "builtin")
NMAX_ENV = "OMEGA_NMAX"


class UsageError(Exception):
    pass


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (NonConvergent, Overflow, DivisionNearZero)):
        return EXIT_NUMERIC
    return EXIT_DOMAIN


def parse_complex(text) -> complex:
    """Accept numbers, ``[re, im]`` pairs or constant expressions like ``-4+2i``."""
    if isinstance(text, (list, tuple)):
        return complex(float(text[0]), float(text[1]))
    if isinstance(text, (int, float, complex)):
        return complex(text)
    e = parse(str(text))
    return evaluate(e, 0, 0) if not _mentions_vars(e) else _bad_constant(text)


def _mentions_vars(e) -> bool:
    from .expr import free_vars
    return bool(free_vars(e))


def _bad_constant(text):
    raise UsageError(f"{text!r} is not a constant")


def _cx_json(c: Optional[complex]):
    return None if c is None else [c.real, c.imag]


# ---------------------------------------------------------------------------
# Run configuration

# policy keys as they appear in JSON configuration files
_POLICY_JSON = {"tol": "tol", "n_max": "nMax", "stall_window": "stallWindow"}

@dataclass
class RunConfig:
    command: str
    problem: Optional[str] = None
    z: Optional[complex] = None
    s_spec: dict = field(default_factory=lambda: {"kind": "point", "s": [0.0, 0.0]})
    policy: Optional[dict] = None
    output: dict = field(default_factory=lambda: {"path": None, "format": "csv"})
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        kind = self.s_spec.get("kind")
        if kind == "grid":
            if self.s_spec["nRe"] < 1 or self.s_spec["nIm"] < 1:
                raise UsageError("grid counts must be >= 1")
        elif kind not in ("point", "ray"):
            raise UsageError(f"unknown s specification {kind!r}")
        if self.output.get("format") not in ("csv", "json"):
            raise UsageError(f"unknown output format {self.output.get('format')!r}")

    def to_json(self) -> dict:
        policy = None if self.policy is None else {
            _POLICY_JSON[k]: v for k, v in self.policy.items()}
        return {"command": self.command, "problem": self.problem, "z": _cx_json(self.z),
                "sSpec": self.s_spec, "policy": policy, "output": self.output,
                "options": self.options}

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        if "config" in data:
            data = data["config"]
        z = data.get("z")
        policy = data.get("policy")
        if policy is not None:
            back = {v: k for k, v in _POLICY_JSON.items()}
            policy = {back.get(k, k): v for k, v in policy.items()}
        cfg = cls(command=data["command"], problem=data.get("problem"),
                  z=None if z is None else parse_complex(z),
                  s_spec=data.get("sSpec") or {"kind": "point", "s": [0.0, 0.0]},
                  policy=policy,
                  output=data.get("output") or {"path": None, "format": "csv"},
                  options=data.get("options") or {})
        cfg.validate()
        return cfg


def read_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_json(json.load(fh))


def s_points(spec: dict) -> list:
    """Sample points in output order; grids are row-major with Re outer, Im inner."""
    kind = spec["kind"]
    if kind == "point":
        return [parse_complex(spec["s"])]
    if kind == "ray":
        alpha = parse_complex(spec["alpha"])
        return [alpha * float(t) for t in spec["t"]]
    res = np.linspace(spec["reMin"], spec["reMax"], spec["nRe"])
    ims = np.linspace(spec["imMin"], spec["imMax"], spec["nIm"])
    return [complex(float(a), float(b)) for a in res for b in ims]


def resolve_problem(cfg: RunConfig) -> dsolve.ProblemSpec:
    if cfg.problem is None:
        raise UsageError("a problem is required (--builtin NAME or --f EXPR)")
    if cfg.problem in dsolve.builtin_names():
        p = dsolve.builtin(cfg.problem)
    else:
        p = dsolve.problem_from_text(cfg.problem)
    pol = p.policy
    if cfg.policy:
        pol = pol.replace(**{k: v for k, v in cfg.policy.items() if v is not None})
    env = os.environ.get(NMAX_ENV)
    if env:
        pol = pol.replace(n_max=int(env))
    return dsolve.ProblemSpec(p.f, p.name, p.z_domain, p.s_verified, p.singularities, pol,
                              p.default_z)


def _z_for(cfg: RunConfig, p: Optional[dsolve.ProblemSpec] = None) -> complex:
    if cfg.z is not None:
        return cfg.z
    return p.default_z if p is not None else 0j


# ---------------------------------------------------------------------------
# Per-point work

def _row(s, val, residual, n_terms, flag=""):
    # adding 0.0 turns negative zeros into positive ones
    return {"s_re": s.real + 0.0, "s_im": s.imag + 0.0,
            "val_re": val.real + 0.0, "val_im": val.imag + 0.0,
            "residual": residual, "n_terms": n_terms, "flag": flag}


def _failed_row(s, exc):
    nan = math.nan
    row = _row(s, complex(nan, nan), nan, 0, type(exc).__name__)
    row["error"] = str(exc)
    return row


def _point(cfg: RunConfig, s: complex) -> dict:
    try:
        return _point_unchecked(cfg, s)
    except OmegaError as exc:
        return _failed_row(s, exc)


def _flags(res) -> str:
    return "|".join(sorted(res.flags))


def _point_unchecked(cfg: RunConfig, s: complex) -> dict:
    cmd = cfg.command
    opts = cfg.options
    if cmd in ("solve", "verify"):
        p = resolve_problem(cfg)
        z = _z_for(cfg, p)
        res = dsolve.gamma_solve(p, s, z)
        lhs = dsolve.gamma_solve(p, s + 1, z).value
        residual = abs(lhs - evaluate(p.f, s, res.value))
        row = _row(s, res.value, residual, res.terms, _flags(res))
        row["err_estimate"] = res.err_estimate
        return row
    if cmd == "telescope":
        p = resolve_problem(cfg)
        z = _z_for(cfg, p)
        depth = int(opts.get("depth", 200))
        res = dsolve.gamma_solve(p, s, z)
        return _row(s, res.value, dsolve.telescoping_check(p, s, z, depth), depth, _flags(res))
    if cmd == "compint":
        spec = compint.CompIntSpec(opts.get("g", "exp(s*z)"), _z_for(cfg), int(opts.get("n", 4096)),
                                   float(opts.get("cutoff", 40)))
        mu = compint.comp_integral(spec, s)
        finer = compint.CompIntSpec(spec.g, spec.z, 2 * spec.n, spec.cutoff)
        return _row(s, mu, abs(compint.comp_integral(finer, s) - mu), spec.steps)
    if cmd == "sqrtop":
        k = opts.get("k", compint.SQRT_OPERATOR_K)
        depth = int(opts.get("depth", 60))
        z = _z_for(cfg)
        y = compint.sqrt_operator_solve(k, s, z, depth)
        y_root = compint.sqrt_operator_solve(k, cmath.sqrt(s), z, depth)
        return _row(s, y, abs(y_root - evaluate(k, s, y)), depth)
    raise UsageError(f"command {cmd!r} does not evaluate points")


def _point_star(args):
    return _point(*args)


def run_points(cfg: RunConfig, points: list, jobs: int = 1) -> list:
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_point_star, [(cfg, s) for s in points]))
    return [_point(cfg, s) for s in points]


# ---------------------------------------------------------------------------
# Output

def _num(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def format_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_num(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def format_json(rows: list, cfg: Optional[RunConfig] = None, extra: Optional[dict] = None) -> str:
    doc = {}
    if cfg is not None:
        doc["config"] = cfg.to_json()
    doc["rows"] = [{c: _json_safe(r[c]) for c in CSV_COLUMNS} for r in rows]
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def emit_grid(rows: list, fmt: str, path: Optional[str], cfg: Optional[RunConfig] = None,
              extra: Optional[dict] = None):
    """Write rows as CSV or JSON to ``path`` (stdout when ``path`` is None)."""
    if not rows:
        raise ValueError("no results to emit")
    text = format_csv(rows) if fmt == "csv" else format_json(rows, cfg, extra)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Commands that are not per-point

def _domain_from_options(cfg: RunConfig, p: dsolve.ProblemSpec) -> DomainSpec:
    opts = cfg.options
    dom = p.s_verified
    z_disk = dom.z_disk if dom is not None else ZDisk(_z_for(cfg, p), 0.5)
    region = dom.s_region if dom is not None else None
    if "zdisk" in opts:
        c, r = opts["zdisk"]
        z_disk = ZDisk(parse_complex(c), float(r))
    if "srect" in opts:
        region = Rect(*map(float, opts["srect"]))
    elif "sstrip" in opts:
        region = LeftStrip(*map(float, opts["sstrip"]))
    elif "sdisk" in opts:
        c, r = opts["sdisk"]
        region = SDisk(parse_complex(c), float(r))
    if region is None:
        raise UsageError("an s-region is required (--srect, --sstrip or --sdisk)")
    return DomainSpec(z_disk, region)


def _report_json(rep) -> dict:
    bc = rep.bound_constants
    return {"verdict": rep.verdict.value, "fittedRatio": _json_safe(rep.fitted_ratio),
            "tailEstimate": _json_safe(rep.tail_estimate),
            "boundConstants": {"A": bc.A, "delta": bc.delta, "rhoSmall": _json_safe(bc.rho_small),
                               "M": _json_safe(bc.M)},
            "terms": rep.terms, "rho": list(rep.rho), "warnings": list(rep.warnings)}


def _run_summability(cfg: RunConfig) -> int:
    p = resolve_problem(cfg)
    dom = _domain_from_options(cfg, p)
    rep = summability_report(p.f, dom, p.policy)
    text = json.dumps({"config": cfg.to_json(), "report": _report_json(rep)}, indent=2) + "\n"
    path = cfg.output.get("path")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"verdict: {rep.verdict.value}", file=sys.stderr)
    return EXIT_OK if rep.verdict != "Diverges" else EXIT_NUMERIC


def _run_asympt(cfg: RunConfig) -> int:
    p = resolve_problem(cfg)
    z = _z_for(cfg, p)
    spec = cfg.s_spec
    if spec["kind"] != "ray":
        raise UsageError("asympt needs a ray (--alpha and --t)")
    depth = int(cfg.options.get("depth", asympt.DEFAULT_DEPTH))
    samples = asympt.decay_profile(p, z, parse_complex(spec["alpha"]), spec["t"], depth)
    # val carries the asymptotic ratio, residual the gap |U(s) - z|
    rows = [_row(r.s, r.ratio, r.gap, depth) for r in samples]
    emit_grid(rows, cfg.output["format"], cfg.output.get("path"), cfg)
    return EXIT_OK


def _run_builtin_list() -> int:
    for name in dsolve.builtin_names():
        p = dsolve.builtin(name)
        print(f"{name}\t{p.f}\t{dsolve.BUILTIN_DESCRIPTIONS[name]}\t"
              f"z-domain {p.z_domain.describe()}\tsingularities {p.singularities.describe()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument handling

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_VALUE_OPTS = {"--s", "--z", "--grid", "--n", "--alpha", "--t", "--tol", "--nmax", "--stall",
               "--builtin", "--f", "--g", "--k", "--cutoff", "--depth", "--out", "--format",
               "--config", "--jobs", "--zdisk", "--srect", "--sstrip", "--sdisk"}


def _normalize(argv: list) -> list:
    """Glue option values that start with '-' (``--s -5``, ``--grid -8:-1,...``)."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_OPTS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="infcomp", description="Infinite-composition difference-equation solver")
    sub = parser.add_subparsers(dest="command")

    def common(sp, problem=True):
        if problem:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--builtin", help="builtin problem name (U, Q, P)")
            g.add_argument("--f", help="inline f(s, z)")
        sp.add_argument("--z", help="parameter z (complex constant)")
        sp.add_argument("--s", help="single point s")
        sp.add_argument("--grid", help="reMin:reMax,imMin:imMax")
        sp.add_argument("--n", help="grid counts NRExNIM (compint: subdivisions per unit)")
        sp.add_argument("--alpha", help="ray direction (unit modulus)")
        sp.add_argument("--t", help="comma-separated ray parameters")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--nmax", type=int)
        sp.add_argument("--stall", type=int)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", default="csv", choices=("csv", "json"))
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--jobs", type=int, default=1)

    for name in ("solve", "verify", "telescope", "asympt"):
        sp = sub.add_parser(name)
        common(sp)
        if name == "telescope":
            sp.add_argument("--depth", type=int, default=200)
        if name == "asympt":
            sp.add_argument("--depth", type=int, default=asympt.DEFAULT_DEPTH)
    sp = sub.add_parser("summability")
    common(sp)
    sp.add_argument("--zdisk", help="center,radius")
    sp.add_argument("--srect", help="reMin:reMax,imMin:imMax")
    sp.add_argument("--sstrip", help="reMax,imMin:imMax")
    sp.add_argument("--sdisk", help="center,radius")
    sp = sub.add_parser("compint")
    common(sp, problem=False)
    sp.add_argument("--g", default="exp(s*z)")
    sp.add_argument("--cutoff", type=float, default=40.0)
    sp = sub.add_parser("sqrtop")
    common(sp, problem=False)
    sp.add_argument("--k", default=compint.SQRT_OPERATOR_K)
    sp.add_argument("--depth", type=int, default=60)
    sp = sub.add_parser("builtin")
    sp.add_argument("action", choices=("list",))
    return parser


def _pair(text: str, sep: str = ":") -> tuple:
    parts = text.split(sep)
    if len(parts) != 2:
        raise UsageError(f"expected two values separated by {sep!r} in {text!r}")
    return float(parts[0]), float(parts[1])


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if getattr(ns, "config", None):
        cfg = read_config(ns.config)
        if ns.out:
            cfg.output["path"] = ns.out
        return cfg
    cmd = ns.command
    problem = getattr(ns, "builtin", None) or getattr(ns, "f", None)
    opts = {}
    if ns.s is not None:
        s_spec = {"kind": "point", "s": _cx_json(parse_complex(ns.s))}
    elif ns.grid is not None:
        try:
            re_part, im_part = ns.grid.split(",")
            nre, nim = (int(v) for v in (ns.n or "5x5").lower().split("x"))
        except ValueError:
            raise UsageError(f"bad grid specification {ns.grid!r} / {ns.n!r}") from None
        (r0, r1), (i0, i1) = _pair(re_part), _pair(im_part)
        s_spec = {"kind": "grid", "reMin": r0, "reMax": r1, "imMin": i0, "imMax": i1,
                  "nRe": nre, "nIm": nim}
    elif ns.alpha is not None:
        if ns.t is None:
            raise UsageError("--alpha needs --t")
        s_spec = {"kind": "ray", "alpha": _cx_json(parse_complex(ns.alpha)),
                  "t": [float(v) for v in ns.t.split(",")]}
    else:
        s_spec = {"kind": "point", "s": [0.0, 0.0]}
    if cmd == "compint":
        opts.update(g=ns.g, cutoff=ns.cutoff, n=int(ns.n) if ns.n else 4096)
    if cmd == "sqrtop":
        opts.update(k=ns.k, depth=ns.depth)
    if cmd in ("telescope", "asympt"):
        opts["depth"] = ns.depth
    if cmd == "verify":
        opts["threshold"] = ns.tol if ns.tol is not None else 1e-9
    if cmd == "summability":
        if ns.zdisk:
            c, r = ns.zdisk.split(",")
            opts["zdisk"] = [_cx_json(parse_complex(c)), float(r)]
        if ns.srect:
            re_part, im_part = ns.srect.split(",")
            opts["srect"] = [*_pair(re_part), *_pair(im_part)]
        if ns.sstrip:
            re_max, im_part = ns.sstrip.split(",")
            opts["sstrip"] = [float(re_max), *_pair(im_part)]
        if ns.sdisk:
            c, r = ns.sdisk.split(",")
            opts["sdisk"] = [_cx_json(parse_complex(c)), float(r)]
    policy = None
    tol = ns.tol if cmd != "verify" else None
    if tol is not None or ns.nmax is not None or ns.stall is not None:
        policy = {"tol": tol, "n_max": ns.nmax, "stall_window": ns.stall}
    cfg = RunConfig(command=cmd, problem=problem,
                    z=None if ns.z is None else parse_complex(ns.z), s_spec=s_spec,
                    policy=policy, output={"path": ns.out, "format": ns.format}, options=opts)
    cfg.validate()
    return cfg


def run_config(cfg: RunConfig, jobs: int = 1) -> int:
    cmd = cfg.command
    if cmd == "summability":
        return _run_summability(cfg)
    if cmd == "asympt":
        return _run_asympt(cfg)
    if cmd in ("solve", "verify", "telescope"):
        resolve_problem(cfg)  # fail early on bad problems
    points = s_points(cfg.s_spec)
    rows = run_points(cfg, points, jobs)
    fmt, path = cfg.output["format"], cfg.output.get("path")
    if cmd == "solve":
        for r in rows:
            if "err_estimate" in r:
                print(f"s = {complex(r['s_re'], r['s_im'])!r}  "
                      f"value = {complex(r['val_re'], r['val_im'])!r}  "
                      f"errEstimate = {r['err_estimate']:.3g}  terms = {r['n_terms']}  "
                      f"residual = {r['residual']:.3g}")
        if path is not None:
            emit_grid(rows, fmt, path, cfg)
    else:
        emit_grid(rows, fmt, path, cfg)
    return _finish(cfg, rows)


_BENIGN_FLAGS = {"", "NearSingularity", "Clamped"}
_NUMERIC_FLAGS = {"NonConvergent", "Overflow", "DivisionNearZero"}


def _finish(cfg: RunConfig, rows: list) -> int:
    worst = EXIT_OK
    for r in rows:
        flags = set(r["flag"].split("|"))
        if flags <= _BENIGN_FLAGS:
            continue
        detail = f": {r['error']}" if r.get("error") else ""
        print(f"{r['flag']} at s = {complex(r['s_re'], r['s_im'])}{detail}", file=sys.stderr)
        worst = max(worst, EXIT_NUMERIC if flags & _NUMERIC_FLAGS else EXIT_DOMAIN)
    if worst != EXIT_OK:
        return worst
    if cfg.command == "verify":
        threshold = float(cfg.options.get("threshold", 1e-9))
        bad = [r for r in rows if not r["residual"] < threshold]
        print(f"max residual {max(r['residual'] for r in rows):.3g} over {len(rows)} points "
              f"(threshold {threshold:g})", file=sys.stderr)
        if bad:
            return EXIT_THRESHOLD
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        ns = build_parser().parse_args(_normalize(argv))
        if ns.command is None:
            raise UsageError("a subcommand is required")
        if ns.command == "builtin":
            return _run_builtin_list()
        cfg = config_from_args(ns)
        return run_config(cfg, jobs=max(1, ns.jobs))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OmegaError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run_command(argv: list) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
