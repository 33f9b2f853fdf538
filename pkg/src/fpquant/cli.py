"""Command-line front end.

Subcommands: grid, mse-sweep, dotprod-mse, quantize, search, learn, verify.
Exit status is 0 on success, 1 when ``verify`` finds a mismatch (or a
learning run diverges) and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    Distribution,
    expected_mse,
    minmax_format,
    optimal_fp_format,
    optimal_int_format,
    parse_distribution,
    scalar_product_terms,
)
from .formats import MAX_ENUM_BITS, FpFormat, IntFormat, enumerate_grid, enumerate_int_grid, max_representable
from .learn import DEFAULT_LR_C, DEFAULT_LR_M, DivergenceError, LearnState, line_search_mse, sgd_learn
from .quantsim import QuantizerConfig, Tensor, empirical_mse, quantize, quantize_fp, quantize_fp_oracle
from .search import clip_fractions, grid_search_format
from .tensorio import TensorFileError, read_tensor, write_tensor

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PRNG = "PCG64"
DEFAULT_FORMATS = "INT8:auto,5M2E:auto,4M3E:auto,3M4E:auto,2M5E:auto"
FP8_FORMATS = "5M2E:auto,4M3E:auto,3M4E:auto,2M5E:auto"
VERIFY_FORMATS = ((5, 2), (4, 3), (3, 4), (2, 5))
VERIFY_BIASES = (4.0, 8.0, 16.0)


class UsageError(Exception):
    pass


def _g(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- formats

_FP_RE = re.compile(r"^(\d+)M(\d+)E(?::(?:b=(.+)|(auto)))?$", re.IGNORECASE)
_INT_RE = re.compile(r"^INT(\d+)(?::(?:s=(.+)|(auto)))?$", re.IGNORECASE)


@dataclass(frozen=True)
class FormatSpec:
    """Parsed format string; ``param`` is the bias (FP) or scale (INT), ``None`` for auto."""

    kind: str
    m: int
    e: int
    bits: int
    param: float | None
    text: str

    @property
    def auto(self) -> bool:
        return self.param is None

    @property
    def name(self) -> str:
        return f"INT{self.bits}" if self.kind == "int" else f"{self.m}M{self.e}E"

    def concrete(self):
        if self.auto:
            raise UsageError(f"{self.text}: 'auto' needs a distribution or tensor to optimise against")
        if self.kind == "int":
            return IntFormat(self.bits, self.param)
        return FpFormat(self.m, self.e, self.param)


def _real(s: str, what: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise UsageError(f"bad {what} {s!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"{what} must be finite")
    return v


def parse_format(text: str) -> FormatSpec:
    """``<m>M<e>E[:b=<real>|:auto]`` or ``INT<n>[:s=<real>|:auto]``.

    Without a suffix the bias is ``2**(e-1)`` and the scale is 1.
    """
    t = text.strip()
    mo = _FP_RE.match(t)
    if mo:
        m, e = int(mo.group(1)), int(mo.group(2))
        if e < 1:
            raise UsageError(f"{t}: need at least one exponent bit")
        if m + e + 1 > MAX_ENUM_BITS:
            raise UsageError(f"{t}: {m + e + 1} bits exceeds the {MAX_ENUM_BITS}-bit limit")
        if mo.group(4):
            param = None
        elif mo.group(3) is not None:
            param = _real(mo.group(3), "bias")
        else:
            param = float(2 ** (e - 1))
        return FormatSpec("fp", m, e, m + e + 1, param, t)
    mo = _INT_RE.match(t)
    if mo:
        n = int(mo.group(1))
        if not 2 <= n <= MAX_ENUM_BITS:
            raise UsageError(f"{t}: integer width must be in 2..{MAX_ENUM_BITS}")
        if mo.group(3):
            param = None
        elif mo.group(2) is not None:
            param = _real(mo.group(2), "scale")
            if param <= 0:
                raise UsageError(f"{t}: scale must be positive")
        else:
            param = 1.0
        return FormatSpec("int", 0, 0, n, param, t)
    raise UsageError(f"cannot parse format {text!r}; expected e.g. 4M3E, 4M3E:b=8, 4M3E:auto, INT8:s=0.1")


def parse_format_list(text) -> list[FormatSpec]:
    items = text if isinstance(text, list) else str(text).split(",")
    out = [parse_format(s) for s in items if str(s).strip()]
    if not out:
        raise UsageError("empty format list")
    return out


def _dist(text: str) -> Distribution:
    try:
        return parse_distribution(text)
    except ValueError as exc:
        raise UsageError(f"distribution {text!r}: {exc}") from None


def _with_range(d: Distribution, r: float) -> Distribution:
    """Same family, clip range replaced by ``[-r, r]``."""
    return replace(d, lo=-r, hi=r)


# ---------------------------------------------------------------- analytic cells


def _resolve(spec: FormatSpec, d: Distribution, minmax: bool):
    """Concrete format plus grid, optimised for ``d`` when requested."""
    if minmax:
        res = minmax_format(spec.bits if spec.kind == "int" else (spec.m, spec.e), d)
        f = res.format
    elif spec.auto:
        res = optimal_int_format(spec.bits, d) if spec.kind == "int" else optimal_fp_format(spec.m, spec.e, d)
        f = res.format
    else:
        f = spec.concrete()
    grid = enumerate_int_grid(f) if isinstance(f, IntFormat) else enumerate_grid(f)
    return f, grid


def _param_of(f) -> float:
    return f.scale if isinstance(f, IntFormat) else f.bias


def _sweep_cell(job):
    spec, d, minmax = job
    f, grid = _resolve(spec, d, minmax)
    err = expected_mse(grid, d)
    m2 = d.second_moment()
    sq = math.inf if err.total <= 0 else 10.0 * math.log10(m2 / err.total)
    return [
        spec.name,
        _g(_param_of(f)),
        d.label,
        d.params,
        f"{_g(d.lo)}:{_g(d.hi)}",
        _g(err.rounding),
        _g(err.clipping),
        _g(err.total),
        _g(sq),
    ]


def _run_jobs(fn, jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            return list(ex.map(fn, jobs))  # map preserves input order
    return [fn(j) for j in jobs]


SWEEP_HEADER = ["format", "bias", "distribution", "param", "range", "E_round", "E_clip", "mse", "sqnr_db"]
DOTPROD_HEADER = ["w_format", "w_bias", "x_format", "x_bias", "full", "approx", "rel_gap", "sqnr_db"]


def _write_rows(header, rows, output):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _emit(buf.getvalue(), output)


def _emit(text: str, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_grid(a) -> int:
    spec = parse_format(a.format)
    f = spec.concrete()
    grid = enumerate_int_grid(f) if isinstance(f, IntFormat) else enumerate_grid(f)
    _emit(grid.to_csv(), a.output)
    return EXIT_OK


def cmd_mse_sweep(a) -> int:
    specs = parse_format_list(a.formats)
    dists = [_dist(s) for s in (a.dist or ["gauss:mu=0,sigma=1,lo=-8,hi=8"])]
    if a.ranges:
        dists = [_with_range(d, float(r)) for d in dists for r in a.ranges]
    jobs = [(s, d, a.minmax) for d in dists for s in specs]
    _write_rows(SWEEP_HEADER, _run_jobs(_sweep_cell, jobs, a.jobs), a.output)
    return EXIT_OK


def _dot_cell(job):
    (fw, gw), dw, (fx, gx), dx = job
    t = scalar_product_terms(gw, dw, gx, dx)
    full, approx = t.full, t.approx
    gap = abs(approx - full) / abs(full) if full != 0 else math.inf
    sq = math.inf if full <= 0 else 10.0 * math.log10(t.m_w * t.m_x / full)
    return [fw.name, _g(_param_of(fw)), fx.name, _g(_param_of(fx)), _g(full), _g(approx), _g(gap), _g(sq)]


def cmd_dotprod_mse(a) -> int:
    dw, dx = _dist(a.w_dist), _dist(a.x_dist)
    wspecs = parse_format_list(a.w_formats or a.formats)
    xspecs = parse_format_list(a.x_formats or a.formats)
    ws = [_resolve(s, dw, False) for s in wspecs]
    xs = [_resolve(s, dx, False) for s in xspecs]
    jobs = [(w, dw, x, dx) for w in ws for x in xs]
    rows = _run_jobs(_dot_cell, jobs, a.jobs)
    _write_rows(DOTPROD_HEADER, rows, a.output)
    best = min(rows, key=lambda r: float(r[4]))
    print(f"argmin full: W={best[0]} X={best[2]} mse={best[4]}", file=sys.stderr)
    return EXIT_OK


def _load(path) -> Tensor:
    try:
        return read_tensor(path)
    except TensorFileError as exc:
        raise UsageError(str(exc)) from None


def _tensor_auto(spec: FormatSpec, t: Tensor):
    """Best clipping value on the 111-point grid for a fixed format."""
    arr = t.data
    amax = float(np.max(np.abs(arr)))
    if amax == 0.0:
        return IntFormat(spec.bits) if spec.kind == "int" else FpFormat.standard(spec.m, spec.e)
    best = None
    for c in clip_fractions() * amax:
        if spec.kind == "int":
            f = IntFormat(spec.bits, c / (2 ** (spec.bits - 1) - 1))
        else:
            f = FpFormat.from_max(c, spec.m, spec.e)
        mse = empirical_mse(arr, quantize(arr, f))
        if best is None or mse < best[0]:
            best = (mse, f)
    return best[1]


def _fmt_json(f) -> dict:
    if isinstance(f, IntFormat):
        return {"format": f.name, "scale": f.scale, "clip": f.scale * f.qmax}
    return {"format": f.name, "m": f.m, "e": f.e, "bias": f.bias, "clip": max_representable(f)}


def cmd_quantize(a) -> int:
    t = _load(a.input)
    report: dict = {}
    if a.search:
        res = grid_search_format(t, per_channel=a.per_channel)
        report["search"] = res.to_json()
        if res.per_channel:
            base = FpFormat.standard(res.m, res.e)
            cfg = QuantizerConfig(base, per_channel=True, channel_params=res.biases(), channel_axis=t.channel_axis)
            report["format"] = base.name
            report["bias_per_channel"] = [float(b) for b in res.biases()]
        else:
            cfg = res.format()
            report.update(_fmt_json(cfg))
    else:
        if not a.format:
            raise UsageError("quantize needs --format or --search")
        spec = parse_format(a.format)
        cfg = _tensor_auto(spec, t) if spec.auto else spec.concrete()
        report.update(_fmt_json(cfg))
    q = quantize(t, cfg)
    mse = empirical_mse(t, q)
    sig = float(np.mean(t.data**2))
    report["mse"] = mse
    # JSON has no infinity: an exact reconstruction reports null
    report["sqnr_db"] = 10.0 * math.log10(sig / mse) if mse > 0 and sig > 0 else None
    if a.output:
        write_tensor(a.output, q)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", a.report)
    return EXIT_OK


def cmd_search(a) -> int:
    t = _load(a.input)
    res = grid_search_format(t, per_channel=a.per_channel)
    _emit(json.dumps(res.to_json(), indent=2, sort_keys=True) + "\n", a.output)
    return EXIT_OK


def cmd_learn(a) -> int:
    spec = parse_format(a.init)
    if spec.kind != "fp" or spec.auto:
        raise UsageError("--init must be an FP format with a bias, e.g. 3M4E:b=8")
    try:
        init = LearnState.from_format(spec.m, spec.e, spec.param)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if a.samples < 1 or a.iters < 1:
        raise UsageError("--samples and --iters must be >= 1")
    rng = np.random.Generator(np.random.PCG64(a.seed))
    x = rng.standard_normal(a.samples)
    meta = {
        "prng": PRNG,
        "seed": a.seed,
        "samples": a.samples,
        "distribution": "gauss:mu=0,sigma=1",
        "init": {"c": init.c, "m": init.m, "format": spec.name, "bias": spec.param},
        "lr_c": a.lr_c,
        "lr_m": a.lr_m,
        "iters": a.iters,
    }
    status = EXIT_OK
    try:
        traj = sgd_learn(x, init, a.lr_c, a.lr_m, a.iters)
        meta["final"] = {"c": traj.final.c, "m": traj.final.m, "round_m": traj.final.m_int}
        _emit(traj.to_csv(), a.output)
    except DivergenceError as exc:
        meta["diverged"] = str(exc)
        print(f"diverged: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    if a.line_search:
        m, c, mse = line_search_mse(x)
        meta["line_search"] = {"m": m, "c": c, "mse": mse}
    if a.meta:
        Path(a.meta).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return status


def _verify_inputs(f: FpFormat, rng: np.random.Generator, n: int) -> np.ndarray:
    """Random magnitudes log-uniform from below the smallest subnormal to past ``c``,
    plus every rounding midpoint and its two float neighbours."""
    grid = enumerate_grid(f).values
    pos = grid[grid > 0]
    lo, hi = math.log2(pos[0]) - 2.0, math.log2(pos[-1]) + 1.0
    mag = np.exp2(rng.uniform(lo, hi, n))
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    mid = 0.5 * (grid[:-1] + grid[1:])
    extra = np.concatenate([mid, np.nextafter(mid, -np.inf), np.nextafter(mid, np.inf), grid, [0.0]])
    return np.concatenate([sign * mag, extra])


def cmd_verify(a) -> int:
    rng = np.random.Generator(np.random.PCG64(a.seed))
    lines = [f"verify prng={PRNG} seed={a.seed} trials={a.trials} rounding={a.rounding}"]
    total_bad = 0
    for m, e in VERIFY_FORMATS:
        for b in VERIFY_BIASES:
            f = FpFormat(m, e, b)
            x = _verify_inputs(f, rng, a.trials)
            fast = quantize_fp(x, f, rounding=a.rounding)
            ref = quantize_fp_oracle(x, enumerate_grid(f))
            bad = np.flatnonzero(fast != ref)
            total_bad += bad.size
            lines.append(f"{f.name} bias={_g(b)} inputs={x.size} mismatches={bad.size}")
            for i in bad[: a.max_report]:
                lines.append(f"  x={float(x[i]).hex()} fast={float(fast[i]).hex()} oracle={float(ref[i]).hex()}")
    lines.append(f"total mismatches={total_bad}")
    lines.append("PASS" if total_bad == 0 else "FAIL")
    _emit("\n".join(lines) + "\n", a.output)
    return EXIT_OK if total_bad == 0 else EXIT_FAIL


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpquant", description="Simulate and analyse low-bit FP and INT quantization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON file with option values; explicit flags take precedence")
        sp.set_defaults(func=fn)
        return sp

    sp = add("grid", cmd_grid, "print every representable value of a format, one per line")
    sp.add_argument("format", help="e.g. 2M2E:b=2 or INT8:s=1")
    sp.add_argument("-o", "--output")

    sp = add("mse-sweep", cmd_mse_sweep, "expected MSE table over formats and distributions")
    sp.add_argument("--formats", default=DEFAULT_FORMATS, help="comma-separated format list")
    sp.add_argument("--dist", action="append", help="distribution, e.g. t:nu=2,lo=-100,hi=100 (repeatable)")
    sp.add_argument("--ranges", type=float, nargs="+", help="replace each clip range by [-R, R] for every R")
    sp.add_argument("--minmax", action="store_true", help="set the largest grid value to max|range| instead of optimising")
    sp.add_argument("-j", "--jobs", type=int, default=1)
    sp.add_argument("-o", "--output")

    sp = add("dotprod-mse", cmd_dotprod_mse, "scalar-product expected MSE over weight x activation formats")
    sp.add_argument("--w-dist", default="gauss:mu=0,sigma=1,lo=-8,hi=8")
    sp.add_argument("--x-dist", default="gauss:mu=0,sigma=1,lo=-8,hi=8")
    sp.add_argument("--formats", default=FP8_FORMATS)
    sp.add_argument("--w-formats")
    sp.add_argument("--x-formats")
    sp.add_argument("-j", "--jobs", type=int, default=1)
    sp.add_argument("-o", "--output")

    sp = add("quantize", cmd_quantize, "quantize a tensor file")
    sp.add_argument("input")
    sp.add_argument("--format")
    sp.add_argument("--search", action="store_true", help="pick m and c by grid search first")
    sp.add_argument("--per-channel", action="store_true")
    sp.add_argument("-o", "--output", help="quantized tensor path")
    sp.add_argument("--report", help="JSON report path (default stdout)")

    sp = add("search", cmd_search, "MSE grid search for mantissa bits and clipping value")
    sp.add_argument("input")
    sp.add_argument("--per-channel", action="store_true")
    sp.add_argument("-o", "--output")

    sp = add("learn", cmd_learn, "learn c and m by SGD on N(0,1) samples")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--init", default="3M4E:b=8")
    sp.add_argument("--lr-c", type=float, default=DEFAULT_LR_C)
    sp.add_argument("--lr-m", type=float, default=DEFAULT_LR_M)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--line-search", action="store_true", help="also run the exhaustive line search")
    sp.add_argument("-o", "--output", help="trajectory CSV (default stdout)")
    sp.add_argument("--meta", help="JSON metadata path")

    sp = add("verify", cmd_verify, "check the fast FP quantizer against the nearest-grid-point oracle")
    sp.add_argument("--trials", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rounding", choices=("even", "away"), default="even", help="'away' injects a tie-rounding fault")
    sp.add_argument("--max-report", type=int, default=10)
    sp.add_argument("-o", "--output")
    return p


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv, path):
    """Install the config file's values as parser defaults, so flags still win."""
    command = next((t for t in argv if not t.startswith("-")), None)
    choices = parser._subparsers._group_actions[0].choices
    if command not in choices:
        raise UsageError("--config must follow a subcommand")
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sp = choices[command]
    known = {act.dest for act in sp._actions} - {"help", "config", "func"}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for act in sp._actions:
        if act.dest in cfg:
            act.required = False
            if act.nargs is None and not act.option_strings:
                act.nargs = "?"
    sp.set_defaults(**cfg)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        path = _config_path(argv)
        if path is not None:
            _apply_config(parser, argv, path)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
