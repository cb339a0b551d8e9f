"""Command-line front end.

Subcommands: ``bound``, ``sweep``, ``check-eta-one`` and ``reduce``.  Exit
codes: 0 success, 2 unreadable or invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channels as chn
from .doeblin import doeblin_alpha
from .hierarchy import HierarchyLevelSpec, build_sdp, logical_blocks, marginal_residuals, solve_level
from .lower_bounds import seesaw_eta, verify_witness
from .reductions import build_phi_alpha, load_instance, norm_identity_check, outputs_diagonal
from .sdp import SolverError, solve_checked
from .structure import channel_from_operator_system, eta_one_report, subspace_from_dict

EXIT_OK, EXIT_PARSE, EXIT_SOLVER = 0, 2, 3
CSV_HEADER = ["p", "doeblin", "sdp1", "sdp1_ppt", "lower"]


class InputError(Exception):
    pass


@dataclass
class BoundReport:
    channel: str
    doeblin: float
    hierarchy: dict
    lower: float
    interval: tuple
    seconds: dict
    certificates: dict = field(default_factory=dict)
    clipped: list = field(default_factory=list)
    verification: dict | None = None

    def consistent(self, tol: float = 1e-6) -> bool:
        uppers = [self.doeblin] + list(self.hierarchy.values())
        return all(self.lower <= u + tol for u in uppers)


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _channel_from_obj(obj: dict) -> chn.KrausChannel:
    try:
        if "basis" in obj:
            return channel_from_operator_system(subspace_from_dict(obj))
        return chn.channel_from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid channel description: {exc}") from exc


def _descriptor(obj: dict) -> str:
    if "gallery" in obj:
        params = ",".join(f"{k}={v}" for k, v in sorted(obj.get("params", {}).items()))
        copies = int(obj.get("copies", 1))
        return f"{obj['gallery']}({params})" + (f"^{copies}" if copies > 1 else "")
    if "basis" in obj:
        return f"operator-system(p={obj.get('p')})"
    return f"kraus(d_in={obj.get('d_in')},d_out={obj.get('d_out')})"


def _finite(x: float) -> float:
    if x is None or not math.isfinite(x):
        raise SolverError("solver returned a non-finite bound")
    return x


def _parse_levels(text: str) -> list[int]:
    try:
        levels = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc
    if not levels or levels[0] < 1:
        raise argparse.ArgumentTypeError("levels must be positive integers")
    return levels


def _verify_level(ch, spec) -> dict:
    """Recompute feasibility of a hierarchy solution from the logical blocks."""
    prob, layout = build_sdp(ch, spec)
    sol = solve_checked(prob)
    blocks = logical_blocks(sol, layout, spec.k, spec.m)
    J = chn.choi(ch)
    res = marginal_residuals(blocks, J.matrix, J.d_A, J.d_B, spec.k, spec.m, spec.first_marginal_upto)
    mineig = min(float(np.linalg.eigvalsh(W)[0]) for W in blocks.values())
    return {"marginal_residuals": res, "min_block_eig": mineig}


def compute_bounds(ch, descriptor: str, levels: list[int], ppt: bool, restarts: int, seed: int,
                   verify: bool = False) -> BoundReport:
    times, certs, hier, clipped = {}, {}, {}, []
    t = time.perf_counter()
    d = doeblin_alpha(ch)
    times["doeblin"] = time.perf_counter() - t
    certs["doeblin"] = d.certificate.ok
    doeblin = min(1.0, max(0.0, _finite(d.upper_bound_eta)))
    if doeblin != d.upper_bound_eta:
        clipped.append("doeblin")
    specs = [HierarchyLevelSpec(k=2, m=m) for m in levels]
    if ppt:
        specs += [HierarchyLevelSpec(k=2, m=m, ppt=True) for m in levels]
    for spec in specs:
        key = f"sdp{spec.m}" + ("_ppt" if spec.ppt else "")
        t = time.perf_counter()
        r = solve_level(ch, spec)
        times[key] = time.perf_counter() - t
        hier[key] = _finite(r.eta_bound)
        certs[key] = r.certificate.ok
        if r.eta_clipped:
            clipped.append(key)
    t = time.perf_counter()
    w = seesaw_eta(ch, restarts=restarts, seed=seed)
    times["lower"] = time.perf_counter() - t
    lower = min(1.0, max(0.0, w.value))
    upper = min([doeblin] + list(hier.values()))
    verification = None
    if verify:
        verification = {"seesaw_witness": verify_witness(ch, w),
                        "doeblin_slack_min_eig": d.min_eig_slack}
        for spec in specs:
            key = f"sdp{spec.m}" + ("_ppt" if spec.ppt else "")
            verification[key] = _verify_level(ch, spec)
    return BoundReport(descriptor, doeblin, hier, lower, (lower, upper), times, certs, clipped,
                       verification)


def _print_table(rep: BoundReport, out) -> None:
    rows = [("doeblin", rep.doeblin)] + list(rep.hierarchy.items()) + [("lower (see-saw)", rep.lower)]
    out.write(f"channel: {rep.channel}\n")
    for name, val in rows:
        out.write(f"  {name:<16}{val:.10f}  ({rep.seconds.get(name.split()[0], 0.0):.2f} s)\n")
    out.write(f"  interval        [{rep.interval[0]:.10f}, {rep.interval[1]:.10f}]\n")


def cmd_bound(args) -> int:
    obj = _read_json(args.channel)
    ch = _channel_from_obj(obj)
    rep = compute_bounds(ch, _descriptor(obj), args.levels, args.ppt, args.restarts, args.seed,
                         args.verify)
    payload = json.dumps(asdict(rep), indent=2, default=float)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(payload)
    if args.format == "json":
        sys.stdout.write(payload + "\n")
    else:
        _print_table(rep, sys.stdout)
    return EXIT_OK


def _grid(text: str) -> list[float]:
    """``a:b:n`` (inclusive, n points) or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(x) for x in np.linspace(float(a), float(b), int(n))]
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc


def _sweep_point(task) -> list:
    gallery, param, value, fixed, copies, ppt, restarts, seed = task
    params = dict(fixed)
    params[param] = value
    ch = chn.channel_from_dict({"gallery": gallery, "params": params, "copies": copies})
    d = doeblin_alpha(ch).upper_bound_eta
    s1 = solve_level(ch, HierarchyLevelSpec(k=2, m=1)).eta_bound
    sp = solve_level(ch, HierarchyLevelSpec(k=2, m=1, ppt=True)).eta_bound if ppt else None
    lo = seesaw_eta(ch, restarts=restarts, seed=seed).value
    return [value, d, s1, sp, lo]


def _workers() -> int:
    env = os.environ.get("CONTRACTA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def cmd_sweep(args) -> int:
    if args.gallery not in chn.GALLERY:
        raise InputError(f"unknown gallery channel {args.gallery!r}")
    grid = args.grid
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("grid must be strictly increasing")
    fixed = {}
    for item in args.fixed or []:
        k, _, v = item.partition("=")
        try:
            fixed[k] = float(v)
        except ValueError as exc:
            raise InputError(f"bad --fixed value {item!r}") from exc
    tasks = [(args.gallery, args.param, x, tuple(sorted(fixed.items())), args.copies,
              not args.no_ppt, args.restarts, args.seed + i) for i, x in enumerate(grid)]
    try:
        chn.channel_from_dict({"gallery": args.gallery, "params": {**fixed, args.param: grid[0]}})
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid gallery parameters: {exc}") from exc
    n = min(_workers(), len(tasks))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_point, tasks))  # map keeps grid order
    else:
        rows = [_sweep_point(t) for t in tasks]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for r in rows:
        wr.writerow(["" if v is None else repr(float(v)) for v in r])
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_check_eta_one(args) -> int:
    obj = _read_json(args.file)
    ch = _channel_from_obj(obj)
    rep = eta_one_report(ch, restarts=args.restarts, seed=args.seed, sdp_level=args.sdp_level)
    out = {"channel": _descriptor(obj), **rep.to_dict()}
    sys.stdout.write(json.dumps(out, indent=2, default=float) + "\n")
    return EXIT_OK


def cmd_reduce(args) -> int:
    try:
        inst = load_instance(args.instance)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid instance: {exc}") from exc
    try:
        out = build_phi_alpha(inst, args.alpha)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = {"variant": inst.variant, "n": inst.n, "d": inst.d, "alpha": out.alpha,
              "alpha_max": out.alpha_max, "d_in": out.channel.d_in, "d_out": out.channel.d_out,
              "outputs_diagonal": outputs_diagonal(out)}
    if args.check:
        r = norm_identity_check(inst, out, seed=args.seed)
        report.update({"norm": r.norm, "norm_exact": r.norm_exact, "eta_lower": r.eta_lower,
                       "eta_upper": r.eta_upper, "bracket": list(r.bracket),
                       "residual": r.residual})
    if args.out:
        chn.dump_channel(out.channel, args.out)
        report["channel_file"] = args.out
    sys.stdout.write(json.dumps(report, indent=2, default=float) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contracta",
                                description="Bounds on trace-norm contraction coefficients of quantum channels.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="Doeblin, hierarchy and see-saw bounds for one channel")
    b.add_argument("channel", help="channel JSON (Kraus list, gallery entry or operator system)")
    b.add_argument("--levels", type=_parse_levels, default=[1], help="comma-separated hierarchy levels")
    b.add_argument("--ppt", action="store_true", help="also solve the PPT-strengthened levels")
    b.add_argument("--restarts", type=int, default=32)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--verify", action="store_true", help="recompute feasibility residuals")
    b.add_argument("--json", help="write the report to this file")
    b.add_argument("--format", choices=("table", "json"), default="table")
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("sweep", help="CSV of bounds over a parameter grid of a gallery channel")
    s.add_argument("gallery", help=f"one of {sorted(chn.GALLERY)}")
    s.add_argument("--param", default="p")
    s.add_argument("--grid", type=_grid, default=_grid("0.1:0.9:9"), help="a:b:n or comma list")
    s.add_argument("--fixed", action="append", help="other parameters, name=value")
    s.add_argument("--copies", type=int, default=1)
    s.add_argument("--no-ppt", action="store_true", help="leave the sdp1_ppt column empty")
    s.add_argument("--restarts", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check-eta-one", help="test whether eta_tr = 1")
    c.add_argument("file", help="channel or operator-system JSON")
    c.add_argument("--sdp-level", type=int, default=1)
    c.add_argument("--restarts", type=int, default=16)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_eta_one)

    r = sub.add_parser("reduce", help="channel from a Little Grothendieck instance")
    r.add_argument("instance", help="instance JSON")
    r.add_argument("--alpha", type=float, default=None)
    r.add_argument("--out", help="write the channel JSON here")
    r.add_argument("--check", action="store_true", help="bracket ||F|| with bounds on eta")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_reduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except (SolverError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
