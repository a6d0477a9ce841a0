"""Command-line front end.

Verbs: ``bounds`` (one point), ``sweep`` (a P × c grid to CSV), ``verify``
(certificates), ``oracle`` (brute-force GP rate or a Monte Carlo check) and
``dist`` (inspect a fading spec). Exit codes: 0 success, 1 a gap or
certificate failed, 2 bad usage or input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds as B
from . import oracle as O
from . import verify as V
from .bounds import Theorem
from .errors import WFFDError
from .fading import from_spec, make_gaussian
from .gauss_signaling import optimize_rho

CSV_COLUMNS = ("theorem", "regime", "P", "c", "dist_id", "inner_bpcu", "outer_bpcu", "gap_claimed", "gap_realized")
VERBS = ("bounds", "sweep", "verify", "oracle", "dist")
THEOREM_CHOICES = tuple(t.value for t in Theorem)
SUITES = ("all", "gap", "monotone") + tuple(f"gap:{t.value}" for t in V.GAP_THEOREMS) + tuple(
    f"monotone:{t.value}" for t in V.MONOTONE_THEOREMS
)


class UsageError(Exception):
    """Bad command line; carries the offending option when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wffd", description="Bounds and checks for Gaussian channels with fast-fading state.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    b = sub.add_parser("bounds", help="inner/outer bounds at one (P, c)")
    b.add_argument("--theorem", choices=THEOREM_CHOICES)
    b.add_argument("--method", choices=("closed", "gauss"), default="closed")
    b.add_argument("--power", type=float, required=True)
    b.add_argument("--gain", type=float, required=True)
    b.add_argument("--spec")
    b.add_argument("--mode-point", type=float)
    b.add_argument("--quad-order", type=int, default=64)
    b.add_argument("--out")

    s = sub.add_parser("sweep", help="bounds over a P x c grid")
    s.add_argument("--theorem", required=True, choices=THEOREM_CHOICES)
    s.add_argument("--grid-p", default="0.01:1000:50")
    s.add_argument("--grid-c", default="0.01:100:50")
    s.add_argument("--spec")
    s.add_argument("--out")

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", default="all", choices=SUITES)
    v.add_argument("--grid-p")
    v.add_argument("--grid-c")
    v.add_argument("--out")

    o = sub.add_parser("oracle", help="brute-force GP rate or Monte Carlo expectation check")
    o.add_argument("--power", type=float, default=1.0)
    o.add_argument("--gain", type=float, default=1.0)
    o.add_argument("--spec", default='{"family": "antipodal"}')
    o.add_argument("--nx", type=int, default=5)
    o.add_argument("--ns", type=int, default=2)
    o.add_argument("--ny", type=int, default=64)
    o.add_argument("--y-span", type=float)
    o.add_argument("--u-size", type=int, default=2)
    o.add_argument("--simplex-steps", type=int, default=8)
    o.add_argument("--budget", type=int, default=O.DEFAULT_BUDGET)
    o.add_argument("--integrand", choices=tuple(sorted(O.INTEGRANDS)))
    o.add_argument("--params", default="{}")
    o.add_argument("--samples", type=int, default=100_000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out")

    d = sub.add_parser("dist", help="build and describe a fading distribution")
    d.add_argument("--spec", required=True)
    d.add_argument("--show-moments", action="store_true")
    d.add_argument("--out")
    return p


PARSER = _build_parser()


# ------------------------------------------------------------------ Command
@dataclass(frozen=True)
class Command:
    verb: str
    options: tuple[tuple[str, object], ...]

    def get(self, key, default=None):
        return dict(self.options).get(key, default)

    @classmethod
    def parse(cls, argv: Sequence[str]) -> "Command":
        ns = PARSER.parse_args(list(argv))
        opts = vars(ns).copy()
        verb = opts.pop("verb")
        return cls(verb, tuple(sorted(opts.items())))

    def render(self) -> list[str]:
        argv = [self.verb]
        for key, value in self.options:
            flag = "--" + key.replace("_", "-")
            if value is None or value is False:
                continue
            if value is True:
                argv.append(flag)
            else:
                argv += [flag, repr(value) if isinstance(value, float) else str(value)]
        return argv


def parse(argv: Sequence[str]) -> Command:
    return Command.parse(argv)


def render(cmd: Command) -> list[str]:
    return cmd.render()


# ------------------------------------------------------------------ helpers
def parse_axis(text: str, name: str) -> tuple[float, ...]:
    """``lo:hi:n`` (log-spaced) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            vals = np.geomspace(float(lo), float(hi), int(n)).tolist()
        else:
            vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot read {text!r} as lo:hi:n or a comma list", field=name) from exc
    if not vals or not all(v > 0 and math.isfinite(v) for v in vals):
        raise UsageError("values must be finite and positive", field=name)
    return tuple(vals)


def _spec(text: str | None):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"not valid JSON ({exc.msg})", field="--spec") from exc


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def _table(rows: list[dict], columns: Sequence[str]) -> str:
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(x.ljust(w) for x, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _write(out: str | None, rows: list[dict], columns: Sequence[str], payload=None) -> None:
    if not out:
        return
    path = Path(out)
    if path.suffix == ".csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        path.write_text(buf.getvalue())
    elif path.suffix == ".json":
        path.write_text(json.dumps(payload if payload is not None else rows, indent=2, sort_keys=True, default=V._jsonable) + "\n")
    else:
        raise UsageError("output file must end in .csv or .json", field="--out")


def _report_row(rep: B.BoundReport, P: float, c: float, dist_id: str) -> dict:
    return {
        "theorem": rep.theorem.value,
        "regime": rep.regime,
        "P": P,
        "c": c,
        "dist_id": dist_id,
        "inner_bpcu": rep.inner_bpcu,
        "outer_bpcu": rep.outer_bpcu,
        "gap_claimed": rep.gap_claimed_bpcu,
        "gap_realized": rep.gap_realized_bpcu,
    }


def _violates(row: dict) -> bool:
    return row["gap_realized"] > row["gap_claimed"] + V.GAP_TOL


# -------------------------------------------------------------------- verbs
def _cmd_bounds(cmd: Command, out) -> int:
    P, c, th = cmd.get("power"), cmd.get("gain"), cmd.get("theorem")
    spec = _spec(cmd.get("spec"))
    if cmd.get("method") == "gauss":
        # Gaussian fading is symmetric and continuous, so the antipodal outer bound applies
        point, inner = optimize_rho(P, c, cmd.get("quad_order"))
        outer = B.outer_symmetric_continuous(P, c)
        row = {
            "theorem": "gauss",
            "regime": B.outer_antipodal(P, c)[1],
            "P": P,
            "c": c,
            "dist_id": json.dumps(make_gaussian(0.0, 1.0).to_spec(), sort_keys=True),
            "inner_bpcu": inner,
            "outer_bpcu": outer,
            "gap_claimed": math.inf,
            "gap_realized": outer - inner,
        }
    else:
        if th is None:
            raise UsageError("required unless --method gauss", field="--theorem")
        fading = from_spec(spec) if spec is not None else None
        rep = B.evaluate(th, P, c, fading, cmd.get("mode_point"))
        row = _report_row(rep, P, c, json.dumps(spec, sort_keys=True) if spec else "")
    print(_table([row], CSV_COLUMNS), file=out)
    _write(cmd.get("out"), [row], CSV_COLUMNS)
    return 1 if _violates(row) else 0


def _cmd_sweep(cmd: Command, out) -> int:
    th = Theorem(cmd.get("theorem"))
    ps = parse_axis(cmd.get("grid_p"), "--grid-p")
    cs = parse_axis(cmd.get("grid_c"), "--grid-c")
    spec = _spec(cmd.get("spec"))
    specs = [spec] if spec is not None else list(V.DEFAULT_DISTRIBUTIONS.get(th, ())) or [None]
    rows = []
    cache: dict = {}
    for sp in specs:
        for P in ps:
            for c in cs:
                s = V._resolve(sp, c) if sp is not None else None
                fading = None
                if s is not None:
                    key = json.dumps(s, sort_keys=True)
                    if key not in cache:
                        cache[key] = from_spec(s)
                    fading = cache[key]
                try:
                    rep = B.evaluate(th, P, c, fading)
                except V._SKIP:
                    continue
                rows.append(_report_row(rep, P, c, json.dumps(s, sort_keys=True) if s else ""))
    bad = sum(_violates(r) for r in rows)
    if cmd.get("out"):
        _write(cmd.get("out"), rows, CSV_COLUMNS)
    else:
        w = csv.DictWriter(out, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    print(f"# {len(rows)} points, {bad} gap violations", file=sys.stderr)
    return 1 if bad else 0


def _cmd_verify(cmd: Command, out) -> int:
    suite = cmd.get("suite")
    ps = parse_axis(cmd.get("grid_p"), "--grid-p") if cmd.get("grid_p") else None
    cs = parse_axis(cmd.get("grid_c"), "--grid-c") if cmd.get("grid_c") else None

    def grid(th, monotone):
        g = V.default_grid(th, monotone)
        return V.SweepGrid(ps or g.p_values, cs or g.c_values, g.distributions)

    kind, _, name = suite.partition(":")
    certs = []
    if kind in ("all", "gap"):
        ths = [Theorem(name)] if name else V.GAP_THEOREMS
        certs += [V.gap_suite(t, grid(t, False)) for t in ths]
    if kind in ("all", "monotone"):
        ths = [Theorem(name)] if name else V.MONOTONE_THEOREMS
        certs += [V.monotonicity_suite(t, grid(t, True)) for t in ths]
    rows = []
    for cert in certs:
        w = cert.worst_case
        rows.append(
            {
                "claim": cert.claim_id,
                "status": cert.status,
                "P": w.P if w else None,
                "c": w.c if w else None,
                "realized": w.realized if w else None,
                "allowed": w.allowed if w else None,
                "crossings": cert.details.get("sandwich_violations", ""),
                "seconds": cert.runtime,
            }
        )
    cols = ("claim", "status", "P", "c", "realized", "allowed", "crossings", "seconds")
    print(_table(rows, cols), file=out)
    _write(cmd.get("out"), rows, cols, payload=[c.to_dict() for c in certs])
    return 0 if all(c.passed for c in certs) else 1


def _cmd_oracle(cmd: Command, out) -> int:
    fading = from_spec(_spec(cmd.get("spec")))
    if cmd.get("integrand"):
        try:
            params = json.loads(cmd.get("params"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"not valid JSON ({exc.msg})", field="--params") from exc
        res = O.mc_expectation_check(fading, cmd.get("integrand"), params, cmd.get("samples"), cmd.get("seed"))
        row = {"integrand": cmd.get("integrand"), "mc_mean": res.mc_mean, "mc_stderr": res.mc_stderr, "quad_value": res.quad_value, "within_3se": res.agrees()}
        cols = tuple(row)
        print(_table([row], cols), file=out)
        _write(cmd.get("out"), [row], cols, payload=row)
        return 0 if res.agrees() else 1
    ch = O.build_channel(cmd.get("power"), cmd.get("gain"), fading, cmd.get("nx"), cmd.get("ns"), cmd.get("ny"), cmd.get("y_span"))
    sol = O.gp_capacity_bruteforce(ch, cmd.get("u_size"), cmd.get("simplex_steps"), cmd.get("budget"))
    row = {"P": cmd.get("power"), "c": cmd.get("gain"), "u_size": sol.u_size, "rate_bpcu": sol.rate, "evaluations": sol.n_evaluations}
    cols = tuple(row)
    print(_table([row], cols), file=out)
    print("x(u, s):", np.array2string(sol.x_map, precision=4), file=out)
    print("P(U|S):", np.array2string(sol.p_u_given_s, precision=4), file=out)
    payload = {**row, "x_map": sol.x_map.tolist(), "p_u_given_s": sol.p_u_given_s.tolist(), "note": sol.note}
    _write(cmd.get("out"), [row], cols, payload=payload)
    return 0


def _cmd_dist(cmd: Command, out) -> int:
    f = from_spec(_spec(cmd.get("spec")))
    row = {"family": f.to_spec().get("family", f.family.value), "spec": json.dumps(f.to_spec(), sort_keys=True)}
    if cmd.get("show_moments"):
        row.update(mean=f.mean, second_moment=f.second_moment, variance=f.variance, std=f.std)
    if f.is_discrete:
        row["support_size"] = len(f.points)
    cols = tuple(row)
    print(_table([row], cols), file=out)
    _write(cmd.get("out"), [row], cols, payload=row)
    return 0


HANDLERS = {"bounds": _cmd_bounds, "sweep": _cmd_sweep, "verify": _cmd_verify, "oracle": _cmd_oracle, "dist": _cmd_dist}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cmd = Command.parse(argv)
        return HANDLERS[cmd.verb](cmd, out)
    except UsageError as exc:
        print(f"wffd: error: {exc}", file=err)
        return 2
    except WFFDError as exc:
        print(f"wffd: error: {exc}", file=err)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(run())
