"""Command-line harness: ``rrest {reproduce,sweep,certify,validate}``.

Exit codes are the machine interface:

====  ==========================================================
0     success (``certify``: MMSE is worse than r-MMSE)
1     ``certify``: inconclusive; ``validate``: a property failed
2     scenario generation exhausted its rejection budget
3     I/O failure
4     ``certify``: the rho > 1/2 gate failed
5     ``certify``: the pair file did not parse or validate
====  ==========================================================

Every command writes its files atomically and leaves a ``manifest.json``
listing them.  Floats are written with 17 significant digits, and the
output depends only on the flags, so repeated runs are byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import estimators as est
from .exceptions import RejectionExhausted, RrestError
from .model import PerturbedPair, snr_db
from .mse_analysis import (
    SHARED_KINDS,
    closed_form_generic,
    closed_form_shared,
    mse_exact,
    positivity_regions,
    sweep_grid,
)
from .perturbation_bounds import robustness_certificates
from .random_ensembles import ScenarioConfig, generate_scenario, monte_carlo_mse
from .validation import SUITES

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_FAILED = 1
EXIT_GENERATION = 2
EXIT_IO = 3
EXIT_GATE = 4
EXIT_PARSE = 5


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_text(obj, indent=0) -> str:
    """JSON with every float rendered at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json_text(v, indent + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json_text(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return "null"
        return fmt(obj)
    return json.dumps(obj)


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


class Writer:
    """Stage output files, then move them into place with ``os.replace``."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.files = {}

    def text(self, name, content):
        self.files[name] = content

    def json(self, name, obj):
        self.files[name] = _json_text(obj) + "\n"

    def csv(self, name, header, rows):
        self.files[name] = _csv_text(header, rows)

    def commit(self, command, config, seed, manifest_name="manifest.json"):
        manifest = {
            "command": command,
            "config_hash": config_hash(config),
            "seed": int(seed),
            "outputs": sorted(self.files),
            "tool_version": __version__,
            "config": config,
        }
        self.json(manifest_name, manifest)
        self.root.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, content in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{name}.", suffix=".tmp")
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(content)
                staged.append((tmp, self.root / name))
            for tmp, final in staged:
                os.replace(tmp, final)
        finally:
            for tmp, _ in staged:
                if os.path.exists(tmp):
                    os.unlink(tmp)


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# --- reproduce ---------------------------------------------------------------


def _reproduce_files(pair: PerturbedPair, seed, mc_samples, w: Writer):
    root = math.sqrt(pair.epsilon)
    rows = [
        (i + 1, g, s, g / root, s / root)
        for i, (g, s) in enumerate(zip(pair.gammas, pair.sigmas))
    ]
    w.csv("table1.csv", ["index", "gamma", "sigma", "gamma_over_root_eps", "sigma_over_root_eps"],
          [(str(i), g, s, a, b) for i, g, s, a, b in rows])

    cert = robustness_certificates(pair)
    sp = cert.rhs_split
    w.csv("table2.csv", ["term", "value"], [
        ("leading", sp["el_leading"]), ("trailing", sp["el_trailing"]), ("total", cert.rhs_el)])
    w.csv("table3.csv", ["term", "value"], [
        ("leading", sp["ter_leading"]), ("trailing", sp["ter_trailing"]), ("total", cert.rhs_ter)])
    ls = cert.lhs_split
    w.csv("table4.csv", ["term", "value"], [
        ("leading", ls["leading"]), ("trailing", ls["trailing"]), ("noise", ls["noise"]),
        ("total", cert.lhs_al), ("threshold", cert.threshold_al)])
    certs = cert.to_json()
    w.json("certificates.json", certs)

    mse = {"snr_db": snr_db(pair.base), "shared": {}, "generic": {}, "exact": {}, "monte_carlo": {}}
    seeds = np.random.SeedSequence([int(seed), 1]).spawn(len(SHARED_KINDS))
    for kind, child in zip(SHARED_KINDS, seeds):
        mse["shared"][kind] = closed_form_shared(kind, pair.gammas, pair.sigmas, pair.epsilon, pair.r).total
        mse["generic"][kind] = closed_form_generic(pair, kind).total
        wm = est.build(kind, pair.h_pert, pair.epsilon, pair.r)
        mse["exact"][kind] = mse_exact(wm, pair.base)
        mc = monte_carlo_mse(wm, pair.base, mc_samples, child)
        mse["monte_carlo"][kind] = {"estimate": mc.estimate, "stderr": mc.stderr, "n_samples": mc.n_samples}
    mmse_worse = certs["verdict_al"] == "mmse-worse"
    mse["consistent_with_certificate"] = (not mmse_worse) or mse["generic"]["mmse"] >= mse["generic"]["rmmse"]
    w.json("mse.json", mse)
    return mse


def cmd_reproduce(args) -> int:
    cfg = ScenarioConfig(seed=args.seed, max_rejects=args.max_rejects)
    try:
        sc = generate_scenario(cfg)
    except RejectionExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    w = Writer(args.out)
    scenario = sc.to_json()
    w.json("scenario.json", scenario)
    mse = _reproduce_files(sc.pair, args.seed, args.mc_samples, w)
    config = {"seed": args.seed, "max_rejects": args.max_rejects, "mc_samples": args.mc_samples}
    try:
        w.commit("reproduce", config, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not mse["consistent_with_certificate"]:
        print("error: certificate disagrees with the MSE values", file=sys.stderr)
        return EXIT_FAILED
    print(f"wrote {len(w.files)} files to {args.out} (rejects={sc.rejects})")
    return EXIT_OK


# --- sweep -------------------------------------------------------------------


def _parse_grid(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be amin,amax,steps")
    lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < lo < hi) or steps < 2:
        raise argparse.ArgumentTypeError("grid needs 0 < amin < amax and steps >= 2")
    return lo, hi, steps


def boundary_polyline(term, a_sigma_axis):
    """Sign-change curve of ``term`` in ``(a_sigma, a_gamma)`` coordinates."""
    rows = []
    for s in a_sigma_axis:
        reg = positivity_regions(float(s), 1.0)
        if term == "A":
            if reg.a_interval is not None:
                rows.append((s, reg.a_interval[0], "lower"))
                rows.append((s, reg.a_interval[1], "upper"))
        else:
            if reg.b_lower_interval[1] > 0:
                rows.append((s, reg.b_lower_interval[1], "lower"))
            rows.append((s, reg.b_upper_interval[0], "upper"))
    return rows


def cmd_sweep(args) -> int:
    if len(args.grid) != 2:
        print("error: --grid must be given twice (a_gamma axis, then a_sigma axis)", file=sys.stderr)
        return EXIT_PARSE
    (g_lo, g_hi, g_n), (s_lo, s_hi, s_n) = args.grid
    ag = np.linspace(g_lo, g_hi, g_n)
    asg = np.linspace(s_lo, s_hi, s_n)
    grid = sweep_grid(ag, asg)
    out = Path(args.out)
    w = Writer(out.parent)
    w.csv(out.name, ["a_gamma", "a_sigma", "a_value", "b_value"], grid)
    bname = out.stem + "_boundary.csv"
    w.csv(bname, ["a_sigma", "a_gamma", "branch"], boundary_polyline(args.term, asg))
    col = 2 if args.term == "A" else 3
    k = int(np.argmax(grid[:, col]))
    config = {"term": args.term, "grid": [list(g) for g in args.grid]}
    try:
        w.commit("sweep", config, 0, manifest_name=out.stem + ".manifest.json")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"max {args.term} = {fmt(grid[k, col])} at a_gamma={fmt(grid[k, 0])}, a_sigma={fmt(grid[k, 1])}")
    return EXIT_OK


# --- certify -----------------------------------------------------------------


def cmd_certify(args) -> int:
    try:
        with open(args.pair, encoding="utf-8") as fh:
            pair = PerturbedPair.from_json(json.load(fh))
        cert = robustness_certificates(pair)
    except (OSError, ValueError, KeyError, TypeError, RrestError) as exc:
        print(f"error: cannot read pair: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(args.out)
    w = Writer(out.parent)
    report = cert.to_json()
    w.json(out.name, report)
    config = {"pair": pair.to_json()}
    try:
        w.commit("certify", config, 0, manifest_name=out.stem + ".manifest.json")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"verdict_al = {report['verdict_al']} (lhs_al={fmt(cert.lhs_al)}, m-r={fmt(cert.threshold_al)})")
    return {"mmse-worse": EXIT_OK, "inconclusive": EXIT_INCONCLUSIVE}.get(report["verdict_al"], EXIT_GATE)


# --- validate ----------------------------------------------------------------


def cmd_validate(args) -> int:
    if args.trials < 1:
        print("error: --trials must be at least 1", file=sys.stderr)
        return EXIT_PARSE
    res = SUITES[args.suite](args.trials, args.seed)
    for line in res.lines():
        print(line)
    w = Writer(args.out)
    w.json("summary.json", {
        "suite": args.suite,
        "ok": res.ok,
        "properties": {k: {"passed": p.passed, "total": p.total, "worst": p.worst} for k, p in res.properties.items()},
    })
    if args.suite == "ensembles":
        w.csv("condition_tail.csv", ["t", "empirical", "lower", "upper"], res.condition_rows)
        w.csv("smallest_sv.csv", ["t", "empirical", "lower", "upper"], res.smallest_rows)
    if not res.ok:
        w.json("reproducer.json", {"suite": args.suite, "failures": res.failures})
    config = {"suite": args.suite, "trials": args.trials, "seed": args.seed}
    try:
        w.commit("validate", config, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print("all properties passed" if res.ok else f"failures written to {Path(args.out) / 'reproducer.json'}")
    return EXIT_OK if res.ok else EXIT_FAILED


class _Parser(argparse.ArgumentParser):
    # usage errors share the "bad input" code rather than argparse's 2,
    # which is reserved for generation failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rrest", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"rrest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reproduce", help="generate a scenario and write its spectra, bound splits and MSE values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mc-samples", type=int, default=1_000_000)
    p.add_argument("--max-rejects", type=int, default=ScenarioConfig.max_rejects)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("sweep", help="evaluate A and B on an (a_gamma, a_sigma) grid")
    p.add_argument("--term", choices=("A", "B"), required=True)
    p.add_argument("--grid", type=_parse_grid, action="append", required=True,
                   help="amin,amax,steps; give once for a_gamma, then for a_sigma")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="robustness certificates for a PerturbedPair JSON file")
    p.add_argument("--pair", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("validate", help="run a seeded property suite")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) < 0 or getattr(args, "seed", 0) >= 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
