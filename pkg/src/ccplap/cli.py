"""Command-line front end.

Every subcommand builds a problem from flags (optionally seeded from a
``key = value`` config file; flags win), runs one computation and writes CSV
to ``--output`` or standard output. Exit codes: 0 success, 1 failed
verification, 2 nonconvergence, 3 invalid specification or usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field

import numpy as np

from .discretization import WeightField, build_mesh, format_nodal_csv
from .errors import CCPlapError, NonConvergenceError
from .plap import ProblemSpec, SolverOptions

EXIT_OK, EXIT_VERIFY, EXIT_NONCONV, EXIT_INVALID = 0, 1, 2, 3

COMMANDS = ("solve-plus", "solve-minus", "torsion", "eigen", "bounds", "bifurcation", "lambda-star", "verify")

# flag dest -> (default, type)
DEFAULTS = {
    "p": (2.0, float),
    "q": (0.5, float),
    "sigma": (3.0, float),
    "lam": (1.0, float),
    "sign": ("plus", str),
    "k": ("const:1", str),
    "h": ("const:1", str),
    "dim": (1, int),
    "n": (256, int),
    "extent": (None, str),
    "seed": (0, int),
    "output": (None, str),
    "lambdas": ("1:7:7", str),
    "jobs": (1, int),
    "tol_newton": (1e-10, float),
    "eps_reg": (None, float),
    "max_iter": (60, int),
    "max_mono_iter": (20000, int),
    "blowup": (1e4, float),
    "tol_energy": (1e-8, float),
}

CONFIG_ALIASES = {"lambda": "lam", "λ": "lam"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def options(self):
        return SolverOptions(
            eps_reg=self.eps_reg,
            tol_newton=self.tol_newton,
            max_iter=self.max_iter,
            max_mono_iter=self.max_mono_iter,
            blowup=self.blowup,
        )

    def mesh(self):
        extent = None
        if self.extent:
            nums = [float(x) for x in str(self.extent).split(",")]
            if len(nums) != 2 * self.dim:
                raise CCPlapError(f"extent needs {2 * self.dim} numbers, got {len(nums)}")
            extent = (nums[0], nums[1]) if self.dim == 1 else ((nums[0], nums[1]), (nums[2], nums[3]))
        return build_mesh(self.dim, self.n, extent)

    def spec(self, sign=None, lam=None):
        mesh = self.mesh()
        sign = sign if sign is not None else self.sign_value()
        return ProblemSpec(
            self.p,
            self.q,
            self.sigma,
            self.lam if lam is None else lam,
            WeightField.parse(mesh, self.k),
            WeightField.parse(mesh, self.h),
            sign,
        )

    def sign_value(self):
        s = str(self.sign).strip().lower()
        if s in ("plus", "+", "+1", "1"):
            return 1
        if s in ("minus", "-", "-1"):
            return -1
        raise CCPlapError(f"sign must be plus or minus, got {self.sign!r}")


def read_config(path):
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = CONFIG_ALIASES.get(key, key.replace("-", "_"))
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("problem")
    g.add_argument("--p", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--sign", choices=["plus", "minus"])
    g.add_argument("--k", help="weight: const:c | sin:a | affine:c0,c1 | file:path | number")
    g.add_argument("--h", help="weight, same syntax as --k")
    g.add_argument("--dim", type=int, choices=[1, 2])
    g.add_argument("--n", type=int)
    g.add_argument("--extent", help="a,b (1-D) or a,b,c,d (2-D)")
    r = common.add_argument_group("run")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--output")
    r.add_argument("--lambdas", help="comma list or start:stop:count")
    r.add_argument("--jobs", type=int)
    r.add_argument("--tol-newton", type=float)
    r.add_argument("--eps-reg", type=float)
    r.add_argument("--max-iter", type=int)
    r.add_argument("--max-mono-iter", type=int)
    r.add_argument("--blowup", type=float)
    r.add_argument("--tol-energy", type=float)
    r.add_argument("--verbose", "-v", action="store_true")

    parser = _Parser(prog="ccplap", description="Concave-convex p-Laplacian laboratory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def parse_config(argv):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            values.update(read_config(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    for key, (default, typ) in DEFAULTS.items():
        raw = values.get(key, default)
        if raw is None or typ is str:
            values[key] = raw
            continue
        try:
            values[key] = typ(float(raw)) if typ is int else typ(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
    values["verbose"] = args.verbose
    return RunConfig(args.command, values)


def parse_lambdas(text):
    text = str(text).strip()
    if not text:
        return []
    if ":" in text:
        a, b, c = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(c))]
    return [float(x) for x in text.split(",") if x.strip()]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _emit(cfg, text, out):
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


POINT_COLUMNS = ["lambda", "sup_norm", "energy", "iters", "status"]
STAR_COLUMNS = ["sign", "lambda0", "lambda_prime", "Lambda", "lo", "hi", "estimate"]
BOUNDS_COLUMNS = ["A", "B", "C", "lambda0", "lambda0_literal", "lambda_prime", "lambda1", "m"]


def cmd_solve_plus(cfg, out):
    from .branch import monotone_iterate

    pt = monotone_iterate(cfg.spec(sign=1), cfg.options())
    if pt.converged and cfg.output:
        _emit(cfg, format_nodal_csv(pt.solution), out)
    out.write(rows_to_csv([pt.as_row()], POINT_COLUMNS))
    return EXIT_OK if pt.converged else EXIT_NONCONV


def cmd_solve_minus(cfg, out):
    from .varmin import minimize_F

    spec = cfg.spec(sign=-1)
    rep = minimize_F(spec, opts=cfg.options())
    if cfg.output:
        _emit(cfg, format_nodal_csv(rep.minimizer), out)
    row = {
        "lambda": spec.lam,
        "F": rep.value,
        "grad_norm": rep.grad_norm,
        "steps": rep.steps,
        "nontrivial": rep.value < -cfg.tol_energy,
        "status": "converged" if rep.converged else "stagnated",
    }
    out.write(rows_to_csv([row], list(row)))
    return EXIT_OK if rep.converged else EXIT_NONCONV


def cmd_torsion(cfg, out):
    from .nlsolve import solve_torsion

    v = solve_torsion(cfg.mesh(), cfg.p, cfg.options())
    if cfg.output:
        _emit(cfg, format_nodal_csv(v), out)
    out.write(rows_to_csv([{"p": cfg.p, "sup_norm": v.sup_norm()}], ["p", "sup_norm"]))
    return EXIT_OK


def cmd_eigen(cfg, out):
    from .eigen import first_eigenpair

    ep = first_eigenpair(cfg.mesh(), cfg.p, cfg.options())
    if cfg.output:
        _emit(cfg, format_nodal_csv(ep.phi), out)
    row = {"p": cfg.p, "lambda1": ep.lam1, "residual": ep.residual, "iterations": ep.iterations}
    out.write(rows_to_csv([row], list(row)))
    return EXIT_OK


def cmd_bounds(cfg, out):
    from .subsuper import build_bundle

    bundle = build_bundle(cfg.spec(sign=1, lam=0.0), cfg.options())
    _emit(cfg, rows_to_csv([bundle.as_row()], BOUNDS_COLUMNS), out)
    return EXIT_OK


def cmd_bifurcation(cfg, out):
    from .branch import sweep_minimal_branch

    pts = sweep_minimal_branch(cfg.spec(sign=1), parse_lambdas(cfg.lambdas), cfg.options(), jobs=cfg.jobs)
    _emit(cfg, rows_to_csv([pt.as_row() for pt in pts], POINT_COLUMNS), out)
    return EXIT_OK


def cmd_lambda_star(cfg, out):
    if cfg.sign_value() == 1:
        from .branch import estimate_lambda_star_plus

        est = estimate_lambda_star_plus(cfg.spec(sign=1), cfg.options())
    else:
        from .varmin import estimate_lambda_star_minus

        est = estimate_lambda_star_minus(cfg.spec(sign=-1), cfg.options(), tol_energy=cfg.tol_energy)
    _emit(cfg, rows_to_csv([est.as_row()], STAR_COLUMNS), out)
    if est.low_confidence:
        logging.getLogger(__name__).warning("estimate flagged low-confidence")
    return EXIT_OK


def cmd_verify(cfg, out):
    from .verify import run_suite

    results = run_suite(cfg.seed, min(cfg.n, 256), cfg.options())
    rows = [{"check": n, "passed": ok, "detail": d} for n, ok, d in results]
    _emit(cfg, rows_to_csv(rows, ["check", "passed", "detail"]), out)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY


HANDLERS = {
    "solve-plus": cmd_solve_plus,
    "solve-minus": cmd_solve_minus,
    "torsion": cmd_torsion,
    "eigen": cmd_eigen,
    "bounds": cmd_bounds,
    "bifurcation": cmd_bifurcation,
    "lambda-star": cmd_lambda_star,
    "verify": cmd_verify,
}


def run(argv=None, out=None, err=None):
    """Entry point returning an exit code instead of calling sys.exit."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if cfg.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if cfg.command in ("torsion", "eigen"):
            cfg.mesh()
            if not cfg.p > 1:
                raise CCPlapError(f"p must exceed 1, got {cfg.p}")
        elif cfg.command != "verify":
            cfg.spec(sign=1)
        return HANDLERS[cfg.command](cfg, out)
    except NonConvergenceError as exc:
        err.write(f"nonconvergence: {exc}\n")
        return EXIT_NONCONV
    except (CCPlapError, ValueError) as exc:
        err.write(f"invalid specification: {exc}\n")
        return EXIT_INVALID


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
