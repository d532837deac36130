"""Command-line front end: construct rules, dump points, solve, run studies.

Four subcommands share one flat `key = value` configuration format:

    latqmc construct --config problem.cfg --out z.txt
    latqmc points --z z.txt --n 1024 --count 8
    latqmc solve --config problem.cfg --y 0.25,-0.1
    latqmc study --config problem.cfg --method qmc --out rates.csv

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(ellipticity violation, domain error, weight overflow).  Heavy modules are
imported only after the thread-count environment variable has been applied,
so LATQMC_NUM_THREADS reliably caps the BLAS pool.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .errors import ConfigError, LatticeQmcError


# --- configuration ----------------------------------------------------------------

_CONFIG_KEYS = {
    "model": "uniform | lognormal",
    "a0": "baseline coefficient",
    "amplitude": "fluctuation amplitude A",
    "theta": "profile decay exponent",
    "s": "truncation dimension",
    "p0": "summability exponent, or auto",
    "h": "mesh width 1/M, fractions allowed",
    "kappa": "source: number or expression in x",
    "g": "functional representer: number or expression in x",
    "m": "log2 of the point count",
    "r": "number of random shifts",
    "seed": "master seed",
    "lambda": "weight exponent, or auto",
    "delta": "rate slack in (0, 1/2)",
    "b": "decay expression in j (construct only)",
    "m_list": "comma-separated log2 point counts for studies",
    "L": "multi-level depth",
    "h0": "coarsest multi-level mesh width, or auto",
}

_DEFAULTS = {
    "model": "uniform",
    "a0": "1",
    "amplitude": "0.5",
    "theta": "3",
    "s": "100",
    "p0": "auto",
    "h": "1/128",
    "kappa": "1",
    "g": "1",
    "m": "10",
    "r": "16",
    "seed": "0",
    "lambda": "auto",
    "delta": "0.1",
    "m_list": "7,8,9,10,11,12,13",
    "L": "3",
    "h0": "auto",
}

_EXPR_NAMES = {
    "log": math.log, "exp": math.exp, "sqrt": math.sqrt,
    "sin": math.sin, "cos": math.cos, "pi": math.pi,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment; unknown keys refused."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for key {key!r}")
        out[key] = value
    return out


def load_config(path: str | None) -> dict[str, str]:
    cfg = dict(_DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="ascii") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}")
        cfg.update(parse_config_text(text, source=path))
    return cfg


def _number(cfg: dict, key: str) -> float:
    """Float value; `p/q` fractions are accepted for mesh-width style keys."""
    raw = cfg[key]
    try:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"config key {key!r}: not a number: {raw!r}")


def _integer(cfg: dict, key: str) -> int:
    raw = cfg[key]
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"config key {key!r}: not an integer: {raw!r}")


def _auto_or_number(cfg: dict, key: str) -> float | None:
    return None if cfg[key].strip() == "auto" else _number(cfg, key)


def expression_function(expr: str, var: str):
    """Compile a one-variable arithmetic expression over a fixed namespace.

    Only `var` and log/exp/sqrt/sin/cos/pi may appear; no builtins leak in.
    """
    try:
        code = compile(expr, "<expression>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad expression {expr!r}: {exc.msg}")
    for name in code.co_names:
        if name != var and name not in _EXPR_NAMES:
            raise ConfigError(f"expression {expr!r}: name {name!r} is not allowed")

    def fn(value):
        scope = dict(_EXPR_NAMES)
        scope[var] = value
        return eval(code, {"__builtins__": {}}, scope)

    return fn


def _source_term(cfg: dict, key: str):
    """kappa/g config values: a plain number or an expression in x."""
    raw = cfg[key]
    try:
        return float(raw)
    except ValueError:
        return expression_function(raw, "x")


def build_field(cfg: dict):
    from . import pde

    model = cfg["model"]
    kwargs = dict(
        a0=_number(cfg, "a0"), amplitude=_number(cfg, "amplitude"),
        theta=_number(cfg, "theta"), s=_integer(cfg, "s"),
        p0=_auto_or_number(cfg, "p0"),
    )
    if model == "uniform":
        return pde.UniformField(**kwargs)
    if model == "lognormal":
        return pde.LognormalField(**kwargs)
    raise ConfigError(f"config key 'model': expected uniform or lognormal, got {model!r}")


def build_problem(cfg: dict):
    from . import estimators

    return estimators.DiffusionProblem(
        build_field(cfg), h=_number(cfg, "h"),
        kappa=_source_term(cfg, "kappa"), g=_source_term(cfg, "g"),
        r=_integer(cfg, "r"), delta=_number(cfg, "delta"),
        lam=_auto_or_number(cfg, "lambda"),
    )


# --- subcommands ------------------------------------------------------------------


def _merge_flag(cfg: dict, key: str, value) -> None:
    if value is not None:
        cfg[key] = str(value)


def cmd_construct(args) -> int:
    from . import cbc, theory

    cfg = load_config(args.config)
    for key in ("s", "m", "p0", "delta"):
        _merge_flag(cfg, key, getattr(args, key))
    _merge_flag(cfg, "lambda", getattr(args, "lam"))
    if args.b is not None:
        cfg["b"] = args.b

    s = _integer(cfg, "s")
    n = 1 << _integer(cfg, "m")
    delta = _number(cfg, "delta")
    parameters = {"delta": repr(delta)}

    if "b" in cfg:
        fn = expression_function(cfg["b"], "j")
        terms = []
        for j in range(1, s + 1):
            try:
                terms.append(float(fn(j)))
            except (ArithmeticError, TypeError) as exc:
                raise ConfigError(f"config key 'b': fails at j={j}: {exc}")
        p0 = _auto_or_number(cfg, "p0")
        if p0 is None:
            p0 = 2.0 / 3.0  # no field to derive it from; middle of (1/2, 1)
        decay = theory.DecayModel(terms, p0)
        parameters["b"] = cfg["b"]
    else:
        field = build_field(cfg)
        decay = field.decay_model()
        p0 = decay.p0
        parameters.update(model=cfg["model"], a0=repr(field.a0),
                          amplitude=repr(field.amplitude), theta=repr(field.theta))
    parameters["p0"] = repr(p0)

    lam = _auto_or_number(cfg, "lambda")
    if lam is None:
        lam = theory.choose_lambda(p0, delta)
    parameters["lambda"] = repr(lam)

    weights = theory.pod_weights(decay, lam)
    result = cbc.cbc_fast(n, s, weights)
    cbc.save_rule(args.out, result, parameters)
    print(f"n = {n}")
    print(f"s = {s}")
    print(f"lambda = {lam!r}")
    print(f"wce = {math.sqrt(result.wce_sq)!r}")
    print(f"wrote {args.out}")
    return 0


def _dump_rows(rows, out: str | None) -> None:
    text = "\n".join(" ".join(repr(float(v)) for v in row) for row in rows)
    if text:
        text += "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        from .points import _write_atomic

        _write_atomic(out, text)
        print(f"wrote {out}")


def cmd_points(args) -> int:
    from . import points

    if (args.z is None) == (args.cols is None):
        raise ConfigError("pass exactly one of --z or --cols")
    if args.z is not None:
        if args.n is None:
            raise ConfigError("--z needs --n (the point count of the rule)")
        rule = points.LatticeRule(args.n, points.read_vector_file(args.z))
        total = rule.n
        shift = None
        if args.shift_seed is not None:
            shift = points.draw_shifts(1, rule.s, args.shift_seed).shifts[0]
        block = points.generate_block(rule, shift)
    else:
        if args.shift_seed is not None:
            raise ConfigError("--shift-seed applies to lattice rules only")
        mats = points.read_matrix_file(args.cols)
        total = 1 << mats.m
        block = points.digital_block(mats, total)
    count = total if args.count is None else args.count
    if not 1 <= count <= total:
        raise ConfigError(f"--count must lie in 1..{total}, got {count}")
    _dump_rows(block[:count], args.out)
    return 0


def cmd_solve(args) -> int:
    import numpy as np

    from . import pde

    cfg = load_config(args.config)
    field = build_field(cfg)
    h = _number(cfg, "h")
    y = np.zeros(1)
    if args.y is not None:
        try:
            y = np.array([float(part) for part in args.y.split(",")], dtype=float)
        except ValueError:
            raise ConfigError(f"--y: expected comma-separated numbers, got {args.y!r}")
        if y.size > field.s:
            raise ConfigError(f"--y has {y.size} entries, field truncation is {field.s}")
    system = pde.solve(field, y, h, kappa=_source_term(cfg, "kappa"))
    value = pde.qoi(system, pde.Functional(_source_term(cfg, "g")))
    nodes = np.linspace(0.0, 1.0, system.cells + 1)
    _dump_rows(np.column_stack([nodes, system.values]), args.out)
    print(f"qoi = {value!r}")
    return 0


def cmd_study(args) -> int:
    from . import estimators

    cfg = load_config(args.config)
    for key in ("r", "seed", "m_list", "L", "h0"):
        _merge_flag(cfg, key, getattr(args, key))
    problem = build_problem(cfg)
    try:
        m_list = [int(part) for part in cfg["m_list"].split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"config key 'm_list': expected integers, got {cfg['m_list']!r}")
    if not m_list:
        raise ConfigError("config key 'm_list': empty")
    n_list = [1 << m for m in m_list]
    h0 = _auto_or_number(cfg, "h0")
    study = estimators.convergence_study(
        problem, args.method, n_list, r=_integer(cfg, "r"),
        seed=_integer(cfg, "seed"), schedule_L=_integer(cfg, "L"),
        schedule_h0=h0,
    )
    study.write_csv(args.out)
    slope = "undefined" if study.slope is None else repr(study.slope)
    model = problem.convergence_model()
    print(f"method = {args.method}")
    print(f"rows = {len(study.rows)}")
    print(f"slope = {slope}")
    print(f"predicted_rate = {model.rate!r}")
    print(f"wrote {args.out}")
    return 0


# --- driver -----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract wants 1
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latqmc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build a tailored generating vector")
    p.add_argument("--config", default=None)
    p.add_argument("--s", type=int, default=None, help="dimension override")
    p.add_argument("--m", type=int, default=None, help="log2 point count override")
    p.add_argument("--b", default=None, help="decay expression in j")
    p.add_argument("--p0", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", default=None)
    p.add_argument("--out", default="z.txt")
    p.set_defaults(run=cmd_construct)

    p = sub.add_parser("points", help="dump lattice or digital-net points")
    p.add_argument("--z", default=None, help="generating-vector file")
    p.add_argument("--n", type=int, default=None, help="point count of the rule")
    p.add_argument("--cols", default=None, help="generating-matrix file")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--shift-seed", type=int, default=None, dest="shift_seed")
    p.add_argument("--out", default=None)
    p.set_defaults(run=cmd_points)

    p = sub.add_parser("solve", help="solve at one parameter vector")
    p.add_argument("--config", default=None)
    p.add_argument("--y", default=None, help="comma-separated leading parameters")
    p.add_argument("--out", default=None)
    p.set_defaults(run=cmd_solve)

    p = sub.add_parser("study", help="convergence study, CSV output")
    p.add_argument("--config", default=None)
    p.add_argument("--method", choices=("qmc", "mc", "ml"), default="qmc")
    p.add_argument("--m-list", default=None, dest="m_list")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--h0", default=None)
    p.add_argument("--out", default="study.csv")
    p.set_defaults(run=cmd_study)

    return parser


def _apply_thread_env() -> None:
    value = os.environ.get("LATQMC_NUM_THREADS")
    if value:
        for key in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(key, value)


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LatticeQmcError, ValueError, ArithmeticError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
