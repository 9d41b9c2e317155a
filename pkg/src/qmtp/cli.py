"""Command-line front end.

Primary artifacts go to stdout (or ``--output``, written atomically);
diagnostics go to stderr. Exit status: 0 success, 2 bad input or
out-of-domain request, 3 internal numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import boost_one, calibrate as cal, extensions, ks, mtp_one, mtp_two, simlab
from .io import InputError, atomic_write_text, format_csv, read_rows
from .models import NullModel, RejectionSet, Sample
from .rng import RngStream, fresh_seed

log = logging.getLogger("qmtp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

METHODS_1S = ("dirichlet", "ks", "weighted_ks", "stepdown", "pretest_stepdown")
METHODS_2S = ("dirichlet", "ks", "joint", "stepdown", "pretest_stepdown")


@dataclass
class RunConfig:
    """Parsed options for one invocation."""

    subcommand: str
    alpha: float = 0.1
    sides: str = "two_sided"
    method: str = "dirichlet"
    source: str = "auto"
    null: str | None = None
    inputs: list = field(default_factory=list)
    output: str | None = None
    fmt: str = "json"
    seed: int | None = None
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        allowed = {"test1": METHODS_1S, "test2": METHODS_2S}.get(self.subcommand)
        if allowed is not None and self.method not in allowed:
            raise ValueError(f"method {self.method!r} is not available for {self.subcommand}; "
                             f"choose from {', '.join(allowed)}")

    def stream(self) -> RngStream:
        if self.seed is None:
            self.seed = fresh_seed()
            log.warning("no --seed given; using seed %d", self.seed)
        return RngStream(int(self.seed))


# ------------------------------------------------------------------ input


def _numbers(path: str) -> np.ndarray:
    _, rows = read_rows(path)
    out = []
    for ln, r in rows:
        try:
            out.append(float(r[0]))
        except ValueError as exc:
            raise InputError(f"{path}: line {ln}: not a number: {r[0]!r}") from exc
    return np.asarray(out)


def _two_groups(path: str) -> tuple[np.ndarray, np.ndarray]:
    header, rows = read_rows(path)
    vi, gi = 0, 1
    if header is not None:
        h = [c.lower() for c in header]
        if "value" in h and "group" in h:
            vi, gi = h.index("value"), h.index("group")
    groups: dict[str, list[float]] = {"x": [], "y": []}
    for ln, r in rows:
        if len(r) <= max(vi, gi):
            raise InputError(f"{path}: line {ln}: expected value,group")
        g = r[gi].lower()
        if g not in groups:
            raise InputError(f"{path}: line {ln}: group must be x or y, got {r[gi]!r}")
        try:
            groups[g].append(float(r[vi]))
        except ValueError as exc:
            raise InputError(f"{path}: line {ln}: not a number: {r[vi]!r}") from exc
    if not groups["x"] or not groups["y"]:
        raise InputError(f"{path}: both groups x and y need at least one observation")
    return np.asarray(groups["x"]), np.asarray(groups["y"])


def _matrix(path: str, min_cols: int) -> np.ndarray:
    _, rows = read_rows(path)
    width = len(rows[0][1])
    if width < min_cols:
        raise InputError(f"{path}: need at least {min_cols} columns, got {width}")
    out = []
    for ln, r in rows:
        if len(r) != width:
            raise InputError(f"{path}: line {ln}: expected {width} columns, got {len(r)}")
        try:
            out.append([float(c) for c in r])
        except ValueError as exc:
            raise InputError(f"{path}: line {ln}: non-numeric field") from exc
    return np.asarray(out)


def _reps(cfg: "RunConfig", default: int) -> int:
    r = cfg.extra.get("reps")
    if r is not None and r < 1:
        raise InputError("--reps must be positive")
    return default if r is None else int(r)


def _floats(s: str | None) -> list[float] | None:
    if s is None:
        return None
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {s!r}") from exc


# ------------------------------------------------------------------ output


def _rejections(rs: RejectionSet) -> dict:
    return json.loads(rs.to_json())


def _band_csv(band) -> str:
    return format_csv(("r", "lower", "upper"), band.rows())


def _bands_csv(bx, by) -> str:
    rows = [(r, lx, ux, ly, uy) for (r, lx, ux), (_, ly, uy) in zip(bx.rows(), by.rows())]
    return format_csv(("r", "x_lower", "x_upper", "y_lower", "y_upper"), rows)


def _emit(cfg: RunConfig, payload: dict, csv_text: str | None = None) -> None:
    if cfg.fmt == "csv":
        if csv_text is None:
            raise ValueError("this command has no CSV output; use --format json")
        text = csv_text
    else:
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
    if cfg.output:
        atomic_write_text(cfg.output, text)
        log.info("wrote %s", cfg.output)
    else:
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _finite(x: np.ndarray) -> list:
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(x, float)]


# --------------------------------------------------------------- commands


def cmd_test1(cfg: RunConfig) -> int:
    if cfg.null is None:
        raise InputError("--null is required (e.g. uniform:0,1 or table:path)")
    null = NullModel.parse(cfg.null)
    sample = Sample.of(_numbers(cfg.inputs[0]))
    n = sample.n
    out: dict = {"command": "test1", "method": cfg.method, "alpha": cfg.alpha, "sides": cfg.sides,
                 "n": n, "null": null.to_dict()}
    calib = None
    if cfg.method in ("dirichlet", "stepdown", "pretest_stepdown"):
        rng = cfg.stream() if cfg.source == "monte_carlo" else None
        calib = cal.calibrate_1s(cfg.alpha, n, cfg.sides, cfg.source, rng=rng, workers=cfg.threads)
        out["calibration"] = calib.to_dict()
        log.info("tilde_alpha=%.6g (%s)", calib.tilde_alpha, calib.source)
    if cfg.method == "dirichlet":
        rs = mtp_one.run_mtp_1s(sample, null, calib)
        out["p_value"] = mtp_one.gof_pvalue_1s(sample, null, cfg.sides).to_dict()
    elif cfg.method == "stepdown":
        res = (boost_one.stepdown_1s_two_sided if cfg.sides == "two_sided" else boost_one.stepdown_1s)(
            sample, null, calib)
        rs = res.rejections
        out["trace"] = res.trace
    elif cfg.method == "pretest_stepdown":
        if cfg.sides == "two_sided":
            raise ValueError("pretest_stepdown needs --sides lower or upper")
        res, pre = boost_one.pretest_then_stepdown_1s(sample, null, calib)
        rs = res.rejections
        out["trace"] = res.trace
        out["pretest"] = {"alpha_p": pre.alpha_p, "tilde_alpha_p": pre.tilde_alpha_p,
                          "survivors": pre.survivors, "rejections": _rejections(pre.rejections)}
    elif cfg.method == "ks":
        mode = cfg.extra.get("ks_mode", "exact")
        r = ks.ks_mtp_1s(sample, null, cfg.alpha, cfg.sides, mode, _reps(cfg, 1_000_000),
                         cfg.stream() if mode == "exact" else None)
        rs = r.rejections
        out["ks"] = {k: v for k, v in r.to_dict().items() if k != "rejections"}
        out["p_value"] = {"p": r.p_value, "statistic": r.statistic, "method": f"ks_{mode}"}
    else:
        if cfg.sides != "two_sided":
            raise ValueError("weighted_ks is two-sided only")
        r = ks.weighted_ks_mtp_1s(sample, null, cfg.alpha, _reps(cfg, 1_000_000), cfg.stream())
        rs = r.rejections
        out["ks"] = {k: v for k, v in r.to_dict().items() if k != "rejections"}
        out["p_value"] = {"p": r.p_value, "statistic": r.statistic, "method": "weighted_ks"}
    out["rejections"] = _rejections(rs)
    band_csv = None
    if calib is not None:
        band = mtp_one.confidence_band_1s(sample, calib=calib)
        out["band"] = {"breaks": band.breaks, "lower": band.lower, "upper": band.upper}
        band_csv = _band_csv(band)
    _emit(cfg, out, band_csv)
    return EXIT_OK


def _calibrate_2s(cfg: RunConfig, nx: int, ny: int, sides: str | None = None):
    sides = sides or cfg.sides
    c = cal.calibrate_2s(cfg.alpha, nx, ny, sides, cfg.source, _reps(cfg, 200_000), cfg.stream())
    extra = "" if c.mc_meta is None else f", {json.dumps(c.mc_meta)}"
    log.warning("tilde_alpha=%.6g from %s%s", c.tilde_alpha, c.source, extra)
    return c


def _two_sample_payload(cfg: RunConfig, x: np.ndarray, y: np.ndarray, out: dict) -> tuple[dict, str | None]:
    xs, ys = Sample.of(x), Sample.of(y)
    out.update({"method": cfg.method, "alpha": cfg.alpha, "sides": cfg.sides, "nx": xs.n, "ny": ys.n})
    csv_text = None
    if cfg.method == "dirichlet":
        c = _calibrate_2s(cfg, xs.n, ys.n)
        out["calibration"] = c.to_dict()
        out["rejections"] = _rejections(mtp_two.run_mtp_2s(xs, ys, c))
        p = mtp_two.gof_pvalue_2s(xs, ys, cfg.sides, "auto", _reps(cfg, 200_000),
                                  cfg.stream().child("pvalue"))
        out["p_value"] = {"p": p, "method": "critical_level"}
        bx, by = mtp_two.bands_2s(xs, ys, c)
        out["bands"] = {"breaks": bx.breaks, "x_lower": bx.lower, "x_upper": bx.upper,
                        "y_lower": by.lower, "y_upper": by.upper}
        csv_text = _bands_csv(bx, by)
    elif cfg.method == "ks":
        mode = cfg.extra.get("ks_mode", "exact")
        r = ks.ks_mtp_2s(xs, ys, cfg.alpha, cfg.sides, mode)
        out["rejections"] = _rejections(r.rejections)
        out["ks"] = {k: v for k, v in r.to_dict().items() if k != "rejections"}
        out["p_value"] = {"p": r.p_value, "statistic": r.statistic, "method": f"ks_{mode}"}
    else:
        M = cfg.extra.get("joint_reps", 20_000)
        if cfg.method == "joint":
            r = mtp_two.joint_quantile_ci_2s(xs, ys, cfg.alpha, cfg.sides, M, cfg.stream())
        elif cfg.method == "stepdown":
            r = mtp_two.stepdown_2s(xs, ys, cfg.alpha, cfg.sides, M, cfg.stream())
        else:
            r = mtp_two.pretest_then_stepdown_2s(xs, ys, cfg.alpha, cfg.sides, M, cfg.stream())
        out["rejections"] = _rejections(r.rejections)
        out["joint"] = {"taus": r.taus, "ci_lower": _finite(r.ci_lower), "ci_upper": _finite(r.ci_upper),
                        "tilde_alpha": r.tilde_alpha, "trace": r.trace}
        out["p_value"] = None
    return out, csv_text


def cmd_test2(cfg: RunConfig) -> int:
    x, y = _two_groups(cfg.inputs[0])
    out, csv_text = _two_sample_payload(cfg, x, y, {"command": "test2"})
    _emit(cfg, out, csv_text)
    return EXIT_OK


def cmd_rd(cfg: RunConfig) -> int:
    m = _matrix(cfg.inputs[0], 2)
    spec = extensions.RdSpec(m[:, 0], m[:, 1], cfg.extra["cutoff"], cfg.extra["q"])
    li, ri = extensions.select_rd(spec)
    out = {"command": "rd", "cutoff": spec.cutoff, "q": spec.q,
           "left_index": li, "right_index": ri}
    out, csv_text = _two_sample_payload(cfg, spec.y[li], spec.y[ri], out)
    _emit(cfg, out, csv_text)
    return EXIT_OK


def cmd_cond(cfg: RunConfig) -> int:
    m = _matrix(cfg.inputs[0], 3)
    x0 = _floats(cfg.extra["x0"])
    disc = cfg.extra.get("discrete")
    d = None
    if disc:
        d = np.zeros(m.shape[1] - 2, bool)
        for i in disc.split(","):
            j = int(i) - 1
            if not 0 <= j < d.size:
                raise InputError(f"--discrete index {i} is not a covariate column (1..{d.size})")
            d[j] = True
    q0 = cfg.extra["q0"] if cfg.extra["q0"] is not None else cfg.extra["q"]
    q1 = cfg.extra["q1"] if cfg.extra["q1"] is not None else cfg.extra["q"]
    if q0 is None or q1 is None:
        raise InputError("give --q or both --q0 and --q1")
    spec = extensions.CondSpec(m[:, 0], m[:, 1], m[:, 2:], x0, q0, q1, d, _floats(cfg.extra.get("weights")))
    i0, i1 = extensions.select_conditional(spec)
    if spec.notes.get("cell_mismatch"):
        log.warning("some selected points differ from x0 in a discrete covariate")
    out = {"command": "cond", "x0": x0, "q0": spec.q0, "q1": spec.q1, "control_index": i0,
           "treated_index": i1, "cell_mismatch": spec.notes["cell_mismatch"]}
    out, csv_text = _two_sample_payload(cfg, spec.y[i0], spec.y[i1], out)
    _emit(cfg, out, csv_text)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig) -> int:
    n, nx, ny = cfg.extra["n"], cfg.extra["nx"], cfg.extra["ny"]
    if n is not None:
        rng = cfg.stream() if cfg.source == "monte_carlo" else None
        c = cal.calibrate_1s(cfg.alpha, n, cfg.sides, cfg.source, rng=rng, workers=cfg.threads)
    elif nx is not None and ny is not None:
        c = _calibrate_2s(cfg, nx, ny)
    else:
        raise InputError("give --n for one sample or --nx and --ny for two samples")
    _emit(cfg, c.to_dict())
    return EXIT_OK


def cmd_table(cfg: RunConfig) -> int:
    path = cfg.extra.get("table") or str(cal.default_table_path())
    try:
        table = cal.ReferenceTable.load(path)
    except InputError:
        table = cal.ReferenceTable()
        log.warning("starting a new reference table at %s", path)
    alphas = cfg.extra["alphas"] or [cfg.alpha]
    nx, ny = cfg.extra["nx"], cfg.extra["ny"]
    if nx is None or ny is None:
        raise InputError("table generate needs --nx and --ny")
    calibs = cal.calibrate_2s_many(alphas, nx, ny, "two_sided", "auto", _reps(cfg, 200_000),
                                   cfg.stream())
    for c in calibs:
        table.add(c)
    table.save(cfg.output or path)
    rows = [json.loads(json.dumps(c.to_dict())) for c in calibs]
    sys.stdout.write(json.dumps({"table": str(cfg.output or path), "rows": rows}, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    rep = simlab.run_scenario(cfg.extra["scenario"], _reps(cfg, 1000), cfg.stream())
    _emit(cfg, rep.to_dict(), rep.to_csv())
    return EXIT_OK


COMMANDS = {"test1": cmd_test1, "test2": cmd_test2, "rd": cmd_rd, "cond": cmd_cond,
            "calibrate": cmd_calibrate, "table": cmd_table, "simulate": cmd_simulate}


# ----------------------------------------------------------------- parser


def _sides(s: str) -> str:
    return s.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=0.1)
    common.add_argument("--sides", type=_sides, default="two_sided", choices=("lower", "upper", "two_sided"))
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--output", "-o")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
    common.add_argument("--source", choices=("auto", "formula", "monte_carlo", "table"), default="auto",
                        help="where the pointwise level comes from")
    common.add_argument("--reps", type=int, help="Monte Carlo replications (default depends on the task)")
    common.add_argument("--ks-mode", choices=ks.MODES, default="exact")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qmtp", description="Quantile multiple testing with FWER control.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    t1 = sub.add_parser("test1", parents=[common], help="one sample against a null distribution")
    t1.add_argument("input")
    t1.add_argument("--null")
    t1.add_argument("--method", choices=METHODS_1S, default="dirichlet")

    t2 = sub.add_parser("test2", parents=[common], help="two independent samples (value,group)")
    t2.add_argument("input")
    t2.add_argument("--method", choices=METHODS_2S, default="dirichlet")
    t2.add_argument("--joint-reps", type=int, default=20_000)

    rd = sub.add_parser("rd", parents=[common], help="distributional discontinuity at a cutoff (y,z)")
    rd.add_argument("input")
    rd.add_argument("--cutoff", type=float, required=True)
    rd.add_argument("--q", type=int, required=True)
    rd.add_argument("--method", choices=METHODS_2S, default="dirichlet")
    rd.add_argument("--joint-reps", type=int, default=20_000)

    cd = sub.add_parser("cond", parents=[common], help="conditional comparison near x0 (y,t,x1..xd)")
    cd.add_argument("input")
    cd.add_argument("--x0", required=True, help="comma-separated covariate values")
    cd.add_argument("--q", type=int)
    cd.add_argument("--q0", type=int)
    cd.add_argument("--q1", type=int)
    cd.add_argument("--discrete", help="comma-separated 1-based covariate columns that must match")
    cd.add_argument("--weights", help="comma-separated covariate weights")
    cd.add_argument("--method", choices=METHODS_2S, default="dirichlet")
    cd.add_argument("--joint-reps", type=int, default=20_000)

    c = sub.add_parser("calibrate", parents=[common], help="print a calibration")
    c.add_argument("--n", type=int)
    c.add_argument("--nx", type=int)
    c.add_argument("--ny", type=int)

    tb = sub.add_parser("table", help="maintain the two-sample reference table")
    tsub = tb.add_subparsers(dest="action", required=True)
    tg = tsub.add_parser("generate", parents=[common], help="add or replace rows")
    tg.add_argument("--nx", type=int, required=True)
    tg.add_argument("--ny", type=int, required=True)
    tg.add_argument("--alphas", help="comma-separated alphas (default: --alpha)")
    tg.add_argument("--table", help="table file (default: QMTP_TABLE_PATH or the bundled table)")

    s = sub.add_parser("simulate", parents=[common], help="run a simulation scenario")
    s.add_argument("--scenario", choices=simlab.SCENARIOS, required=True)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    extra = {k: v for k, v in vars(ns).items()
             if k not in ("subcommand", "alpha", "sides", "method", "source", "null", "input", "output",
                          "fmt", "seed", "threads", "verbose", "action")}
    if "alphas" in extra:
        extra["alphas"] = _floats(extra["alphas"])
    return RunConfig(ns.subcommand, ns.alpha, ns.sides, getattr(ns, "method", "dirichlet"), ns.source,
                     getattr(ns, "null", None), [ns.input] if hasattr(ns, "input") else [],
                     ns.output, ns.fmt, ns.seed, ns.threads, extra)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="qmtp: %(message)s", stream=sys.stderr)
    warnings.simplefilter("default")
    logging.captureWarnings(True)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.subcommand](cfg)
    except cal.CalibrationFailure as exc:
        log.error("calibration failed: %s", exc)
        return EXIT_NUMERIC
    except (InputError, ValueError, cal.TableKeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        log.error("%s", msg)
        return EXIT_INPUT
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
