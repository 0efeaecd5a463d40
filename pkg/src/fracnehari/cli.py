"""Command line runner: ``python -m fracnehari --mode solve|sweep|check|selftest``.

Exit codes: 0 success, 1 failed hypothesis check or selftest, 2 solver did
not converge, 3 configuration error, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import energy as en
from . import nehari as nh
from .energy import ProblemConfig
from .errors import ConfigError, FracNehariError, GroundStateError
from .nonlinearity import check_hypotheses, parse_nonlinearity

log = logging.getLogger("fracnehari")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_STAGNATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3, 4
ENV_PREFIX = "FRAC_NEHARI_"
SWEEP_AXES = ("alpha", "p", "a", "b", "n")

_FLOAT_KEYS = ("alpha", "p", "a", "b", "T", "root_tol", "manifold_tol", "grad_tol")
_INT_KEYS = ("n", "restarts", "seed", "max_iters")
KEYS = _FLOAT_KEYS + _INT_KEYS + ("nonlinearity",)


def parse_pairs(text: str) -> dict:
    """``key = value`` lines with ``#`` comments into a raw string dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key=key)
        raw[key] = value
    return raw


def _convert(key: str, value: str):
    try:
        if key in _INT_KEYS:
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError
            return int(as_float)
        return float(value)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}", key=key) from None


def config_from_raw(raw: dict, check_hypotheses: bool = True) -> ProblemConfig:
    for key in raw:
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key)
    kw = {k: _convert(k, v) for k, v in raw.items() if k != "nonlinearity"}
    p = kw.get("p", 2.0)
    if not p > 1:
        raise ConfigError(f"p must exceed 1, got {p}", key="p")
    alpha = kw.get("alpha", 1.0)
    if not alpha * p > 1:
        raise ConfigError(f"alpha ≤ 1/p: alpha={alpha} must exceed 1/p={1 / p}", key="alpha")
    nl_text = raw.get("nonlinearity")
    if nl_text is not None:
        kw["nl"] = parse_nonlinearity(nl_text, p)
    return ProblemConfig(check_hypotheses=check_hypotheses, **kw)


def parse_config(text: str, check_hypotheses: bool = True) -> ProblemConfig:
    """Validated :class:`ProblemConfig` from a ``key = value`` document."""
    return config_from_raw(parse_pairs(text), check_hypotheses)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    by_upper = {k.upper(): k for k in KEYS}
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            suffix = name[len(ENV_PREFIX):].upper()
            if suffix not in by_upper:
                raise ConfigError(f"environment variable {name} names no config key", key=suffix)
            out[by_upper[suffix]] = value
    return out


def parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in KEYS:
            raise ConfigError(f"--set: unknown key {k!r}", key=k)
        out[k] = v
    return out


def sweep_values(axis_spec: str) -> tuple[str, list]:
    """``key=start:stop:step`` (inclusive) or ``key=v1,v2,...``."""
    if "=" not in axis_spec:
        raise ConfigError(f"--sweep expects key=start:stop:step, got {axis_spec!r}")
    key, body = (s.strip() for s in axis_spec.split("=", 1))
    if key not in SWEEP_AXES:
        raise ConfigError(f"cannot sweep {key!r}; axes are {SWEEP_AXES}", key=key)
    if ":" in body:
        try:
            start, stop, step = (float(s) for s in body.split(":"))
        except ValueError:
            raise ConfigError(f"bad sweep range {body!r}", key=key) from None
        if not step > 0 or stop < start:
            raise ConfigError(f"sweep range {body!r} needs step > 0 and stop >= start", key=key)
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        try:
            values = [float(s) for s in body.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bad sweep list {body!r}", key=key) from None
    if key == "n":
        values = [int(v) for v in values]
    return key, sorted(values)


def fmt(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, trim="-")


def solution_csv(cfg: ProblemConfig, values) -> str:
    buf = io.StringIO()
    buf.write("t,u\n")
    full = np.concatenate(([0.0], np.asarray(values, float), [0.0]))
    for t, u in zip(cfg.grid.nodes, full):
        buf.write(f"{fmt(t)},{fmt(u)}\n")
    return buf.getvalue()


def read_solution_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["t", "u"]:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def _plain(x):
    return float(x) if isinstance(x, (float, np.floating)) else x


def report_dict(cfg: ProblemConfig, rep: nh.SolveReport, trace: bool = False) -> dict:
    out = {
        "config_echo": cfg.echo(),
        "converged": rep.converged,
        "energy_m": rep.energy_m,
        "sigma": rep.sigma_bound,
        "rho": rep.rho,
        "delta": rep.delta,
        "epsilon": rep.epsilon,
        "m_u": rep.m_u,
        "norm_E": rep.norm_E,
        "norm_sup": rep.norm_sup,
        "norm_bound": rep.norm_bound,
        "grad_residual": rep.grad_residual,
        "nehari_residual": rep.nehari_residual,
        "iterations": rep.iterations,
        "restarts_used": rep.restarts_used,
        "seed": rep.seed,
        "failures": rep.failures,
        "hypothesis_report": cfg.hypothesis_report.to_dict(),
    }
    if trace:
        out["trace"] = [
            {"energy": e.energy, "s": e.s, "residual": e.residual, "norm_E": e.norm_E}
            for e in rep.trace
        ]
    return {k: _plain(v) for k, v in out.items()}


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunSpec:
    mode: str = "solve"
    raw: dict = field(default_factory=dict)
    sweep: str | None = None
    out: Path = Path("out")
    seed: int | None = None
    trace: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in ("solve", "sweep", "check", "selftest"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if (self.mode == "sweep") != (self.sweep is not None):
            raise ConfigError("--sweep is required in sweep mode and only allowed there")

    def merged(self) -> dict:
        raw = dict(self.raw)
        if self.seed is not None:
            raw["seed"] = str(self.seed)
        return raw


def solve_one(cfg: ProblemConfig, out_dir: Path, trace: bool) -> tuple[int, dict | None]:
    try:
        rep = nh.ground_state(cfg)
    except GroundStateError as exc:
        log.error("%s: %s", exc, "; ".join(exc.failures[:3]))
        return EXIT_STAGNATION, None
    report = report_dict(cfg, rep, trace)
    write_atomic(out_dir / "solution.csv", solution_csv(cfg, rep.solution.values))
    write_atomic(out_dir / "report.json", dumps(report))
    return (EXIT_OK if rep.converged else EXIT_STAGNATION), report


def run_solve(spec: RunSpec) -> int:
    cfg = config_from_raw(spec.merged())
    code, report = solve_one(cfg, spec.out, spec.trace)
    if report is not None:
        log.info("energy_m=%s grad_residual=%s iterations=%s",
                 report["energy_m"], report["grad_residual"], report["iterations"])
    return code


def _sweep_point(args):
    raw, index, out_dir, trace = args
    try:
        cfg = config_from_raw(raw)
    except ConfigError as exc:
        return index, "skipped", str(exc), None
    try:
        code, report = solve_one(cfg, out_dir, trace)
    except FracNehariError as exc:
        return index, "failed", str(exc), None
    status = "converged" if code == EXIT_OK else "not_converged"
    return index, status, "", report


def run_sweep(spec: RunSpec) -> int:
    key, values = sweep_values(spec.sweep)
    base = spec.merged()
    tasks = []
    for i, v in enumerate(values):
        raw = dict(base, **{key: str(v)})
        tasks.append((raw, i, spec.out / f"point_{i:03d}", spec.trace))
    if spec.jobs > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, "status", "energy_m", "sigma", "grad_residual", "iterations", "reason"])
    for (i, status, reason, report), v in zip(results, values):
        if report is None:
            w.writerow([v, status, "", "", "", "", reason])
        else:
            w.writerow([v, status, repr(report["energy_m"]), repr(report["sigma"]),
                        repr(report["grad_residual"]), report["iterations"], reason])
    write_atomic(spec.out / "index.csv", buf.getvalue())
    return EXIT_OK


def run_check(spec: RunSpec, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    raw = spec.merged()
    cfg = config_from_raw(raw, check_hypotheses=False)
    report = check_hypotheses(cfg.nl, cfg.p, cfg.T)
    stream.write(dumps({"nonlinearity": cfg.nl.spec, "p": cfg.p, "T": cfg.T, **report.to_dict()}))
    return EXIT_OK if report.ok else EXIT_CHECK_FAILED


def run_selftest(stream=None) -> int:
    """Fast numerical self-checks; one line per check."""
    from .selftest import run_all

    stream = sys.stdout if stream is None else stream
    results = run_all()
    for name, ok, detail in results:
        stream.write(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracnehari", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="key = value configuration file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (repeatable)")
    ap.add_argument("--mode", default="solve", choices=["solve", "sweep", "check", "selftest"])
    ap.add_argument("--sweep", metavar="KEY=START:STOP:STEP", help="sweep axis (alpha, p, a, b, n)")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--trace", action="store_true", help="include the iteration trace in the report")
    ap.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                log.error("cannot read config: %s", exc)
                return EXIT_IO
            raw.update(parse_pairs(text))
        raw.update(env_overrides())
        raw.update(parse_set(args.set))
        spec = RunSpec(mode=args.mode, raw=raw, sweep=args.sweep, out=args.out,
                       seed=args.seed, trace=args.trace, jobs=args.jobs)
        if spec.mode == "solve":
            return run_solve(spec)
        if spec.mode == "sweep":
            return run_sweep(spec)
        if spec.mode == "check":
            return run_check(spec)
        return run_selftest()
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
