"""Command-line front end.

Commands: ``predict``, ``simulate``, ``bell``, ``scan``, ``phase-demo`` and
``selftest``.  Every subcommand accepts the same flag set; flags override
values read from ``--config`` (``key = value`` lines), which override the
built-in defaults.

Exit status: 0 success, 1 usage or validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import __version__, bell, fock, localmc, wwmodel
from .errors import InputError, NumericalError

COMMANDS = ("predict", "simulate", "bell", "scan", "phase-demo", "selftest")
BACKENDS = ("fock", "ww", "mc", "all")
CSV_HEADER_COMMENT = f"# vacuum-bell-sim v{__version__}"
SCAN_COLUMNS = ("theta", "phi", "r_a", "r_b", "r_ab", "se_ab", "backend", "d", "trials", "seed")
PHASE_COLUMNS = ("spread_w", "cross_term", "signal_term", "theta", "phi", "d")

DEFAULTS = {
    "d": "0.1",
    "theta": math.pi / 4,
    "phi": math.pi / 8,
    "theta2": 0.0,
    "phi2": 3 * math.pi / 8,
    "trials": 1_000_000,
    "seed": 1,
    "backend": "all",
    "nmax": fock.DEFAULT_NMAX,
    "clamp": False,
    "window_k": 1,
    "eta_a": 1.0,
    "eta_b": 1.0,
    "grid": 9,
    "spread_max": 4 * math.pi,
    "out": None,
    "format": "table",
    "degrees": False,
}
ANGLE_KEYS = ("theta", "phi", "theta2", "phi2")
BOOL_KEYS = ("clamp", "degrees")


@dataclass
class RunSpec:
    command: str
    cfg: wwmodel.ExperimentConfig
    det: localmc.DetectorParams
    n_trials: int
    seed: int
    backend: str
    angles: bell.AngleSet
    n_max: int
    eta_a: float
    eta_b: float
    grid: int
    spread_max: float
    out: str | None
    fmt: str
    threads: int = field(default_factory=localmc.default_threads)

    @property
    def backends(self) -> tuple[str, ...]:
        return ("fock", "ww", "mc") if self.backend == "all" else (self.backend,)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _add_flags(p: argparse.ArgumentParser):
    s = argparse.SUPPRESS
    p.add_argument("--d", default=s, help="coupling D, real or complex like 0.1+0.02j (default 0.1)")
    p.add_argument("--theta", default=s, help="Alice polariser angle (default pi/4)")
    p.add_argument("--phi", default=s, help="Bob polariser angle (default pi/8)")
    p.add_argument("--theta2", default=s, help="second Alice angle for bell (default 0)")
    p.add_argument("--phi2", default=s, help="second Bob angle for bell (default 3pi/8)")
    p.add_argument("--trials", default=s, help="Monte Carlo trials per run (default 1e6)")
    p.add_argument("--seed", default=s, help="base seed (default 1)")
    p.add_argument("--backend", default=s, help="fock | ww | mc | all (default all)")
    p.add_argument("--nmax", default=s, help="Fock truncation per mode (default 3)")
    p.add_argument("--clamp", action="store_const", const=True, default=s, help="apply the positivity clamp")
    p.add_argument("--window-k", dest="window_k", default=s, help="sub-draws per detection window (default 1)")
    p.add_argument("--eta-a", dest="eta_a", default=s, help="Alice detection efficiency (default 1)")
    p.add_argument("--eta-b", dest="eta_b", default=s, help="Bob detection efficiency (default 1)")
    p.add_argument("--grid", default=s, help="number of grid points for scan / phase-demo (default 9)")
    p.add_argument("--spread-max", dest="spread_max", default=s, help="largest phase spread (default 4pi)")
    p.add_argument("--out", default=s, help="write output to this file instead of stdout")
    p.add_argument("--format", default=s, help="table | csv (default table; scan always writes csv)")
    p.add_argument("--degrees", action="store_const", const=True, default=s, help="angles are in degrees")
    p.add_argument("--config", default=s, help="file of key = value lines mirroring the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vacuum-bell-sim", description="Entangled-photon CH test in three formalisms.")
    parser.add_argument("--version", action="version", version=f"vacuum-bell-sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _add_flags(sub.add_parser(name))
    return parser


def read_config(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _float(name: str, raw) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InputError(f"--{name.replace('_', '-')} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"--{name.replace('_', '-')} must be finite, got {raw!r}")
    return value


def _int(name: str, raw, lo: int, hi: int | None = None) -> int:
    try:
        value = float(raw) if isinstance(raw, str) and any(c in raw for c in ".eE") else int(raw)
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError
            value = int(value)
    except (TypeError, ValueError, OverflowError):
        raise InputError(f"--{name.replace('_', '-')} must be an integer, got {raw!r}") from None
    if value < lo or (hi is not None and value > hi):
        bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        raise InputError(f"--{name.replace('_', '-')} must be {bound}, got {value}")
    return value


def _bool(name: str, raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InputError(f"{name} must be true or false, got {raw!r}")


def _complex(raw) -> complex:
    try:
        value = complex(str(raw).replace(" ", ""))
    except ValueError:
        raise InputError(f"--d must be a real or complex number, got {raw!r}") from None
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise InputError(f"--d must be finite, got {raw!r}")
    if not abs(value) < wwmodel.MAX_ABS_D:
        raise InputError(f"--d must satisfy |D| < {wwmodel.MAX_ABS_D}, got |D| = {abs(value)}")
    return value


def parse_spec(argv: Sequence[str]) -> RunSpec:
    ns = vars(build_parser().parse_args(list(argv)))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    merged = dict(read_config(config_path)) if config_path else {}
    merged.update(ns)
    raw = {**DEFAULTS, **merged}

    degrees = _bool("degrees", raw["degrees"])
    angles = {}
    for key in ANGLE_KEYS:
        value = _float(key, raw[key])
        if degrees and key in merged:
            value = math.radians(value)
        angles[key] = value

    d = _complex(raw["d"])
    backend = str(raw["backend"])
    if backend not in BACKENDS:
        raise InputError(f"--backend must be one of {', '.join(BACKENDS)}, got {backend!r}")
    fmt = str(raw["format"])
    if fmt not in ("table", "csv"):
        raise InputError(f"--format must be table or csv, got {fmt!r}")
    eta_a, eta_b = _float("eta_a", raw["eta_a"]), _float("eta_b", raw["eta_b"])
    for name, eta in (("eta-a", eta_a), ("eta-b", eta_b)):
        if not 0.0 <= eta <= 1.0:
            raise InputError(f"--{name} must lie in [0, 1], got {eta}")
    spread_max = _float("spread_max", raw["spread_max"])
    if spread_max < 0:
        raise InputError(f"--spread-max must be non-negative, got {spread_max}")
    clamp = _bool("clamp", raw["clamp"])
    det = localmc.DetectorParams(
        window_k=_int("window_k", raw["window_k"], 1),
        clamp=clamp,
        zpf_background=localmc.ZPF_INDEPENDENT if clamp else localmc.ZPF_NONE,
    )
    return RunSpec(
        command=command,
        cfg=wwmodel.ExperimentConfig(angles["theta"], angles["phi"], d),
        det=det,
        n_trials=_int("trials", raw["trials"], localmc.MIN_TRIALS),
        seed=_int("seed", raw["seed"], 0, 2**64 - 1),
        backend=backend,
        angles=bell.AngleSet(angles["theta"], angles["theta2"], angles["phi"], angles["phi2"]),
        n_max=_int("nmax", raw["nmax"], 2),
        eta_a=eta_a,
        eta_b=eta_b,
        grid=_int("grid", raw["grid"], 1),
        spread_max=spread_max,
        out=raw["out"],
        fmt=fmt,
    )


# -- formatting -------------------------------------------------------------------


def _num(x) -> str:
    return repr(float(x))


def _d_text(d: complex) -> str:
    return repr(d.real) if d.imag == 0 else str(d).strip("()")


def _table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in headers]] + [
        [f"{c:.6g}" if isinstance(c, float) else str(c) for c in row] for row in rows
    ]
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER_COMMENT + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def _source(spec: RunSpec, backend: str) -> bell.RateSource:
    return bell.make_source(
        backend, spec.cfg.d, n_max=spec.n_max, n_trials=spec.n_trials, seed=spec.seed, threads=spec.threads
    )


def _finite(*values: float):
    if not all(math.isfinite(v) for v in values):
        raise NumericalError("non-finite result")


# -- commands -----------------------------------------------------------------------


def cmd_predict(spec: RunSpec) -> str:
    cfg = spec.cfg
    rows = []
    for backend in spec.backends:
        if backend == "fock":
            r = fock.rates_hs(cfg.theta, cfg.phi, cfg.d, spec.n_max)
            label = "fock"
        elif backend == "ww":
            r = wwmodel.rates_ww(cfg)
            label = "ww"
        else:
            r = localmc.analytic_targets(cfg)
            label = "mc-target"
        _finite(*r)
        rows.append((label, *r))
    headers = ("backend", "r_a", "r_b", "r_ab")
    if spec.fmt == "csv":
        return _csv(headers, [(b, *map(_num, r)) for b, *r in rows])
    return _table(headers, rows)


def cmd_simulate(spec: RunSpec) -> str:
    cfg, det = spec.cfg, spec.det
    if det.clamp:
        study = localmc.clamp_study(cfg, det, spec.n_trials, spec.seed, threads=spec.threads)
        blocks = [("clamped", study.clamped), ("unclamped", study.unclamped), ("no-pump", study.baseline)]
    else:
        blocks = [("local", localmc.estimate_rates(cfg, det, spec.n_trials, spec.seed, threads=spec.threads))]
    for _, r in blocks:
        _finite(r.r_a, r.r_b, r.r_ab, r.se_a, r.se_b, r.se_ab)
    headers = ("model", "r_a", "se_a", "r_b", "se_b", "r_ab", "se_ab", "trials")
    rows = [(name, r.r_a, r.se_a, r.r_b, r.se_b, r.r_ab, r.se_ab, r.n_trials) for name, r in blocks]
    if spec.fmt == "csv":
        text = _csv(headers, [(row[0], *map(_num, row[1:7]), row[7]) for row in rows])
    else:
        text = _table(headers, rows)
    if det.clamp:
        text += f"clamp_activation_fraction = {study.activation_fraction!r}\n"
    return text


def cmd_bell(spec: RunSpec) -> str:
    rows = []
    for backend in spec.backends:
        rep = bell.ch_report(_source(spec, backend), spec.angles, spec.eta_a, spec.eta_b)
        _finite(rep.lhs, rep.rhs)
        margin = "" if rep.margin_se is None else rep.margin_se
        rows.append((backend, rep.lhs, rep.rhs, rep.ratio, "true" if rep.violated else "false", margin))
    headers = ("backend", "lhs", "rhs", "ratio", "violated", "margin_se")
    if spec.fmt == "csv":
        return _csv(headers, [(b, _num(l), _num(r), _num(q), v, "" if m == "" else _num(m)) for b, l, r, q, v, m in rows])
    a = spec.angles
    head = f"CH test  theta1={a.theta1:.6g} theta2={a.theta2:.6g} phi1={a.phi1:.6g} phi2={a.phi2:.6g}"
    head += f"  eta_a={spec.eta_a:g} eta_b={spec.eta_b:g}\n"
    return head + _table(headers, rows)


def scan_rows(spec: RunSpec) -> list[tuple]:
    grid = bell.AngleGrid.sweep(spec.grid, spec.cfg.phi, math.pi / 2)
    rows = []
    for backend in spec.backends:
        src = _source(spec, backend)
        for r in bell.angle_scan(src, grid):
            _finite(r.r_a, r.r_b, r.r_ab, r.se_ab)
            trials, seed = (spec.n_trials, spec.seed) if backend == "mc" else ("", "")
            rows.append(
                (_num(r.theta), _num(r.phi), _num(r.r_a), _num(r.r_b), _num(r.r_ab), _num(r.se_ab),
                 backend, _d_text(spec.cfg.d), trials, seed)
            )
    return rows


def cmd_scan(spec: RunSpec) -> str:
    return _csv(SCAN_COLUMNS, scan_rows(spec))


def cmd_phase_demo(spec: RunSpec) -> str:
    n = spec.grid
    spreads = [0.0] if n == 1 else [j * spec.spread_max / (n - 1) for j in range(n)]
    rows = localmc.phase_suppression_scan(spec.cfg, spreads)
    cfg = spec.cfg
    if spec.fmt == "table":
        return _table(("spread_w", "cross_term", "signal_term"), [(r.spread_w, r.cross_term, r.signal_term) for r in rows])
    return _csv(
        PHASE_COLUMNS,
        [(_num(r.spread_w), _num(r.cross_term), _num(r.signal_term), _num(cfg.theta), _num(cfg.phi), _d_text(cfg.d)) for r in rows],
    )


def selftest_checks(spec: RunSpec) -> list[tuple[str, bool, str]]:
    """Cross-backend equivalence checks at the configured D (small Monte Carlo budget)."""
    d = spec.cfg.d
    tol = 5 * abs(d) ** 4
    grid = [(j * math.pi / 8, k * math.pi / 8) for j in range(4) for k in range(4)]
    checks = []

    worst = max(
        abs(fock.rates_hs(t, p, d, spec.n_max)[2] - wwmodel.coincidence_rate_ww(wwmodel.ExperimentConfig(t, p, d)))
        for t, p in grid
    )
    checks.append(("fock-vs-ww coincidence", worst <= tol, f"max |diff| = {worst:.3g} (tol {tol:.3g})"))

    worst = max(
        abs(fock.rates_hs(t, p, d, spec.n_max)[0] - wwmodel.single_rates_ww(wwmodel.ExperimentConfig(t, p, d))[0])
        for t, p in grid
    )
    checks.append(("fock-vs-ww singles", worst <= 1e-12, f"max |diff| = {worst:.3g}"))

    cfg = spec.cfg
    ww = wwmodel.rates_ww(cfg)
    target = localmc.analytic_targets(cfg)
    ok = all(t == 0 and w == 0 or w / t == 2.0 for w, t in zip(ww, target))
    checks.append(("ww / local target = 2", ok, f"ww={ww[2]:.6g} local={target[2]:.6g}"))

    trials = min(spec.n_trials, 200_000)
    r = localmc.estimate_rates(cfg, localmc.DetectorParams(), trials, spec.seed, threads=spec.threads)
    z = abs(r.r_ab - target[2]) / r.se_ab if r.se_ab > 0 else (0.0 if r.r_ab == target[2] else math.inf)
    checks.append(("mc coincidence vs target", z <= 4, f"r_ab={r.r_ab:.6g} target={target[2]:.6g} z={z:.2f}"))

    rep = bell.ch_report(bell.ClosedFormSource(1.0))
    checks.append(("closed-form CH ratio", abs(rep.ratio - bell.CANONICAL_RATIO) <= 1e-12, f"ratio={rep.ratio:.12f}"))
    return checks


def cmd_selftest(spec: RunSpec) -> tuple[str, int]:
    checks = selftest_checks(spec)
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail in checks]
    failed = sum(not ok for _, ok, _ in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n", (0 if failed == 0 else 2)


HANDLERS: dict[str, Callable[[RunSpec], str]] = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "bell": cmd_bell,
    "scan": cmd_scan,
    "phase-demo": cmd_phase_demo,
}


def run(spec: RunSpec, stdout=None) -> int:
    stdout = stdout or sys.stdout
    status = 0
    if spec.command == "selftest":
        text, status = cmd_selftest(spec)
    else:
        text = HANDLERS[spec.command](spec)
    if spec.out:
        with open(spec.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_spec(argv))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
