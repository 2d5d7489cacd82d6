"""Command-line sweeps, CSV output and decoder run-time benchmark.

    python -m ccs_amp --case 3,4 --ebno 2.5:0.5:4.5 --trials 25 --out fig.csv
    python -m ccs_amp --bench --trials 10

Flags override ``--config`` file values, which override the defaults.
Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .amp import CASES, decode, operator_kind
from .channel import gen_trial, run_point, run_trial
from .fwht import make_operator
from .params import ConfigError, SystemParams

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

CSV_HEADER = "case,ebno_db,trials,pupe,stderr,mean_trial_seconds,seed"
BENCH_HEADER = "case,ebno_db,trials,mean_trial_seconds,normalized"


@dataclass(frozen=True)
class RunConfig:
    cases: tuple = CASES
    ebno: tuple = tuple(np.round(np.arange(1.5, 4.5 + 1e-9, 0.25), 10).tolist())
    trials: int = 100
    K: int = 100
    w: int = 128
    L: int = 16
    v: int = 16
    n: int = 38400
    iters: int = 10
    list_size: int | None = None
    beam_cap: int | None = None
    seed: int = 0
    out: str = "-"
    threads: int = 1
    bench: bool = False
    record_times: bool = False

    def params(self, ebno_db: float | None = None) -> SystemParams:
        return SystemParams(K=self.K, w=self.w, L=self.L, v=self.v, n=self.n,
                            ebno_db=self.ebno[0] if ebno_db is None else ebno_db,
                            iters=self.iters, list_size=self.list_size, beam_cap=self.beam_cap)

    def validate(self) -> "RunConfig":
        if not self.ebno:
            raise ConfigError("the Eb/N0 grid is empty")
        if not self.cases or any(c not in CASES for c in self.cases):
            raise ConfigError(f"cases must be a nonempty subset of {CASES} (got {self.cases})")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1 (got {self.trials})")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1 (got {self.threads})")
        if self.bench and tuple(sorted(set(self.cases))) != CASES:
            raise ConfigError("benchmark mode needs all four cases")
        self.params()
        return self


def parse_grid(text: str) -> tuple:
    """``"3.0"``, ``"2.5,3,3.5"`` or an inclusive range ``"start:step:stop"``."""
    text = text.strip()
    try:
        if ":" in text:
            start, step, stop = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ConfigError(f"grid step must be positive in {text!r}")
            count = math.floor((stop - start) / step + 1e-9) + 1
            return tuple(round(start + i * step, 10) for i in range(max(count, 0)))
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad Eb/N0 grid {text!r}: {exc}") from None


def parse_cases(text: str) -> tuple:
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"bad case list {text!r}") from None


def _as_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _optional_int(text):
    return None if str(text).strip().lower() in ("", "none", "auto") else int(text)


_CONVERTERS = {
    "cases": parse_cases, "ebno": parse_grid, "trials": int, "K": int, "w": int, "L": int,
    "v": int, "n": int, "iters": int, "list_size": _optional_int, "beam_cap": _optional_int,
    "seed": int, "out": str, "threads": int, "bench": _as_bool, "record_times": _as_bool,
}
_ALIASES = {"case": "cases", "k": "K", "l": "L", "t": "iters", "ebno_db": "ebno"}


def _canonical_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    key = _ALIASES.get(key, _ALIASES.get(key.lower(), key))
    if key not in _CONVERTERS:
        raise ConfigError(f"unknown configuration key {key!r}")
    return key


def read_config_file(path: str) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
    values = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value")
        key, val = line.split("=", 1)
        key = _canonical_key(key)
        try:
            values[key] = _CONVERTERS[key](val.strip())
        except ValueError:
            raise ConfigError(f"{path}:{num}: bad value for {key}: {val.strip()!r}") from None
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ccs-amp", description="Coded compressed sensing decoder sweeps.",
                 argument_default=argparse.SUPPRESS, allow_abbrev=False)
    ap.add_argument("--case", dest="cases", type=parse_cases, help="comma list of cases 1-4")
    ap.add_argument("--ebno", type=parse_grid, help="Eb/N0 in dB: list a,b,c or range start:step:stop")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int, help="base seed; trial i uses seed+i")
    ap.add_argument("--iters", type=int, help="AMP iterations")
    ap.add_argument("--list-size", dest="list_size", type=_optional_int)
    ap.add_argument("--beam-cap", dest="beam_cap", type=_optional_int)
    ap.add_argument("--out", help="CSV path, '-' for stdout")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--bench", action="store_true", help="normalized decoder run-time table")
    ap.add_argument("--record-times", dest="record_times", action="store_true",
                    help="fill the timing column (makes the CSV machine dependent)")
    ap.add_argument("--config", dest="config_file", help="key=value configuration file")
    for name in ("K", "w", "L", "v", "n"):
        flags = [f"--{name}"] if name == name.lower() else [f"--{name}", f"--{name.lower()}"]
        ap.add_argument(*flags, dest=name, type=int)
    return ap


def parse_config(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    values = {}
    path = ns.pop("config_file", None)
    if path is not None:
        values.update(read_config_file(path))
    values.update(ns)
    cfg = RunConfig()
    if values.get("bench") and "ebno" not in values:
        values["ebno"] = (3.0,)
    return replace(cfg, **values).validate()


def _fmt(x) -> str:
    return format(x, ".6g")


def format_results(rows, record_times: bool = True) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in rows:
        secs = _fmt(r.mean_seconds) if record_times else ""
        buf.write(f"{r.case},{_fmt(r.ebno_db)},{r.trials},{_fmt(r.pupe)},{_fmt(r.stderr)},"
                  f"{secs},{r.seed}\n")
    return buf.getvalue()


def write_text(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_results(rows, path: str, record_times: bool = True) -> None:
    """Write result rows as CSV; raises ``OSError`` if ``path`` is unwritable."""
    write_text(format_results(rows, record_times), path)


def warm_up(cfg: RunConfig) -> None:
    """Compile the numeric kernels before anything is timed."""
    p = SystemParams(K=2, L=cfg.L, v=min(cfg.v, 8), w=(cfg.L // 2) * min(cfg.v, 8),
                     n=cfg.L * 32, iters=2)
    for case in CASES:
        op = make_operator(operator_kind(case), p, 0)
        decode(case, gen_trial(p, 0, op).y, op, p)


def run_sweep(cfg: RunConfig, log=sys.stderr) -> list:
    rows = []
    if cfg.record_times:
        warm_up(cfg)
    for case in cfg.cases:
        for ebno in cfg.ebno:
            res = run_point(case, ebno, cfg.trials, cfg.seed, cfg.params(ebno), cfg.threads)
            rows.append(res)
            print(f"case {case}  {ebno:5.2f} dB  pupe {res.pupe:.4f} +- {res.stderr:.4f}",
                  file=log)
    return rows


def benchmark_mode(cfg: RunConfig, log=sys.stderr) -> list:
    """Mean decode time of every case at one grid point, divided by Case 1's.

    All cases decode identical transmissions (same trial seeds), and the
    cases are interleaved trial by trial so slow drifts in machine speed
    affect each of them alike.  Returns ``[(case, seconds, normalized), ...]``.
    """
    if tuple(sorted(set(cfg.cases))) != CASES:
        raise ValueError("benchmark mode needs all four cases")
    if cfg.trials < 1:
        raise ValueError("benchmark mode needs at least one trial")
    warm_up(cfg)
    params = cfg.params(cfg.ebno[0])
    ops = {case: make_operator(operator_kind(case), params, cfg.seed) for case in CASES}
    times = {case: [] for case in CASES}
    for i in range(cfg.trials):
        for case in CASES:
            _, secs = run_trial(case, params, cfg.seed + i, ops[case])
            times[case].append(secs)
    mean = {case: float(np.mean(times[case])) for case in CASES}
    for case in CASES:
        print(f"case {case}  {mean[case]:.3f} s/trial", file=log)
    return [(case, mean[case], mean[case] / mean[1]) for case in CASES]


def format_bench(table, cfg: RunConfig) -> str:
    lines = [BENCH_HEADER]
    for case, secs, norm in table:
        lines.append(f"{case},{_fmt(cfg.ebno[0])},{cfg.trials},{_fmt(secs)},{_fmt(norm)}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        # open before running so an unwritable path fails fast
        sink = sys.stdout if cfg.out == "-" else open(cfg.out, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if cfg.bench:
            text = format_bench(benchmark_mode(cfg), cfg)
        else:
            text = format_results(run_sweep(cfg), cfg.record_times)
        sink.write(text)
        sink.flush()
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


__all__ = [
    "RunConfig", "parse_config", "parse_grid", "read_config_file", "emit_results",
    "format_results", "benchmark_mode", "main",
]
