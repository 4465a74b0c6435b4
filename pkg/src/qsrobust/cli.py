"""Command-line front end.

``qsrobust metric|risk|lipschitz-check|robustness|iqr-scan --config FILE
[--out FILE] [--format csv|json] [--seed U64] [--workers K]``

Configs are JSON documents validated against the shipped
``config.schema.json`` (``schema_version`` 1). Reports are flat rows
written atomically. Exit codes: 0 success, 1 usage or config error,
2 a checked inequality failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from importlib import resources
from typing import Any, Iterable, Optional, Sequence

import jsonschema
from jsonschema.exceptions import best_match

from .distributions import distribution_from_dict, gauge_from_dict
from .errors import DomainError, InfeasibleError
from .metrics import compute_metric
from .risk import RiskFunctionalSpec, certificate, evaluate
from .robustness import DEFAULT_P_GRID, iqr_scan, lipschitz_suite, paired_lipschitz_check, robustness_gap

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2
EXPERIMENTS = ("metric", "risk", "lipschitz-check", "robustness", "iqr-scan")
RUNTIME_COLUMN = "runtime_ms"

COLUMNS = {
    "metric": ["experiment", "id", "seed", "metric", "p", "phi", "P", "Q", "value", "exactness", "tol", "lo", "hi", RUNTIME_COLUMN],
    "risk": ["experiment", "id", "seed", "functional", "distribution", "value", "L", "certificate_p", "iqr", "condition", RUNTIME_COLUMN],
    "lipschitz-check": [
        "experiment", "id", "seed", "functional", "L", "p", "condition", "mode", "N", "trials", "applicable",
        "violations", "max_ratio", "lhs", "rhs", "condition_met", "holds", RUNTIME_COLUMN,
    ],
    "robustness": [
        "experiment", "id", "seed", "functional", "P", "Q", "L", "p", "N", "M", "d_input", "d_input_exactness",
        "d_input_tol", "d_estimator_laws", "bound", "gap_ratio", "mc_halfwidth", "condition_met", "holds", RUNTIME_COLUMN,
    ],
    "iqr-scan": [
        "experiment", "id", "seed", "functional", "L", "certificate_p", "certificate_iqr", "trials", "p",
        "violation_fraction", "reported_iqr", RUNTIME_COLUMN,
    ],
}


class ConfigError(Exception):
    """Invalid configuration; ``field`` is a dotted path into the config."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field or '<root>'}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# serialisation


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = "%.17g" % x
    # keep floats distinguishable from integers on the way back in
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _normalise(v: Any) -> Any:
    # numpy scalars expose .item(); plain Python values pass through
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    return v


def _csv_cell(v: Any) -> str:
    v = _normalise(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _format_float(v)
    s = str(v)
    return '"' + s.replace('"', '""') + '"'


def _json_value(v: Any) -> str:
    v = _normalise(v)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return _format_float(v)
    return json.dumps(str(v), ensure_ascii=False)


def _columns_of(rows: Sequence[dict], columns: Optional[Sequence[str]]) -> list[str]:
    if columns is not None:
        return list(columns)
    cols: list[str] = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    return cols


def render(rows: Sequence[dict], fmt: str = "csv", columns: Optional[Sequence[str]] = None) -> str:
    """Report text: CSV with a header line, or a JSON array of objects.

    Floats carry 17 significant digits; strings are always quoted in CSV so
    they never read back as numbers.
    """
    cols = _columns_of(rows, columns)
    if fmt == "csv":
        lines = [",".join(cols)]
        lines += [",".join(_csv_cell(row.get(c)) for c in cols) for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == "json":
        if not rows:
            return "[]\n"
        body = ",\n".join("  {" + ", ".join(f"{json.dumps(c)}: {_json_value(row.get(c))}" for c in cols) + "}" for row in rows)
        return "[\n" + body + "\n]\n"
    raise ValueError(f"unknown format {fmt!r}")


def _csv_records(text: str):
    """Split CSV text into records of ``(value, was_quoted)`` cells."""
    records, cells = [], []
    buf: list[str] = []
    quoted = in_quotes = False
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    buf.append('"')
                    i += 1
                else:
                    in_quotes = False
            else:
                buf.append(ch)
        elif ch == '"':
            in_quotes = quoted = True
        elif ch == ",":
            cells.append(("".join(buf), quoted))
            buf, quoted = [], False
        elif ch == "\n":
            cells.append(("".join(buf), quoted))
            records.append(cells)
            cells, buf, quoted = [], [], False
        elif ch != "\r":
            buf.append(ch)
        i += 1
    if in_quotes:
        raise ValueError("unterminated quoted field")
    if buf or cells or quoted:
        cells.append(("".join(buf), quoted))
        records.append(cells)
    return records


def _csv_value(text: str, quoted: bool) -> Any:
    if quoted:
        return text
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    if any(c in text for c in ".eEn"):
        return float(text)
    return int(text)


def parse(text: str, fmt: str = "csv") -> list[dict]:
    """Inverse of :func:`render`."""
    if fmt == "json":
        return [dict(r) for r in json.loads(text)]
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    records = _csv_records(text)
    if not records:
        return []
    header = [c for c, _ in records[0]]
    rows = []
    for rec in records[1:]:
        if len(rec) != len(header):
            raise ValueError(f"row has {len(rec)} cells, header has {len(header)}")
        rows.append({h: _csv_value(v, q) for h, (v, q) in zip(header, rec)})
    return rows


def emit(rows: Sequence[dict], fmt: str, path: Optional[str], columns: Optional[Sequence[str]] = None) -> None:
    """Write a report atomically (temporary file in the target directory, then rename).

    ``path=None`` writes to standard output.
    """
    text = render(rows, fmt, columns)
    if path is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".qsrobust-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def strip_runtime(text: str, fmt: str) -> list[dict]:
    """Parsed rows without the runtime column, for determinism comparisons."""
    rows = parse(text, fmt)
    for r in rows:
        r.pop(RUNTIME_COLUMN, None)
    return rows


# ---------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text(encoding="utf-8"))


def _path_str(path: Iterable) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path!r}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: Any) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    err = best_match(validator.iter_errors(cfg))
    if err is not None:
        raise ConfigError(_path_str(err.absolute_path), err.message)


def _need(cfg: dict, *keys: str) -> None:
    for k in keys:
        if k not in cfg:
            raise ConfigError(k, f"required for experiment {cfg.get('experiment')!r}")


def _build(field: str, fn, value):
    try:
        return fn(value)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from exc


def _functionals(cfg: dict) -> list[RiskFunctionalSpec]:
    raw = cfg["functional"]
    items = raw if isinstance(raw, list) else [raw]
    return [
        _build(f"functional[{i}]" if isinstance(raw, list) else "functional", RiskFunctionalSpec.from_dict, d)
        for i, d in enumerate(items)
    ]


def _compact(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# experiments


def _run_metric(cfg, tol, workers):
    _need(cfg, "P", "Q", "metric")
    P = _build("P", distribution_from_dict, cfg["P"])
    Q = _build("Q", distribution_from_dict, cfg["Q"])
    raw = cfg["metric"]
    rows = []
    for i, m in enumerate(raw if isinstance(raw, list) else [raw]):
        field = f"metric[{i}]" if isinstance(raw, list) else "metric"
        phi = _build(f"{field}.phi", gauge_from_dict, m["phi"]) if "phi" in m else None
        t0 = time.perf_counter()
        val = _build(field, lambda mm: compute_metric(mm["kind"], P, Q, p=float(mm.get("p", 1.0)), phi=phi, tol=tol), m)
        rows.append({
            "metric": m["kind"],
            "p": float(m["p"]) if "p" in m else None,
            "phi": _compact(m["phi"]) if "phi" in m else None,
            "P": _compact(cfg["P"]),
            "Q": _compact(cfg["Q"]),
            "value": val.value,
            "exactness": val.exactness,
            "tol": val.tol,
            "lo": val.lo,
            "hi": val.hi,
            RUNTIME_COLUMN: 1e3 * (time.perf_counter() - t0),
        })
    return rows, False


def _run_risk(cfg, tol, workers):
    _need(cfg, "distribution", "functional")
    G = _build("distribution", distribution_from_dict, cfg["distribution"])
    rows = []
    for spec in _functionals(cfg):
        cert = certificate(spec)
        t0 = time.perf_counter()
        value = evaluate(spec, G, tol)
        rows.append({
            "functional": spec.label,
            "distribution": _compact(cfg["distribution"]),
            "value": value,
            "L": cert.L,
            "certificate_p": cert.p,
            "iqr": cert.iqr,
            "condition": cert.condition,
            RUNTIME_COLUMN: 1e3 * (time.perf_counter() - t0),
        })
    return rows, False


def _run_lipschitz(cfg, tol, workers):
    _need(cfg, "functional")
    paired = "samples" in cfg or "perturbed" in cfg
    if paired:
        _need(cfg, "samples", "perturbed")
        if len(cfg["samples"]) != len(cfg["perturbed"]):
            raise ConfigError("perturbed", f"length {len(cfg['perturbed'])} differs from samples length {len(cfg['samples'])}")
    elif "trials" not in cfg:
        raise ConfigError("trials", "give either samples and perturbed, or a trial count")
    rows, failed = [], False
    for spec in _functionals(cfg):
        cert = certificate(spec)
        t0 = time.perf_counter()
        if paired:
            chk = paired_lipschitz_check(spec, cfg["samples"], cfg["perturbed"], cert)
            ratio = chk.lhs / chk.rhs if chk.rhs > 0 else (0.0 if chk.holds else math.inf)
            row = {
                "mode": "pair", "N": len(cfg["samples"]), "trials": 1, "applicable": int(chk.condition_met),
                "violations": int(chk.condition_met and not chk.holds), "max_ratio": ratio,
                "lhs": chk.lhs, "rhs": chk.rhs, "condition_met": chk.condition_met, "holds": chk.holds,
            }
            failed |= chk.condition_met and not chk.holds
        else:
            rep = lipschitz_suite(spec, int(cfg["trials"]), int(cfg["seed"]), workers)
            row = {
                "mode": "random", "N": None, "trials": rep.trials, "applicable": rep.applicable,
                "violations": rep.violations, "max_ratio": rep.max_ratio, "lhs": None, "rhs": None,
                "condition_met": rep.applicable == rep.trials, "holds": rep.holds,
            }
            failed |= not rep.holds
        row.update({"functional": spec.label, "L": cert.L, "p": cert.p, "condition": cert.condition})
        row[RUNTIME_COLUMN] = 1e3 * (time.perf_counter() - t0)
        rows.append(row)
    return rows, failed


def _run_robustness(cfg, tol, workers):
    _need(cfg, "functional", "P", "Q", "N", "M")
    P = _build("P", distribution_from_dict, cfg["P"])
    Q = _build("Q", distribution_from_dict, cfg["Q"])
    rows, failed = [], False
    for spec in _functionals(cfg):
        t0 = time.perf_counter()
        rep = robustness_gap(spec, P, Q, int(cfg["N"]), int(cfg["M"]), int(cfg["seed"]), tol, workers)
        row = rep.to_row()
        row["functional"] = row.pop("spec")
        row.update({"P": _compact(cfg["P"]), "Q": _compact(cfg["Q"])})
        row[RUNTIME_COLUMN] = 1e3 * (time.perf_counter() - t0)
        rows.append(row)
        failed |= rep.condition_met and not rep.holds
    return rows, failed


def _run_iqr(cfg, tol, workers):
    _need(cfg, "functional", "trials")
    grid = [float(p) for p in cfg.get("p_grid", DEFAULT_P_GRID)]
    if grid != sorted(grid):
        raise ConfigError("p_grid", "must be ascending")
    rows, failed = [], False
    for spec in _functionals(cfg):
        t0 = time.perf_counter()
        scan = iqr_scan(spec, int(cfg["trials"]), grid, int(cfg["seed"]), workers)
        elapsed = 1e3 * (time.perf_counter() - t0)
        for r in scan.to_rows():
            r["functional"] = r.pop("spec")
            r.pop("seed")
            r[RUNTIME_COLUMN] = elapsed
            rows.append(r)
            if r["p"] == scan.cert.p and r["violation_fraction"] > 0:
                failed = True
    return rows, failed


RUNNERS = {
    "metric": _run_metric,
    "risk": _run_risk,
    "lipschitz-check": _run_lipschitz,
    "robustness": _run_robustness,
    "iqr-scan": _run_iqr,
}


def execute(experiment: str, cfg: dict, workers: Optional[int] = None) -> tuple[list[dict], bool]:
    """Run a validated config; returns report rows and whether a check failed."""
    if cfg.get("experiment", experiment) != experiment:
        raise ConfigError("experiment", f"config is for {cfg['experiment']!r}, not {experiment!r}")
    cfg = {**cfg, "experiment": experiment}
    tol = float(cfg.get("tol", 1e-9))
    workers = int(workers if workers is not None else cfg.get("workers", 1))
    rows, failed = RUNNERS[experiment](cfg, tol, workers)
    common = {"experiment": experiment, "id": cfg.get("id"), "seed": int(cfg["seed"])}
    return [{**common, **r} for r in rows], failed


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsrobust", description="Probability metrics, risk functionals and robustness checks.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="report path (default: config output.path, else stdout)")
    ap.add_argument("--format", choices=("csv", "json"), help="report format (default csv, or from --out suffix)")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--workers", type=int, help="worker threads for replications and trials")
    return ap


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point returning the exit code."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
            validate_config(cfg)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        out = args.out or cfg.get("output", {}).get("path")
        fmt = args.format or cfg.get("output", {}).get("format")
        if fmt is None:
            fmt = "json" if out and out.endswith(".json") else "csv"
        rows, failed = execute(args.experiment, cfg, args.workers)
    except ConfigError as exc:
        print(f"qsrobust: config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, InfeasibleError, ValueError) as exc:
        print(f"qsrobust: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        emit(rows, fmt, out, COLUMNS[args.experiment])
    except OSError as exc:
        print(f"qsrobust: cannot write report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if failed:
        print("qsrobust: a checked inequality failed; see report", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
