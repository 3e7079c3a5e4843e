"""CSV report writers, run manifests and plot-ready tables.

Floats are written with ``repr`` so every report is byte-for-byte
reproducible and round-trips exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from .. import __version__


class ReportError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path, expected_header) -> list[tuple[int, dict]]:
    """Read a report as ``(line_number, row)`` pairs, checking the header.

    Errors name the offending line.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(expected_header):
            raise ReportError(f"{path}: line 1: expected header {','.join(expected_header)}, found {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ReportError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
            rows.append((lineno, dict(zip(expected_header, row))))
    return rows


def _float(path, lineno, value):
    try:
        return float(value)
    except ValueError:
        raise ReportError(f"{path}: line {lineno}: not a number: {value!r}") from None


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {
        "spikenet": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_manifest(out_dir, config: dict, seeds: dict, outputs: list[Path], extra: dict | None = None) -> Path:
    doc = {
        "experiment": config["experiment"],
        "config": config,
        "seeds": seeds,
        "versions": versions(),
        "outputs": {p.name: sha256(p) for p in sorted(outputs)},
    }
    if extra:
        doc.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# Plot-ready tables (long format, no rendering).

KL_HEADER = ("samples", "kl_nats")
ACCURACY_HEADER = ("t", "accuracy", "accuracy_std")
HISTOGRAM_HEADER = ("configuration_bits", "count", "empirical_log_prob", "exact_log_prob")


def kl_series(path):
    return [(int(_float(path, n, r["samples"])), _float(path, n, r["kl_nats"])) for n, r in read_csv(path, KL_HEADER)]


def accuracy_band(path):
    out = []
    for n, r in read_csv(path, ACCURACY_HEADER):
        m, s = _float(path, n, r["accuracy"]), _float(path, n, r["accuracy_std"])
        out.append((int(_float(path, n, r["t"])), m, m - s, m + s))
    return out


def histogram_bars(path):
    return [
        (r["configuration_bits"], _float(path, n, r["empirical_log_prob"]), _float(path, n, r["exact_log_prob"]))
        for n, r in read_csv(path, HISTOGRAM_HEADER)
    ]


def _detect(path):
    with open(path, newline="") as fh:
        header = tuple(h.strip() for h in next(csv.reader(fh), []))
    for kind, h in (("kl", KL_HEADER), ("accuracy", ACCURACY_HEADER), ("histogram", HISTOGRAM_HEADER)):
        if header == h:
            return kind
    raise ReportError(f"{path}: line 1: unrecognised report header {','.join(header)}")


def emit_plot_data(csv_paths, out_dir) -> list[Path]:
    """Reshape KL, accuracy and histogram reports into long-format tables.

    Writes ``plot_kl.csv`` (series, samples, kl), ``plot_accuracy.csv``
    (series, t, mean, lower, upper) and ``plot_histogram.csv`` (series,
    configuration, empirical_log, exact_log) for whichever inputs are given.
    The series name is the input file's stem.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {"kl": [], "accuracy": [], "histogram": []}
    for p in map(Path, csv_paths):
        kind = _detect(p)
        reader = {"kl": kl_series, "accuracy": accuracy_band, "histogram": histogram_bars}[kind]
        tables[kind] += [(p.stem, *row) for row in reader(p)]
    headers = {
        "kl": ("series", "samples", "kl"),
        "accuracy": ("series", "t", "mean", "lower", "upper"),
        "histogram": ("series", "configuration", "empirical_log", "exact_log"),
    }
    written = []
    for kind, rows in tables.items():
        if rows:
            written.append(write_csv(out_dir / f"plot_{kind}.csv", headers[kind], rows))
    return written
