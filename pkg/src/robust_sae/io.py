"""
CSV and configuration plumbing for the command-line interface.

Input schemas
-------------
sample CSV
    ``area_id, y, x1, ..., xp``; one row per sampled unit.
population CSV
    ``area_id, x1, ..., xp``; one row per population unit (sampled ones
    included). ``N_j`` is the row count of area ``j``.

Both files must carry the same covariate columns. An intercept is added.

Configuration files are INI-style (``configparser``); see the README for the
keys of each command. Relative paths resolve against the config file.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .data import Population, Sample, add_intercept
from .exceptions import InputError


def fmt(x):
    """Shortest round-tripping text for a float; integers stay integers."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def _column(header, rows, name, path, cast=float):
    k = header.index(name)
    out = []
    for line, r in enumerate(rows, start=2):
        try:
            out.append(cast(r[k]))
        except (ValueError, IndexError):
            raise InputError(f"{path}:{line}: bad value in column {name!r}") from None
    return np.array(out)


def _covariates(header):
    return [h for h in header if h not in ("area_id", "y")]


def read_sample(path):
    """Read a sample CSV; returns ``(Sample, covariate names)``."""
    header, rows = _read_rows(path)
    for col in ("area_id", "y"):
        if col not in header:
            raise InputError(f"{path}: missing column {col!r}")
    cov = _covariates(header)
    area = _column(header, rows, "area_id", path, int)
    y = _column(header, rows, "y", path)
    X = np.column_stack([_column(header, rows, c, path) for c in cov]) if cov \
        else np.empty((len(rows), 0))
    return Sample(area, add_intercept(X), y), cov


def read_population(path, covariates):
    """Read a population CSV holding the covariate columns ``covariates``."""
    header, rows = _read_rows(path)
    if "area_id" not in header:
        raise InputError(f"{path}: missing column 'area_id'")
    for c in covariates:
        if c not in header:
            raise InputError(f"{path}: missing covariate column {c!r}")
    extra = [c for c in _covariates(header) if c not in covariates]
    if extra:
        raise InputError(f"{path}: covariate column {extra[0]!r} not in the sample")
    area = _column(header, rows, "area_id", path, int)
    X = np.column_stack([_column(header, rows, c, path) for c in covariates]) if covariates \
        else np.empty((len(rows), 0))
    return Population(area, add_intercept(X))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


def read_csv(path):
    header, rows = _read_rows(path)
    return header, rows


def write_estimates(path, estimates, method, scope):
    rows = [(a, e.n, e.N, method, scope, e.c, e.gamma, e.gini, ";".join(e.flags))
            for a, e in sorted(estimates.items())]
    write_csv(path, ["area_id", "n", "N", "method", "scope", "c", "gamma", "gini", "flags"], rows)


def write_cdf(path, cdf):
    write_csv(path, ["support", "cumulative_probability"],
              zip(cdf.points.tolist(), cdf.cumulative.tolist()))


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_metadata(path, record):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# configuration


def read_config(path):
    """Parse an INI config with case-sensitive keys; missing files and syntax errors raise InputError."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive: N_j and n_j differ
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    return cp


def get(section, key, cast=str, default=None, path="config"):
    """Typed lookup with a diagnostic naming the section and key."""
    if key not in section:
        if default is None:
            raise InputError(f"{path}: [{section.name}] missing key {key!r}")
        return default
    raw = section[key]
    try:
        if cast is bool:
            return section.getboolean(key)
        return cast(raw)
    except ValueError:
        raise InputError(f"{path}: [{section.name}] {key} = {raw!r} is not a valid "
                         f"{getattr(cast, '__name__', 'value')}") from None


def float_list(text):
    return [float(v) for v in text.replace(",", " ").split()]


def name_list(text):
    return [v for v in text.replace(",", " ").split()]


def resolve(base, value):
    p = Path(value)
    return p if p.is_absolute() else Path(base).parent / p
