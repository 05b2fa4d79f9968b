"""Unit-level population and sample containers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InputError


def _as_design(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise InputError(f"design has {X.shape[0]} rows, expected {n}")
    if X.shape[1] == 0 or not np.all(X[:, 0] == 1.0):
        raise InputError("first covariate column must be the constant 1")
    return X


def add_intercept(x):
    """Prepend a column of ones to covariates ``x`` (1-d or 2-d)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(x.shape[0]), x])


class _Grouped:
    @cached_property
    def area_ids(self):
        return np.unique(self.area)

    @cached_property
    def _rows(self):
        order = np.argsort(self.area, kind="stable")
        ids, starts = np.unique(self.area[order], return_index=True)
        bounds = list(starts[1:]) + [order.size]
        return {int(a): order[s:e] for a, s, e in zip(ids, starts, bounds)}

    def rows(self, area_id):
        """Row indices belonging to ``area_id`` (empty if absent)."""
        return self._rows.get(int(area_id), np.empty(0, dtype=int))

    def size(self, area_id):
        return self.rows(area_id).size

    def sizes(self):
        return {a: r.size for a, r in self._rows.items()}


@dataclass(frozen=True, eq=False)
class Population(_Grouped):
    """
    All ``N`` units of a finite population split into areas.

    ``y`` holds true outcomes when known (simulation); it is never used by
    the estimators.
    """

    area: np.ndarray
    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        area = np.asarray(self.area).astype(int)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "X", _as_design(self.X, area.size))
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape != area.shape:
                raise InputError("outcome vector length differs from area vector")
            object.__setattr__(self, "y", y)

    @property
    def p(self):
        return self.X.shape[1]

    def __len__(self):
        return self.area.size


@dataclass(frozen=True, eq=False)
class Sample(_Grouped):
    """
    Sampled units with observed outcomes.

    ``pop_index`` links each sampled unit to its row in the population, which
    identifies the non-sampled units of every area. Without it the population
    rows of an area stand in for its non-sampled units (see
    :func:`robust_sae.fit.area_prediction`).
    """

    area: np.ndarray
    X: np.ndarray
    y: np.ndarray
    pop_index: np.ndarray | None = None

    def __post_init__(self):
        area = np.asarray(self.area).astype(int)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "X", _as_design(self.X, area.size))
        y = np.asarray(self.y, dtype=float)
        if y.shape != area.shape:
            raise InputError("outcome vector length differs from area vector")
        if not np.all(np.isfinite(y)):
            raise InputError("sample outcomes must be finite")
        object.__setattr__(self, "y", y)
        if self.pop_index is not None:
            idx = np.asarray(self.pop_index).astype(int)
            if idx.shape != area.shape:
                raise InputError("pop_index length differs from sample size")
            if np.unique(idx).size != idx.size:
                raise InputError("pop_index contains duplicates")
            object.__setattr__(self, "pop_index", idx)

    @classmethod
    def from_population(cls, population, index):
        """Sample the population rows ``index`` (outcomes must be known)."""
        if population.y is None:
            raise InputError("population has no outcomes to sample")
        index = np.asarray(index, dtype=int)
        return cls(population.area[index], population.X[index],
                   population.y[index], pop_index=index)

    def replace_y(self, y):
        return Sample(self.area, self.X, y, self.pop_index)

    @property
    def p(self):
        return self.X.shape[1]

    def __len__(self):
        return self.area.size
