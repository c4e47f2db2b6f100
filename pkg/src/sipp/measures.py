"""Finite counting measures on (0, inf) or R^d minus the origin.

A measure remembers the norm window ``(lo, hi]`` on which it is complete.
Queries reaching outside that window raise :class:`HorizonError` instead of
silently undercounting; the scale-invariant process has infinitely many points
near 0, so every sample is necessarily a window. Atoms may still lie outside
it: an uplifted atom can move out of the window it was certified for.

:class:`MeasureBatch` stores many independent realisations in CSR layout and
answers the same queries vectorised across replications.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import HorizonError


@dataclass(frozen=True)
class Horizon:
    """Norm window ``(lo, hi]`` on which a measure is complete.

    ``checked=False`` marks measures whose completeness cannot be asserted;
    queries against them are not validated.
    """

    lo: float = 0.0
    hi: float = math.inf
    checked: bool = True

    def covers(self, a: float, b: float) -> bool:
        return (not self.checked) or (self.lo <= a and b <= self.hi)

    def scaled(self, t: float) -> "Horizon":
        return Horizon(self.lo * t, self.hi * t, self.checked)

    def require(self, a: float, b: float) -> None:
        if not self.covers(a, b):
            raise HorizonError(f"window ({a}, {b}] is not inside the horizon ({self.lo}, {self.hi}]")


FULL = Horizon()
UNCHECKED = Horizon(0.0, math.inf, checked=False)


def norms(locations: np.ndarray) -> np.ndarray:
    if locations.ndim == 1:
        return np.abs(locations)
    return np.sqrt(np.einsum("ij,ij->i", locations, locations))


def _direction_mask(locations: np.ndarray, directions) -> np.ndarray:
    """Atoms whose direction x/|x| lies in ``directions``.

    ``directions`` is a predicate on an (N, d) array of unit vectors, or an
    array of unit vectors matched to 1e-9.
    """
    if directions is None:
        return np.ones(locations.shape[0], dtype=bool)
    if locations.ndim == 1:
        raise ValueError("direction sets need a d-dimensional measure")
    units = locations / norms(locations)[:, None]
    if callable(directions):
        return np.asarray(directions(units), dtype=bool)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / norms(dirs)[:, None]
    hit = np.zeros(units.shape[0], dtype=bool)
    for u in dirs:
        hit |= np.all(np.abs(units - u) <= 1e-9, axis=1)
    return hit


@dataclass(frozen=True)
class CountingMeasure:
    """Weighted atoms ``sum_i m_i delta_{x_i}`` with positive multiplicities.

    Zero-multiplicity atoms are dropped and atoms sharing a location are merged.
    """

    locations: np.ndarray
    multiplicities: np.ndarray
    horizon: Horizon = FULL
    _norms: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        mult = np.asarray(self.multiplicities, dtype=np.int64).reshape(-1)
        if loc.ndim not in (1, 2):
            raise ValueError("locations must be (N,) or (N, d)")
        if loc.shape[0] != mult.shape[0]:
            raise ValueError("locations and multiplicities differ in length")
        if np.any(mult < 0):
            raise ValueError("multiplicities must be non-negative")
        keep = mult > 0
        loc, mult = loc[keep], mult[keep]
        if loc.shape[0]:
            uniq, inverse = np.unique(loc, axis=0, return_inverse=True)
            if uniq.shape[0] != loc.shape[0]:
                mult = np.bincount(inverse.reshape(-1), weights=mult).astype(np.int64)
                loc = uniq
        nrm = norms(loc)
        if np.any(nrm <= 0):
            raise ValueError("atom locations must be non-zero")
        loc.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "multiplicities", mult)
        object.__setattr__(self, "_norms", nrm)

    @classmethod
    def empty(cls, dimension: int = 1, horizon: Horizon = FULL) -> "CountingMeasure":
        shape = (0,) if dimension == 1 else (0, dimension)
        return cls(np.empty(shape), np.empty(0, dtype=np.int64), horizon)

    @property
    def dimension(self) -> int:
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]

    @property
    def total_mass(self) -> int:
        return int(self.multiplicities.sum())

    def __len__(self) -> int:
        return int(self.locations.shape[0])

    def is_simple(self) -> bool:
        return bool(np.all(self.multiplicities == 1))

    def scale(self, t: float) -> "CountingMeasure":
        """Intrinsic scaling: every atom x moves to t*x.

        Atoms are kept one-to-one even if rounding makes two scaled locations equal.
        """
        if not t > 0:
            raise ValueError("scale factor must be positive")
        out = object.__new__(CountingMeasure)
        loc = self.locations * t
        loc.setflags(write=False)
        for name, value in (("locations", loc), ("multiplicities", self.multiplicities),
                            ("horizon", self.horizon.scaled(t)), ("_norms", self._norms * t)):
            object.__setattr__(out, name, value)
        return out

    def count_in(self, a: float, b: float, directions=None) -> int:
        """Total multiplicity of atoms with norm in (a, b] (and direction in the set)."""
        if b <= a:
            return 0
        self.horizon.require(a, b)
        sel = (self._norms > a) & (self._norms <= b)
        if directions is not None:
            sel &= _direction_mask(self.locations, directions)
        return int(self.multiplicities[sel].sum())

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        if len(self) == 0:
            return 0.0
        vals = np.asarray(f(self.locations), dtype=float)
        return float(np.sum(self.multiplicities * vals))

    def sum_points_in_unit_ball(self):
        """Sum of m*x over atoms with |x| < 1 (open ball)."""
        if self.horizon.checked and self.horizon.hi < 1.0:
            raise HorizonError("measure was not generated up to norm 1")
        sel = self._norms < 1.0
        w = self.multiplicities[sel]
        if self.dimension == 1:
            return float(np.sum(w * self.locations[sel]))
        return np.sum(w[:, None] * self.locations[sel], axis=0)

    def simplify(self) -> "CountingMeasure":
        """Map sum a_k delta_{z_k} to the simple measure sum delta_{(a_k, z_k)}."""
        if self.dimension != 1:
            raise ValueError("simplify is defined for measures on (0, inf)")
        pairs = np.column_stack([self.multiplicities.astype(float), self.locations])
        return CountingMeasure(pairs.reshape(-1, 2), np.ones(len(self), dtype=np.int64), UNCHECKED)

    def to_rows(self) -> list[list]:
        loc = self.locations.reshape(len(self), -1)
        return [[*map(float, x), int(m)] for x, m in zip(loc, self.multiplicities)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dimension)] + ["multiplicity"])
            for row in self.to_rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    @classmethod
    def from_csv(cls, path, horizon: Horizon = UNCHECKED) -> "CountingMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        d = len(rows[0]) - 1
        body = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, d + 1)
        loc = body[:, 0] if d == 1 else body[:, :d]
        return cls(loc, body[:, d].astype(np.int64), horizon)


# functional aliases
def scale(mu: CountingMeasure, t: float) -> CountingMeasure:
    return mu.scale(t)


def count_in(mu: CountingMeasure, a: float, b: float, directions=None) -> int:
    return mu.count_in(a, b, directions)


def integrate(mu: CountingMeasure, f) -> float:
    return mu.integrate(f)


def sum_points_in_unit_ball(mu: CountingMeasure):
    return mu.sum_points_in_unit_ball()


def simplify(mu: CountingMeasure) -> CountingMeasure:
    return mu.simplify()


@dataclass(frozen=True)
class MeasureBatch:
    """Independent realisations in CSR layout: replication r owns atoms
    ``offsets[r]:offsets[r+1]``. Atoms are not merged."""

    offsets: np.ndarray
    locations: np.ndarray
    multiplicities: np.ndarray
    horizon: Horizon = FULL

    def __post_init__(self):
        if self.offsets[0] != 0 or self.offsets[-1] != self.locations.shape[0]:
            raise ValueError("offsets do not span the atom arrays")
        if self.multiplicities.shape[0] != self.locations.shape[0]:
            raise ValueError("locations and multiplicities differ in length")

    @classmethod
    def from_rep_ids(cls, reps: int, rep_ids: np.ndarray, locations, multiplicities,
                     horizon: Horizon = FULL) -> "MeasureBatch":
        order = np.argsort(rep_ids, kind="stable")
        counts = np.bincount(rep_ids, minlength=reps)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(offsets, np.asarray(locations)[order],
                   np.asarray(multiplicities, dtype=np.int64)[order], horizon)

    @classmethod
    def concat(cls, parts: Iterable["MeasureBatch"]) -> "MeasureBatch":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        offs, shift = [np.zeros(1, dtype=np.int64)], 0
        for p in parts:
            offs.append(p.offsets[1:] + shift)
            shift += p.locations.shape[0]
        return cls(np.concatenate(offs), np.concatenate([p.locations for p in parts]),
                   np.concatenate([p.multiplicities for p in parts]), parts[0].horizon)

    def __len__(self) -> int:
        return int(self.offsets.shape[0] - 1)

    @property
    def dimension(self) -> int:
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]

    @property
    def rep_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self)), np.diff(self.offsets))

    def __getitem__(self, r: int) -> CountingMeasure:
        lo, hi = self.offsets[r], self.offsets[r + 1]
        return CountingMeasure(self.locations[lo:hi], self.multiplicities[lo:hi], self.horizon)

    def _group(self, weights: np.ndarray) -> np.ndarray:
        return np.bincount(self.rep_ids, weights=weights, minlength=len(self))

    def _window(self, a: float, b: float) -> np.ndarray:
        nrm = norms(self.locations)
        return (nrm > a) & (nrm <= b)

    def count_in(self, a: float, b: float, directions=None) -> np.ndarray:
        if b <= a:
            return np.zeros(len(self), dtype=np.int64)
        self.horizon.require(a, b)
        sel = self._window(a, b)
        if directions is not None:
            sel &= _direction_mask(self.locations, directions)
        return np.rint(self._group(np.where(sel, self.multiplicities, 0))).astype(np.int64)

    def any_multiple_in(self, a: float, b: float) -> np.ndarray:
        """Per replication: does some atom in (a, b] carry multiplicity >= 2."""
        if b <= a:
            return np.zeros(len(self), dtype=bool)
        self.horizon.require(a, b)
        sel = self._window(a, b) & (self.multiplicities >= 2)
        return self._group(sel.astype(float)) > 0

    def integrate(self, f) -> np.ndarray:
        if self.locations.shape[0] == 0:
            return np.zeros(len(self))
        vals = np.asarray(f(self.locations), dtype=float)
        return self._group(self.multiplicities * vals)

    def sum_in_unit_ball(self, closed: bool = False) -> np.ndarray:
        """Per-replication sum of m*x over |x| < 1 (``closed``: |x| <= 1)."""
        if self.horizon.checked and self.horizon.hi < 1.0:
            raise HorizonError("measures were not generated up to norm 1")
        nrm = norms(self.locations)
        sel = nrm <= 1.0 if closed else nrm < 1.0
        w = np.where(sel, self.multiplicities, 0).astype(float)
        if self.dimension == 1:
            return self._group(w * self.locations)
        return np.column_stack([self._group(w * self.locations[:, j]) for j in range(self.dimension)])

    def sum_atoms(self) -> np.ndarray:
        """Per-replication sum of m*x over every stored atom, whatever its norm."""
        w = self.multiplicities.astype(float)
        if self.dimension == 1:
            return self._group(w * self.locations)
        return np.column_stack([self._group(w * self.locations[:, j]) for j in range(self.dimension)])

    def scale(self, t: float) -> "MeasureBatch":
        if not t > 0:
            raise ValueError("scale factor must be positive")
        return MeasureBatch(self.offsets, self.locations * t, self.multiplicities, self.horizon.scaled(t))
