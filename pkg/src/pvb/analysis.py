"""Phase-space filtering and projections of reduced states.

Because every basis cell sits at a known phase-space point, ionization
analysis reduces to set operations on cell centers:

* a *filter* removes the cells whose centers lie inside a named region
  (e.g. dropping the bound region leaves the ionized part of the state);
* a *projection* collapses the remaining cells onto a pair of lattice axes
  (position columns or momentum rows per dimension) by accumulating
  coefficient weight at each lattice coordinate pair.

The conventional projected amplitude is sqrt(sum |c|) over the traced-out
cells -- the coefficients are overlaps, not populations, and this mirrors
how such maps are usually plotted; ``mode="l2"`` gives the alternative
sqrt(sum |c|^2) reading.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reduced import ReducedState


@dataclass(frozen=True)
class FilterRegion:
    """A named region of phase space, defined on cell centers.

    ``predicate(xs, ps)`` receives per-dimension arrays of cell-center
    positions and momenta, each of shape (R,), and returns a boolean mask of
    the cells *inside* the region.
    """

    name: str
    predicate: object

    def mask(self, state: ReducedState) -> np.ndarray:
        coords = state.active.coords()
        xs, ps = [], []
        for d, b in enumerate(state.active.bases):
            lat = b.lattice
            xs.append(lat.x_centers[coords[:, 2 * d]])
            ps.append(lat.p_centers[coords[:, 2 * d + 1]])
        return np.asarray(self.predicate(xs, ps), dtype=bool)


def bound_region(x_r: float = 30.0) -> FilterRegion:
    """All electrons within |x| < x_r of the core."""
    return FilterRegion(f"bound(|x|<{x_r:g})",
                        lambda xs, ps: np.logical_and.reduce([np.abs(x) < x_r for x in xs]))


def any_bound_region(x_r: float = 30.0) -> FilterRegion:
    """At least one electron within |x| < x_r (bound + single ionization)."""
    return FilterRegion(f"any-bound(|x|<{x_r:g})",
                        lambda xs, ps: np.logical_or.reduce([np.abs(x) < x_r for x in xs]))


def single_ionization_region(x_r: float = 30.0) -> FilterRegion:
    """Exactly one electron beyond x_r."""
    def pred(xs, ps):
        far = np.stack([np.abs(x) >= x_r for x in xs])
        return far.sum(axis=0) == 1
    return FilterRegion(f"single-ionization(x_r={x_r:g})", pred)


def region_from_predicate(name: str, predicate) -> FilterRegion:
    return FilterRegion(name, predicate)


def filter_state(state: ReducedState, region: FilterRegion) -> ReducedState:
    """Remove the cells inside ``region`` (complement projector on cells).

    The returned state keeps the surviving cells' coefficients verbatim; an
    empty survivor set is allowed and yields a zero-size state.
    """
    inside = region.mask(state)
    new_active, kept = state.active.with_removed(np.nonzero(inside)[0])
    return ReducedState(new_active, state.coeffs[kept], state.W, state.t)


# ---------------------------------------------------------------------------

@dataclass
class PlaneMap:
    """A 2-D map over a pair of lattice axes."""

    axes: tuple[str, str]            # e.g. ("p1", "p2")
    coords: tuple[np.ndarray, np.ndarray]
    values: np.ndarray               # (len(coords[0]), len(coords[1]))
    meta: dict = field(default_factory=dict)

    def peak(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0


def _axis_index(state: ReducedState, d: int, which: str):
    b = state.active.bases[d]
    coords = state.active.coords()
    if which == "x":
        return coords[:, 2 * d], b.lattice.x_centers, f"x{d + 1}"
    if which == "p":
        return coords[:, 2 * d + 1], b.lattice.p_centers, f"p{d + 1}"
    raise ValueError(f"axis must be 'x' or 'p', got {which!r}")


def project(state: ReducedState, axes: tuple[str, str] = ("p", "p"),
            dims: tuple[int, int] = (0, 1), mode: str = "amplitude") -> PlaneMap:
    """Collapse a (two-dimensional) state onto two lattice axes.

    ``mode="amplitude"`` accumulates sum|c| and takes the square root (the
    conventional plotted amplitude); ``mode="l2"`` accumulates sum|c|^2 for a
    norm-like reading.
    """
    if max(dims) >= state.active.ndim:
        raise ValueError(f"projection dims {dims} exceed a "
                         f"{state.active.ndim}-dimensional state")
    ia, ca, na = _axis_index(state, dims[0], axes[0])
    ib, cb, nb = _axis_index(state, dims[1], axes[1])
    w = np.abs(state.coeffs)
    if mode == "l2":
        w = w * w
    elif mode != "amplitude":
        raise ValueError(f"unknown projection mode {mode!r}")
    acc = np.zeros((ca.size, cb.size))
    np.add.at(acc, (ia, ib), w)
    return PlaneMap((na, nb), (ca.copy(), cb.copy()), np.sqrt(acc),
                    {"mode": mode, "t": state.t, "cells": state.size})


def momentum_distribution(state: ReducedState, x_r: float = 30.0,
                          mode: str = "amplitude") -> PlaneMap:
    """(p1, p2) map of the double-ionized part: drop any cell with an
    electron inside |x| < x_r, then project onto the momentum rows."""
    free = filter_state(state, any_bound_region(x_r))
    out = project(free, ("p", "p"), mode=mode)
    out.meta["x_r"] = x_r
    return out


def pulse_momentum_scales(periods: dict) -> dict:
    """Wavenumber scale 2*pi/T for each named pulse period (map annotations)."""
    return {name: 2.0 * np.pi / T for name, T in periods.items()}
