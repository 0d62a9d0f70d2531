"""Cubical ground truth for window homology.

Everything here works on a uniform grid over a finite box.  Top cells
are classified by evaluating f_eps at their centers, the two sublevel
sets {f_eps <= Lam} and {f_eps <= -lam} become cubical complexes by
closing the classified cells, and the relative homology of that pair is
computed exactly over Z.  None of the gradient-flow machinery is
involved, which is the point: numbers coming out of this module are an
independent check on the Morse complex.

Truncating at a box is exact (excision) whenever the relative region
keeps one clear cell of margin from every wall.  Problems whose
relative region genuinely runs off to infinity, like the asymptotic
cone of a saddle, are handled empirically instead: the box doubles
until the computed answer stops changing.

Hand-checked reference pairs used by the catalog at eps = 0.1,
window (-1, 10]:

* z^2 realified: a disk against two lobes, H_1 = Z.
* z^d realified: a disk against d lobes, H_1 = Z^(d-1).
* x^2 with tau = 1/(1+x^2): one bounded minimum at value eps, H_0 = Z.
* x^4 - x^2: both wells and the hump sit inside the window, H_0 = Z.
* y + eps/y on the open ray: minimum 2 sqrt(eps), lower set empty,
  H_0 = Z.
* -1/y + eps/(2 y^2) on the ray: the only critical value -1/(2 eps)
  dives below the window, so the pair is an interval against a
  subinterval and everything cancels.
* -1/y1 - 1/y2 with tau = y1 y2: the corner saddle at value -1/eps is
  below the window; the total set retracts onto the sub set, trivial.
* x + x^2 y realified (ambient dimension four): only the Euler count
  chi = +1 is checkable here.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .compactify import AlgebraicProblem, realify
from .errors import ConfigError, ResolutionTooCoarse, UnknownEntry
from .expr import eval_values, parse_expression
from .homology import HomologyResult, euler_characteristic
from .intlinalg import homology_of_complex, reduce_complex
from .metric import MetricSpec
from .problem import (DomainModel, ProblemSpec, WindowSpec,
                      perturbed_function)

__all__ = [
    "CubicalPair", "CatalogEntry", "EulerReport",
    "build_pair", "sublevel_pair_homology", "pair_euler_characteristic",
    "euler_check", "catalog_lookup", "catalog_names",
]

_CHUNK = 1 << 21


def _per_axis(resolution, n: int) -> Tuple[int, ...]:
    if isinstance(resolution, (int, np.integer)):
        res = (int(resolution),) * n
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != n:
        raise ConfigError(f"resolution names {len(res)} axes, the box has {n}")
    if any(r < 1 for r in res):
        raise ConfigError("resolution must be at least one cell per axis")
    return res


def _axis_centers(box, res) -> list:
    return [lo + (np.arange(r) + 0.5) * (hi - lo) / r
            for (lo, hi), r in zip(box, res)]


def _top_masks(fe, names, box, res, lam, Lam):
    """Boolean top-cell arrays for {f_eps <= Lam} and {f_eps <= -lam}.

    Centers where the function is undefined evaluate to nan and land in
    neither mask.  Evaluation is chunked along the first axis so the
    point batch never gets out of hand in dimension four.
    """
    axes = _axis_centers(box, res)
    total = np.empty(res, dtype=bool)
    sub = np.empty(res, dtype=bool)
    tail = 1
    for r in res[1:]:
        tail *= r
    step = max(1, _CHUNK // tail)
    for i0 in range(0, res[0], step):
        block = axes[0][i0:i0 + step]
        mesh = np.meshgrid(block, *axes[1:], indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        vals = eval_values(fe, pts, names).reshape((len(block),) + res[1:])
        total[i0:i0 + step] = vals <= Lam
        sub[i0:i0 + step] = vals <= -lam
    return total, sub


def _dilate(arr: np.ndarray, j: int) -> np.ndarray:
    """Vertex coverage along axis j: cell i marks positions i and i+1."""
    shape = arr.shape[:j] + (arr.shape[j] + 1,) + arr.shape[j + 1:]
    out = np.zeros(shape, dtype=bool)
    head = (slice(None),) * j
    out[head + (slice(0, -1),)] = arr
    out[head + (slice(1, None),)] |= arr
    return out


def _closed_counts(top: np.ndarray) -> list:
    """Cell counts per degree of the closure of the given top cells."""
    n = top.ndim
    counts = [0] * (n + 1)
    for spans in itertools.product((False, True), repeat=n):
        arr = top
        for j in range(n):
            if not spans[j]:
                arr = _dilate(arr, j)
        counts[sum(spans)] += int(arr.sum())
    return counts


def _khalimsky(top: np.ndarray) -> np.ndarray:
    """Closure of the top cells on the doubled-index grid.

    A cell lives at coordinates in {0..2R_i}: odd means the cell spans
    that axis, even means it sits at a vertex plane.  The cell's degree
    is the number of odd coordinates.
    """
    n = top.ndim
    kh = np.zeros(tuple(2 * r + 1 for r in top.shape), dtype=bool)
    for spans in itertools.product((False, True), repeat=n):
        arr = top
        idx = []
        for j in range(n):
            if spans[j]:
                idx.append(slice(1, None, 2))
            else:
                arr = _dilate(arr, j)
                idx.append(slice(0, None, 2))
        kh[tuple(idx)] = arr
    return kh


def _relative_data(rel: np.ndarray):
    """dims and sparse boundary dicts of the relative complex.

    Cell ids are flat indices into the doubled grid; a face of a
    relative cell is dropped when it lies in the subcomplex, which is
    exactly how the quotient boundary acts on the cell basis.  The face
    through the upper end of axis j carries sign +(-1)^(number of
    spanning axes before j), the lower end the opposite, the usual
    product orientation.
    """
    coords = np.argwhere(rel)
    dims: Dict[int, int] = {}
    sparse: Dict[int, Dict[int, Dict[int, int]]] = {}
    if coords.size == 0:
        return dims, sparse
    shape = rel.shape
    strides = np.empty(len(shape), dtype=np.int64)
    strides[-1] = 1
    for j in range(len(shape) - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    flat = coords @ strides
    odd = coords % 2 == 1
    degree = odd.sum(axis=1)
    for k, c in zip(*np.unique(degree, return_counts=True)):
        dims[int(k)] = int(c)
        if k >= 1:
            sparse[int(k)] = {}
    rel_flat = rel.reshape(-1)
    for i in range(len(coords)):
        k = int(degree[i])
        if k == 0:
            continue
        base = int(flat[i])
        entries: Dict[int, int] = {}
        sign = 1
        for j in np.flatnonzero(odd[i]):
            step = int(strides[j])
            if rel_flat[base + step]:
                entries[base + step] = sign
            if rel_flat[base - step]:
                entries[base - step] = -sign
            sign = -sign
        sparse[k][base] = entries
    return dims, sparse


@dataclass(frozen=True, eq=False)
class CubicalPair:
    """Top-cell masks for the pair ({f_eps <= Lam}, {f_eps <= -lam}).

    Both masks are boolean arrays with one entry per grid cube of the
    box; the sub mask is always contained in the total mask.
    """

    box: Tuple[Tuple[float, float], ...]
    resolution: Tuple[int, ...]
    total_mask: np.ndarray
    sub_mask: np.ndarray

    def __post_init__(self):
        if (self.total_mask.shape != self.resolution
                or self.sub_mask.shape != self.resolution):
            raise ConfigError("mask shapes disagree with the stated resolution")
        if bool(np.any(self.sub_mask & ~self.total_mask)):
            raise ConfigError("sub-level mask escapes the total mask; "
                              "the level pair is inverted")

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def relative_mask(self) -> np.ndarray:
        return self.total_mask & ~self.sub_mask

    def cell_counts(self) -> Tuple[int, ...]:
        """Relative cell counts per degree of the closed pair."""
        full = _closed_counts(self.total_mask)
        below = _closed_counts(self.sub_mask)
        return tuple(a - b for a, b in zip(full, below))

    @property
    def euler(self) -> int:
        return sum((-1) ** k * c for k, c in enumerate(self.cell_counts()))

    def homology(self) -> HomologyResult:
        if self.dimension > 3:
            raise ConfigError("exact cubical homology stops at ambient "
                              "dimension 3; use the Euler count instead")
        rel = _khalimsky(self.total_mask) & ~_khalimsky(self.sub_mask)
        dims, sparse = _relative_data(rel)
        if not dims:
            return HomologyResult({})
        raw = homology_of_complex(reduce_complex(dims, sparse))
        return HomologyResult({k: (b, tuple(t)) for k, (b, t) in raw.items()})

    def summary(self) -> dict:
        return {
            "box": [[lo, hi] for lo, hi in self.box],
            "resolution": list(self.resolution),
            "cells_total": int(self.total_mask.sum()),
            "cells_sub": int(self.sub_mask.sum()),
            "relative_cell_counts": list(self.cell_counts()),
            "euler": self.euler,
        }


def build_pair(problem: ProblemSpec, eps: float,
               lam: Optional[float] = None, Lam: Optional[float] = None,
               box=None, resolution=32) -> CubicalPair:
    """Classify top cells of the box by the value of f_eps at centers."""
    lam = problem.window.lam if lam is None else float(lam)
    Lam = problem.window.Lam if Lam is None else float(Lam)
    if not -lam < Lam:
        raise ConfigError(f"sublevel pair (-{lam:g}, {Lam:g}) is inverted")
    box = tuple((float(lo), float(hi))
                for lo, hi in (box if box is not None else problem.domain.box))
    res = _per_axis(resolution, len(box))
    if len(problem.variables) != len(box):
        raise ConfigError("box dimension disagrees with the problem")
    fe = perturbed_function(problem, eps)
    total, sub = _top_masks(fe, problem.variables, box, res, lam, Lam)
    return CubicalPair(box, res, total, sub)


def _touches_rim(mask: np.ndarray) -> bool:
    for j in range(mask.ndim):
        if mask.take(0, axis=j).any() or mask.take(-1, axis=j).any():
            return True
    return False


def _grow_box(box, intervals):
    """Double each axis about its center, clipped to the domain.

    A finite domain end pins the corresponding box end where it is (the
    original box already sits a margin inside the domain); growth past
    it would step outside the problem.
    """
    out = []
    changed = False
    for (lo, hi), (ilo, ihi) in zip(box, intervals):
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nlo, nhi = c - 2.0 * h, c + 2.0 * h
        if math.isfinite(ilo):
            nlo = min(lo, max(nlo, ilo + 1e-3))
        if math.isfinite(ihi):
            nhi = max(hi, min(nhi, ihi - 1e-3))
        if (nlo, nhi) != (lo, hi):
            changed = True
        out.append((nlo, nhi))
    return tuple(out), changed


def sublevel_pair_homology(problem: ProblemSpec, eps: float,
                           lam: Optional[float] = None,
                           Lam: Optional[float] = None,
                           resolution=32, max_doublings: int = 5,
                           verify: bool = True) -> HomologyResult:
    """Relative integer homology of ({f_eps <= Lam}, {f_eps <= -lam}).

    The box starts at the problem's search box and doubles, at fixed
    cell size, until either the relative region keeps one clear cell
    away from every wall (truncation is then exact) or the computed
    groups stop changing between consecutive boxes.  With ``verify`` the
    final box is recomputed at twice the resolution and both answers
    must agree.

    Raises ResolutionTooCoarse when the growth budget runs out or the
    refinement cross-check disagrees.
    """
    n = len(problem.variables)
    if n > 3:
        raise ConfigError("exact cubical homology stops at ambient dimension "
                          "3; dimension 4 only supports the Euler count")
    box = tuple(problem.domain.box)
    res = _per_axis(resolution, n)
    cell = [(hi - lo) / r for (lo, hi), r in zip(box, res)]
    prev = None
    for _ in range(max_doublings + 1):
        pair = build_pair(problem, eps, lam, Lam, box=box, resolution=res)
        h = pair.homology()
        if not _touches_rim(pair.relative_mask):
            break
        if prev is not None and h.same_as(prev):
            break
        nbox, changed = _grow_box(box, problem.domain.intervals)
        if not changed:
            break
        prev = h
        box = nbox
        res = tuple(max(r, int(round((hi - lo) / c)))
                    for (lo, hi), r, c in zip(box, res, cell))
    else:
        raise ResolutionTooCoarse(
            f"relative homology kept changing as the box grew to {box}")
    if verify:
        fine = build_pair(problem, eps, lam, Lam, box=box,
                          resolution=tuple(2 * r for r in res))
        if not fine.homology().same_as(h):
            raise ResolutionTooCoarse(
                "relative homology changes under a 2x grid refinement; "
                "raise the resolution")
    return h


def pair_euler_characteristic(problem: ProblemSpec, eps: float,
                              lam: Optional[float] = None,
                              Lam: Optional[float] = None,
                              resolution=64, max_doublings: int = 3) -> int:
    """Alternating relative cell count of the pair, ambient dim <= 4.

    The box doubles at a fixed cell count until the count stops moving,
    so cells coarsen as the box grows.  This is the blunt instrument
    for dimension four, where exact homology is out of reach; in lower
    dimensions prefer sublevel_pair_homology.
    """
    n = len(problem.variables)
    if n > 4:
        raise ConfigError("Euler counting stops at ambient dimension 4")
    box = tuple(problem.domain.box)
    res = _per_axis(resolution, n)
    prev = None
    for _ in range(max_doublings + 1):
        pair = build_pair(problem, eps, lam, Lam, box=box, resolution=res)
        chi = pair.euler
        if not _touches_rim(pair.relative_mask):
            return chi
        if prev is not None and chi == prev:
            return chi
        nbox, changed = _grow_box(box, problem.domain.intervals)
        if not changed:
            return chi
        prev = chi
        box = nbox
    raise ResolutionTooCoarse(
        f"the Euler count kept changing as the box grew to {box}")


@dataclass(frozen=True)
class EulerReport:
    """Morse-side alternating point count against the oracle's chi."""

    morse_sum: int
    oracle_euler: int
    ok: bool

    def describe(self) -> str:
        verdict = "agree" if self.ok else "disagree"
        return (f"sum of (-1)^index = {self.morse_sum}, "
                f"oracle chi = {self.oracle_euler}: {verdict}")


def euler_check(points, oracle: Union[HomologyResult, CubicalPair, int]
                ) -> EulerReport:
    """Compare sum over critical points of (-1)^index with the oracle.

    ``oracle`` may be a HomologyResult, a CubicalPair, or a bare count
    from pair_euler_characteristic.
    """
    if isinstance(oracle, (HomologyResult, CubicalPair)):
        chi = oracle.euler
    else:
        chi = int(oracle)
    s = euler_characteristic(points)
    return EulerReport(s, chi, s == chi)


def _hand_problem(name: str, variables, f: str, tau: str,
                  domain: Optional[DomainModel] = None) -> ProblemSpec:
    domain = domain or DomainModel.full_space(len(variables))
    return ProblemSpec(name, tuple(variables), domain,
                       parse_expression(f), parse_expression(tau),
                       MetricSpec("euclidean"),
                       WindowSpec.finite_action(1.0, 10.0, 0.25))


def _ray_problem(name: str, f: str, tau: str) -> ProblemSpec:
    return _hand_problem(name, ("y",), f, tau,
                         DomainModel.from_intervals([(0.0, math.inf)]))


def _corner_problem() -> ProblemSpec:
    domain = DomainModel.from_intervals([(0.0, math.inf), (0.0, math.inf)])
    return _hand_problem("corner", ("y1", "y2"),
                         "-1/y1 - 1/y2", "y1 * y2", domain)


def _free(k: int, rank: int) -> HomologyResult:
    return HomologyResult({k: (rank, ())})


_TRIVIAL = HomologyResult({})


@dataclass(frozen=True)
class CatalogEntry:
    """A named problem with its hand-checked window homology.

    ``make`` builds a fresh ProblemSpec; eps, lam, Lam and resolution
    record the parameters the expectation was derived at.  ``note``
    says where the expected groups come from.
    """

    name: str
    make: Callable[[], ProblemSpec]
    eps: float
    lam: float
    Lam: float
    resolution: int
    ambient: int
    expected: HomologyResult
    euler: int
    note: str

    def problem(self) -> ProblemSpec:
        return self.make()


def _alg(n, terms, name):
    return lambda: realify(AlgebraicProblem(n, terms, name=name))


_CATALOG = {e.name: e for e in (
    CatalogEntry("z^2", _alg(1, (((2,), 1, 0),), "z^2"),
                 0.1, 1.0, 10.0, 32, 2, _free(1, 1), -1,
                 "a disk against the two lobes where Re z^2 has already "
                 "dropped below the window: one circle class"),
    CatalogEntry("z^3", _alg(1, (((3,), 1, 0),), "z^3"),
                 0.1, 1.0, 10.0, 32, 2, _free(1, 2), -2,
                 "three lobes below the window leave rank two in degree "
                 "one, the vanishing cycles of the cusp"),
    CatalogEntry("z^4", _alg(1, (((4,), 1, 0),), "z^4"),
                 0.1, 1.0, 10.0, 32, 2, _free(1, 3), -3,
                 "four lobes, rank three in degree one"),
    CatalogEntry("x_plus_x2y", _alg(2, (((1, 0), 1, 0), ((2, 1), 1, 0)),
                                    "x+x^2y"),
                 0.1, 1.0, 10.0, 16, 4, _free(2, 1), 1,
                 "ambient dimension four, so only the Euler count is "
                 "oracle-checkable; the single window class sits in "
                 "degree two"),
    CatalogEntry("double_well_1d",
                 lambda: _hand_problem("double-well", ("x",),
                                       "x^4 - x^2", "pow(1 + x^2, -1/2)"),
                 0.05, 1.0, 10.0, 64, 1, _free(0, 1), 1,
                 "all three critical values sit inside the window; the "
                 "pair is an interval against nothing"),
    CatalogEntry("single_min_1d",
                 lambda: _hand_problem("bowl", ("x",),
                                       "x^2", "pow(1 + x^2, -1)"),
                 0.1, 1.0, 10.0, 64, 1, _free(0, 1), 1,
                 "one minimum at value eps"),
    CatalogEntry("linear_y",
                 lambda: _ray_problem("ray-linear", "y", "y"),
                 0.1, 1.0, 10.0, 64, 1, _free(0, 1), 1,
                 "minimum 2 sqrt(eps) on the open ray; the lower "
                 "sublevel set is empty"),
    CatalogEntry("inverse_y",
                 lambda: _ray_problem("ray-inverse", "-1/y", "2 * y^2"),
                 0.1, 1.0, 10.0, 128, 1, _TRIVIAL, 0,
                 "the single critical value -1/(2 eps) dives below the "
                 "window for every admissible eps, so an interval "
                 "retracts onto a subinterval and nothing survives"),
    CatalogEntry("corner_2d", _corner_problem,
                 0.1, 1.0, 10.0, 48, 2, _TRIVIAL, 0,
                 "the corner saddle at value -1/eps is below the window "
                 "and the total set retracts onto the sub set"),
)}


def catalog_lookup(name: str) -> CatalogEntry:
    try:
        return _CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(_CATALOG))
        raise UnknownEntry(
            f"no catalog entry named {name!r}; known entries: {known}"
        ) from None


def catalog_names() -> Tuple[str, ...]:
    return tuple(sorted(_CATALOG))
