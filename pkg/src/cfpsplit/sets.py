"""Declarative convex sets with exact or iteratively computed projections.

Four variants: :class:`Box`, :class:`Halfspace`, :class:`Hyperplane` and
:class:`Composite` (a finite intersection projected by cyclic Dykstra
increments).  Every set exposes ``project``, ``dist``, ``contains`` and the
scaled proximity operator ``prox_scaled`` of ``mu * 0.5 * dist(.)^2``.

All sets are immutable after construction; projections are pure functions
and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "ConvexSet",
    "Box",
    "Halfspace",
    "Hyperplane",
    "Composite",
    "CompositeNoConvergeError",
    "make_block_projector",
]

_EPS_FLOOR = 8.0 * np.finfo(np.float64).eps


class CompositeNoConvergeError(RuntimeError):
    """Inner cyclic projection hit its iteration cap before converging.

    Raised instead of returning a best-effort point: a silently wrong
    projection would corrupt every solver built on top of it.  Also the
    signal that an intersection behaves as empty.
    """


class ConvexSet:
    """Base interface: a closed convex set in R^dim with a projection."""

    dim: int

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"point of dim {x.shape} given to set of dim {self.dim}")
        return x

    def dist(self, x: np.ndarray) -> float:
        """Euclidean distance to the set, ``norm(x - project(x))``."""
        x = self._check(x)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        """Membership within tolerance: ``dist(x) <= tol``."""
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return self.dist(x) <= tol

    def prox_scaled(self, x: np.ndarray, mu: float) -> np.ndarray:
        """Proximity operator of ``mu * 0.5 * dist(.)^2``: (x + mu*P(x))/(1+mu)."""
        if mu <= 0:
            raise ValueError("mu must be positive")
        x = self._check(x)
        return (x + mu * self.project(x)) / (1.0 + mu)


@dataclass(frozen=True)
class Box(ConvexSet):
    """Coordinatewise bounds ``lower <= x <= upper``; ±inf for one-sided."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("lower/upper must be equal-length 1-D arrays")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("need lower <= upper coordinatewise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class Halfspace(ConvexSet):
    """``{x : a.x <= b}`` with ``a != 0``."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        if a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
            raise ValueError("a must be a finite 1-D vector")
        if not np.any(a != 0):
            raise ValueError("a must be nonzero")
        if not np.isfinite(self.b):
            raise ValueError("b must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        excess = float(self.a @ x) - self.b
        if excess <= 0:
            return x.copy()
        return x - (excess / float(self.a @ self.a)) * self.a


@dataclass(frozen=True)
class Hyperplane(ConvexSet):
    """``{x : a.x = b}`` with ``a != 0``."""

    a: np.ndarray
    b: float

    __post_init__ = Halfspace.__post_init__

    @property
    def dim(self) -> int:
        return self.a.size

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        offset = float(self.a @ x) - self.b
        return x - (offset / float(self.a @ self.a)) * self.a


@dataclass(frozen=True)
class Composite(ConvexSet):
    """Intersection of member sets over one dimension.

    The projection runs cyclic projections with Dykstra increments over the
    members (exact in the limit for closed convex intersections) until the
    membership residual ``max_m dist(x, member_m)`` and the full-cycle
    movement both drop below ``inner_tol``.  A nonempty intersection is a
    runtime property, never assumed; a stalled cycle raises
    :class:`CompositeNoConvergeError`.
    """

    members: tuple
    inner_tol: float = 1e-10
    inner_max_iter: int = 10_000

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("Composite needs at least one member")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise ValueError("Composite members must share one dimension")
        if not (self.inner_tol > 0):
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be >= 1")
        object.__setattr__(self, "members", members)

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def _residual(self, x: np.ndarray) -> float:
        return max(m.dist(x) for m in self.members)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        cur = x.copy()
        incr = [np.zeros(self.dim) for _ in self.members]
        for _ in range(self.inner_max_iter):
            start = cur.copy()
            for m, member in enumerate(self.members):
                y = cur + incr[m]
                cur = member.project(y)
                incr[m] = y - cur
            move = float(np.linalg.norm(cur - start))
            move_tol = max(self.inner_tol, _EPS_FLOOR * (1.0 + float(np.linalg.norm(cur))))
            if move <= move_tol and self._residual(cur) <= move_tol:
                return cur
        raise CompositeNoConvergeError(
            f"no convergence after {self.inner_max_iter} cycles "
            "(intersection may be empty)"
        )


def _slot_form(s: ConvexSet):
    """Decompose a set into (hyperplane, halfspace, box) slots if possible.

    Returns ``None`` for sets the batched kernel cannot represent (e.g.
    composites with repeated member types or a non-canonical order).
    """
    if isinstance(s, Composite):
        hyper = half = box = None
        rank = -1
        order = {Hyperplane: 0, Halfspace: 1, Box: 2}
        for m in s.members:
            r = order.get(type(m))
            if r is None or r <= rank:
                return None
            rank = r
            if isinstance(m, Hyperplane):
                hyper = m
            elif isinstance(m, Halfspace):
                half = m
            else:
                box = m
        return hyper, half, box, s.inner_tol, s.inner_max_iter
    if isinstance(s, Hyperplane):
        return s, None, None, 1e-10, 2
    if isinstance(s, Halfspace):
        return None, s, None, 1e-10, 2
    if isinstance(s, Box):
        return None, None, s, 1e-10, 2
    return None


class BlockProjector:
    """Projects a list of blocks onto per-block sets in one batched call.

    Kernel-compatible sets (primitives and hyperplane/halfspace/box
    composites in canonical member order) share one padded kernel
    invocation; anything else falls back to its own ``project``.
    """

    def __init__(self, sets):
        self.sets = tuple(sets)
        self.dims = np.asarray([s.dim for s in self.sets], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        self.slices = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]
        self.total = int(offsets[-1])

        forms = [_slot_form(s) for s in self.sets]
        self.kernel_rows = [i for i, f in enumerate(forms) if f is not None]
        self.python_rows = [i for i, f in enumerate(forms) if f is None]

        n = len(self.kernel_rows)
        width = int(self.dims[self.kernel_rows].max()) if n else 0
        self._z = np.zeros((n, width))
        self._out = np.zeros((n, width))
        self._cycles = np.zeros(n, dtype=np.int64)
        self._kdims = self.dims[self.kernel_rows].astype(np.int64)
        self._has_h = np.zeros(n, dtype=np.bool_)
        self._ah = np.zeros((n, width))
        self._bh = np.zeros(n)
        self._nh2 = np.ones(n)
        self._has_g = np.zeros(n, dtype=np.bool_)
        self._ag = np.zeros((n, width))
        self._bg = np.zeros(n)
        self._ng2 = np.ones(n)
        self._has_box = np.zeros(n, dtype=np.bool_)
        self._lo = np.full((n, width), -np.inf)
        self._hi = np.full((n, width), np.inf)
        self._tol = np.full(n, 1e-10)
        self._max_cycles = np.full(n, 2, dtype=np.int64)
        for r, i in enumerate(self.kernel_rows):
            hyper, half, box, tol, max_iter = forms[i]
            d = self.dims[i]
            if hyper is not None:
                self._has_h[r] = True
                self._ah[r, :d] = hyper.a
                self._bh[r] = hyper.b
                self._nh2[r] = float(hyper.a @ hyper.a)
            if half is not None:
                self._has_g[r] = True
                self._ag[r, :d] = half.a
                self._bg[r] = half.b
                self._ng2[r] = float(half.a @ half.a)
            if box is not None:
                self._has_box[r] = True
                self._lo[r, :d] = box.lower
                self._hi[r, :d] = box.upper
            self._tol[r] = tol
            self._max_cycles[r] = max_iter

    def project(self, S: np.ndarray) -> np.ndarray:
        """Blockwise projection of a flat stacked vector."""
        if S.shape != (self.total,):
            raise ValueError("stacked vector does not conform to the block layout")
        out = np.empty_like(S)
        if self.kernel_rows:
            for r, i in enumerate(self.kernel_rows):
                self._z[r, : self.dims[i]] = S[self.slices[i]]
            _kernels.dykstra_rows(
                self._z,
                self._kdims,
                self._has_h,
                self._ah,
                self._bh,
                self._nh2,
                self._has_g,
                self._ag,
                self._bg,
                self._ng2,
                self._has_box,
                self._lo,
                self._hi,
                self._tol,
                self._max_cycles,
                self._out,
                self._cycles,
            )
            bad = np.flatnonzero(self._cycles < 0)
            if bad.size:
                agent = self.kernel_rows[int(bad[0])]
                raise CompositeNoConvergeError(
                    f"block {agent}: no convergence within the inner cycle cap"
                )
            for r, i in enumerate(self.kernel_rows):
                out[self.slices[i]] = self._out[r, : self.dims[i]]
        for i in self.python_rows:
            out[self.slices[i]] = self.sets[i].project(S[self.slices[i]])
        return out

    def block_dists(self, S: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
        """Per-block distances ``norm(S_i - P_i)``; reuses ``P`` if given."""
        if P is None:
            P = self.project(S)
        return np.asarray(
            [float(np.linalg.norm(S[sl] - P[sl])) for sl in self.slices]
        )


def make_block_projector(sets) -> BlockProjector:
    """Build a :class:`BlockProjector` for a per-agent set list."""
    return BlockProjector(sets)
