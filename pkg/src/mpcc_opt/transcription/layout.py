"""Flat decision-vector layout.

Each element stores ``[x_i, xdot_i, y_i, u_{i-1}]`` contiguously.  Phases
after the first also own a copy of their initial state ``x_0`` (placed before
their first element).  The shared parameter block and the free durations
come last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


@dataclass
class PhaseLayout:
    n_x: int
    n_y: int
    n_u: int
    n_e: int
    start: int  # offset of element 1
    stage0: int  # global element index of element 1
    x0_start: int = -1  # -1: x_0 is the known initial state, not a variable
    t_index: int = -1  # -1: fixed grid
    widths: Optional[np.ndarray] = None
    t0: float = 0.0

    @property
    def elem_size(self) -> int:
        return 2 * self.n_x + self.n_y + self.n_u

    def _block(self, offset: int, width: int) -> np.ndarray:
        base = self.start + self.elem_size * np.arange(self.n_e)[:, None]
        return base + offset + np.arange(width)[None, :]

    @property
    def x_idx(self) -> np.ndarray:
        return self._block(0, self.n_x)

    @property
    def xdot_idx(self) -> np.ndarray:
        return self._block(self.n_x, self.n_x)

    @property
    def y_idx(self) -> np.ndarray:
        return self._block(2 * self.n_x, self.n_y)

    @property
    def u_idx(self) -> np.ndarray:
        return self._block(2 * self.n_x + self.n_y, self.n_u)

    @property
    def end(self) -> int:
        return self.start + self.n_e * self.elem_size

    def step_sizes(self, z: Optional[np.ndarray] = None, duration: Optional[float] = None) -> np.ndarray:
        if self.t_index < 0:
            return np.asarray(self.widths, dtype=float)
        T = duration if z is None else float(z[self.t_index])
        return np.full(self.n_e, T / self.n_e)


@dataclass
class VariableLayout:
    phases: List[PhaseLayout]
    p_start: int
    n_p: int
    n_z: int
    dyn_rows: List[np.ndarray] = field(default_factory=list)
    cont_rows: List[np.ndarray] = field(default_factory=list)
    compl_rows: List[np.ndarray] = field(default_factory=list)
    boundary_rows: List[np.ndarray] = field(default_factory=list)
    n_rows: int = 0
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    definitions: list = field(default_factory=list)

    # single-phase shortcuts
    def _only(self) -> PhaseLayout:
        return self.phases[0]

    @property
    def n_e(self) -> int:
        return sum(ph.n_e for ph in self.phases)

    @property
    def x_idx(self):
        return self._only().x_idx

    @property
    def xdot_idx(self):
        return self._only().xdot_idx

    @property
    def y_idx(self):
        return self._only().y_idx

    @property
    def u_idx(self):
        return self._only().u_idx

    @property
    def p_idx(self) -> np.ndarray:
        return self.p_start + np.arange(self.n_p)

    @property
    def t_indices(self) -> np.ndarray:
        return np.array([ph.t_index for ph in self.phases if ph.t_index >= 0], dtype=np.int64)

    @property
    def n_equalities(self) -> int:
        parts = self.dyn_rows + self.cont_rows + self.boundary_rows
        return int(sum(np.size(r) for r in parts))

    @property
    def n_relaxable(self) -> int:
        return int(sum(np.size(r) for r in self.compl_rows))

    def kind_of(self, k: int) -> Tuple[str, int, int, int]:
        """``(kind, phase, element, component)`` of flat index ``k``.

        Elements are numbered from 1; the ``u`` slot of element ``i`` holds
        ``u_{i-1}``.  ``x0`` entries report element 0, ``p`` and ``T`` -1.
        """
        k = int(k)
        if not 0 <= k < self.n_z:
            raise IndexError(f"index {k} outside layout of size {self.n_z}")
        if self.p_start <= k < self.p_start + self.n_p:
            return "p", -1, -1, k - self.p_start
        for q, ph in enumerate(self.phases):
            if ph.t_index == k:
                return "T", q, -1, 0
            if ph.x0_start >= 0 and ph.x0_start <= k < ph.x0_start + ph.n_x:
                return "x0", q, 0, k - ph.x0_start
            if ph.start <= k < ph.end:
                e, r = divmod(k - ph.start, ph.elem_size)
                for kind, width in (("x", ph.n_x), ("xdot", ph.n_x), ("y", ph.n_y), ("u", ph.n_u)):
                    if r < width:
                        return kind, q, e + 1, r
                    r -= width
        raise AssertionError("layout has a hole")  # pragma: no cover
