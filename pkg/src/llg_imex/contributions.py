"""Lower-order effective field contributions and the three Pi_h strategies.

A lower-order field is kept in its *raw* form (``FieldTerms``): nodal data
for contributions that live in the P1 space (uniaxial anisotropy) and
element-constant data for the stray field and the Zhang-Li torque.  The
integrator consumes the lumped-L2 projection of the raw terms, while the
energy diagnostics integrate the raw terms exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .demag import StrayFieldSolver
from .fem import FESpace


class PiStrategy(str, Enum):
    MIDPOINT = "mp"
    ADAMS_BASHFORTH = "ab"
    EXPLICIT_EULER = "ee"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"midpoint": "mp", "adams-bashforth": "ab", "adamsbashforth": "ab",
                   "explicit-euler": "ee", "euler": "ee", "expliciteuler": "ee"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}; use mp, ab or ee") from None


@dataclass
class FieldTerms:
    """Raw lower-order field: linear nodal part, linear and nonlinear element parts."""

    nodal: np.ndarray
    element: np.ndarray
    element_nonlinear: np.ndarray

    def __add__(self, other):
        return FieldTerms(self.nodal + other.nodal, self.element + other.element,
                          self.element_nonlinear + other.element_nonlinear)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, a):
        return FieldTerms(a * self.nodal, a * self.element, a * self.element_nonlinear)

    def project(self, space):
        """P_h of the whole field (nodal output)."""
        out = space.project(self.nodal) if np.any(self.nodal) else np.zeros_like(self.nodal)
        elem = self.element + self.element_nonlinear
        if np.any(elem):
            out = out + space.project(elem)
        return out

    def inner_l2(self, space, v, linear_only=False):
        """Exact L2 product of the field with a P1 field ``v``."""
        val = space.inner_l2(self.nodal, v) + space.inner_l2_element(self.element, v)
        if not linear_only:
            val += space.inner_l2_element(self.element_nonlinear, v)
        return val


@dataclass(frozen=True)
class UniaxialAnisotropy:
    axis: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        if a.shape != (3,) or abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("anisotropy axis must be a unit 3-vector")
        object.__setattr__(self, "axis", a)

    def __call__(self, m):
        return np.outer(m @ self.axis, self.axis)


@dataclass(frozen=True)
class ZhangLi:
    """Spin-transfer torque ``m x (v.grad) m + xi (v.grad) m``.

    ``velocity`` is a constant 3-vector or an element field (M, 3).
    """

    velocity: np.ndarray
    xi: float

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not self.xi > 0:
            raise ValueError("Zhang-Li nonadiabaticity xi must be positive")

    def __call__(self, m, space):
        dm = space.directional_derivative(m, self.velocity)
        m_avg = space.averager @ m
        return np.cross(m_avg, dm) + self.xi * dm


class ContributionSet:
    """Which lower-order terms enter the effective field, plus the applied field.

    ``applied_field`` is a constant 3-vector, a nodal (N, 3) array, or a
    callable ``f(x, t)`` of the (N, 3) node coordinates and time.
    """

    def __init__(self, space, stray=None, anisotropy=None, zhang_li=None, applied_field=None):
        if not isinstance(space, FESpace):
            space = FESpace(space)
        self.space = space
        if stray is True:
            stray = StrayFieldSolver(space)
        self.stray = stray or None
        if anisotropy is not None and not isinstance(anisotropy, UniaxialAnisotropy):
            anisotropy = UniaxialAnisotropy(anisotropy)
        self.anisotropy = anisotropy
        if zhang_li is not None and not isinstance(zhang_li, ZhangLi):
            zhang_li = ZhangLi(*zhang_li)
        self.zhang_li = zhang_li
        self.applied_field = np.zeros(3) if applied_field is None else applied_field
        self._f_cache = None
        self.stray_time = 0.0   # accumulated wall time inside stray solves

    @property
    def flags(self):
        """Contribution name -> linear and self-adjoint (gates the energy)."""
        out = {}
        if self.stray is not None:
            out["stray"] = True
        if self.anisotropy is not None:
            out["anisotropy"] = True
        if self.zhang_li is not None:
            out["zhang_li"] = False
        return out

    @property
    def has_lower_order(self):
        return bool(self.flags)

    @property
    def time_dependent_field(self):
        return callable(self.applied_field)

    def evaluate(self, m, stray_field=None):
        """Raw lower-order terms at ``m``.

        ``stray_field`` overrides the stray solve with a known element field
        (used when the field follows from linearity).
        """
        space = self.space
        nodal = np.zeros_like(m, dtype=float)
        element = np.zeros((space.mesh.n_elements, 3))
        nonlinear = np.zeros((space.mesh.n_elements, 3))
        if self.anisotropy is not None:
            nodal = self.anisotropy(m)
        if self.stray is not None:
            if stray_field is None:
                t0 = time.perf_counter()
                element = self.stray(m)
                self.stray_time += time.perf_counter() - t0
            else:
                element = stray_field
        if self.zhang_li is not None:
            nonlinear = self.zhang_li(m, space)
        return FieldTerms(nodal, element, nonlinear)

    def applied(self, t):
        """Nodal interpolant of the applied field at time ``t`` (cached when constant)."""
        if not callable(self.applied_field):
            if self._f_cache is None:
                self._f_cache = self.space.interpolate(self.applied_field)
            return self._f_cache
        return self.space.interpolate(self.applied_field, t)


def pi_h(contrib, m):
    """P_h-projected lower-order field at ``m``."""
    return contrib.evaluate(m).project(contrib.space)


def combine_terms(strategy, contrib, m_next, m_curr, m_prev):
    """Raw Pi_h(m_next, m_curr, m_prev) for the given strategy."""
    strategy = PiStrategy.parse(strategy)
    if strategy is PiStrategy.MIDPOINT:
        return contrib.evaluate(0.5 * (m_next + m_curr))
    if strategy is PiStrategy.ADAMS_BASHFORTH:
        return 1.5 * contrib.evaluate(m_curr) - 0.5 * contrib.evaluate(m_prev)
    return contrib.evaluate(m_curr)


def combine_pi(strategy, contrib, m_next, m_curr, m_prev):
    """P_h-projected Pi_h(m_next, m_curr, m_prev)."""
    return combine_terms(strategy, contrib, m_next, m_curr, m_prev).project(contrib.space)


def sample_applied_field(contrib, t_i, k):
    """f_h^{i+1/2}: nodal interpolant of the applied field at ``t_i + k/2``."""
    return contrib.applied(t_i + 0.5 * k)
