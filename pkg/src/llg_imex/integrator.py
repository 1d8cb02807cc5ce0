"""Implicit midpoint LLG integrator with an inexact fixed-point solver.

Each time-step solves for the midpoint ``eta = (m^{i+1} + m^i)/2`` by
sweeps that freeze the effective field ``h``: every node then solves the
3x3 system

    (2/k) eta + eta x ((2 alpha/k) m^i + h) = (2/k) m^i

in closed form.  The field is refreshed from the new ``eta`` and the sweeps
stop once the field update drops below ``epsilon`` in the lumped norm.
Because every sweep is a rotation of ``m^i`` the nodal lengths are kept to
round-off no matter how early the iteration is stopped.

The damping coefficient ``2 alpha / k`` follows from writing the midpoint
rule for ``d_t m = -m x h + alpha m x d_t m`` in terms of ``eta`` with
``d_t m = 2 (eta - m^i)/k``.

The exchange field is always implicit.  Lower-order terms enter through a
strategy: the midpoint value (``mp``, re-evaluated every sweep), the
Adams-Bashforth extrapolation ``3/2 pi(m^i) - 1/2 pi(m^{i-1})`` (``ab``), or
the explicit Euler value ``pi(m^i)`` (``ee``).  The latter two evaluate
``pi`` once per step.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .contributions import ContributionSet, FieldTerms, PiStrategy
from .linsolve import ConvergenceError, solve_node_cross


class FixedPointError(ConvergenceError):
    """The sweeps did not reach ``epsilon`` within ``max_sweeps``."""

    def __init__(self, message, history=(), step=None):
        super().__init__(message, history)
        self.step = step


@dataclass(frozen=True)
class IntegratorConfig:
    k: float
    T: float
    alpha: float = 1.0
    c_ex: float = 1.0
    epsilon: float = 1e-10
    strategy: PiStrategy = PiStrategy.ADAMS_BASHFORTH
    max_sweeps: int = 500
    first_step: str = "as-printed"

    def __post_init__(self):
        for name in ("k", "T", "alpha", "c_ex", "epsilon"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        object.__setattr__(self, "strategy", PiStrategy.parse(self.strategy))
        if int(self.max_sweeps) < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.first_step not in ("as-printed", "mp"):
            raise ValueError("first_step must be 'as-printed' or 'mp'")
        ratio = self.T / self.k
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T/k = {ratio!r} is not an integer step count")

    @property
    def n_steps(self):
        return int(round(self.T / self.k))

    def time(self, i):
        return i * self.k


@dataclass
class StepReport:
    sweeps: int
    residual: float
    wtime_stray: float
    wtime_other: float
    wtime_nodal: float
    stray_solves: int
    energy: dict = field(default_factory=dict)
    energy_residual: float = float("nan")
    dissipation: float = float("nan")
    work: float = float("nan")
    history: list = field(default_factory=list, repr=False)
    # raw lower-order data carried to the next step and to diagnostics
    pi_used: FieldTerms | None = field(default=None, repr=False)
    terms_next: FieldTerms | None = field(default=None, repr=False)
    f_half: np.ndarray | None = field(default=None, repr=False)

    @property
    def wtime_total(self):
        return self.wtime_stray + self.wtime_other + self.wtime_nodal


def effective_field(config, contrib, m_mid, pi_term, f_half):
    """``c_ex Delta_h m_mid + pi_term + P_h f_half``.

    ``pi_term`` is either an already projected nodal field or raw
    ``FieldTerms`` (projected here); ``None`` means no lower-order terms.
    """
    space = contrib.space
    h = config.c_ex * space.laplacian(m_mid)
    if isinstance(pi_term, FieldTerms):
        h += pi_term.project(space)
    elif pi_term is not None:
        h += pi_term
    if f_half is not None and np.any(f_half):
        h += space.project(f_half)
    return h


def _lower_order(strategy, contrib, terms_curr, terms_prev):
    if not contrib.has_lower_order:
        return None
    if strategy is PiStrategy.ADAMS_BASHFORTH:
        return 1.5 * terms_curr - 0.5 * terms_prev
    return terms_curr


def initial_field(config, contrib, m0, terms0=None):
    """``h^0`` from ``Pi(m^0, m^0, m^{-1})`` with ``m^{-1} = m^0`` and ``f^{1/2}``."""
    if terms0 is None and contrib.has_lower_order:
        terms0 = contrib.evaluate(m0)
    f_half = contrib.applied(0.5 * config.k)
    # every strategy reduces to pi(m^0) when m^{-1} = m^0
    return effective_field(config, contrib, m0, terms0, f_half), terms0


def fixed_point_step(config, contrib, m_prev, m_curr, h_curr, i=0,
                     terms_curr=None, terms_prev=None, strategy=None, diagnose=True):
    """Advance one step from ``m_curr`` (with ``m_prev`` the state before it).

    ``h_curr`` is the initial sweep field.  ``terms_curr``/``terms_prev`` are
    the raw lower-order terms at ``m_curr``/``m_prev`` when already known
    (they are evaluated otherwise).  Returns ``(m_next, h_next, report)``.
    """
    strategy = PiStrategy.parse(strategy or config.strategy)
    space = contrib.space
    k, alpha = config.k, config.alpha
    t_i = config.time(i)
    stray0, solves0 = contrib.stray_time, _stray_count(contrib)
    t_start = time.perf_counter()
    t_nodal = 0.0

    has_pi = contrib.has_lower_order
    if has_pi and terms_curr is None:
        terms_curr = contrib.evaluate(m_curr)
    if has_pi and terms_prev is None and strategy is PiStrategy.ADAMS_BASHFORTH:
        terms_prev = terms_curr if m_prev is m_curr else contrib.evaluate(m_prev)

    f_half = contrib.applied(t_i + 0.5 * k)
    f_proj = space.project(f_half) if np.any(f_half) else np.zeros_like(m_curr)

    pi_used = None
    pi_proj = None
    if has_pi and strategy is not PiStrategy.MIDPOINT:
        pi_used = _lower_order(strategy, contrib, terms_curr, terms_prev)
        pi_proj = pi_used.project(space)

    c = 2.0 / k
    a_base = (2.0 * alpha / k) * m_curr
    b = c * m_curr
    h = np.array(h_curr, dtype=float, copy=True)
    history = []
    converged = False
    for sweep in range(1, config.max_sweeps + 1):
        t0 = time.perf_counter()
        eta = solve_node_cross(c, h + a_base, b)
        t_nodal += time.perf_counter() - t0
        if has_pi and strategy is PiStrategy.MIDPOINT:
            pi_used = contrib.evaluate(eta)
            pi_proj = pi_used.project(space)
        h_new = config.c_ex * space.laplacian(eta) + f_proj
        if pi_proj is not None:
            h_new += pi_proj
        res = space.norm_h(h_new - h)
        history.append(res)
        h = h_new
        if res <= config.epsilon:
            converged = True
            break
    if not converged:
        raise FixedPointError(
            f"step {i}: fixed-point sweeps did not reach epsilon={config.epsilon:g} in "
            f"{config.max_sweeps} sweeps (last residual {history[-1]:.3e}); "
            "the time-step is likely too large for the mesh", history, step=i)

    m_next = 2.0 * eta - m_curr

    # field for the next step from Pi(m^{i+1}, m^{i+1}, m^i)
    terms_next = None
    pi_next = None
    if has_pi:
        if strategy is PiStrategy.MIDPOINT:
            # stray field is linear: pi(m^{i+1}) = 2 pi(eta) - pi(m^i), no extra solve
            stray_next = None
            if contrib.stray is not None:
                stray_next = 2.0 * pi_used.element - terms_curr.element
            terms_next = contrib.evaluate(m_next, stray_field=stray_next)
            pi_next = terms_next
        else:
            terms_next = contrib.evaluate(m_next)
            pi_next = _lower_order(strategy, contrib, terms_next, terms_curr)
    # the applied field keeps its value f^{i+1/2}; the next step's first sweep refreshes it
    h_next = effective_field(config, contrib, m_next, pi_next, f_half)

    report = StepReport(
        sweeps=sweep, residual=history[-1],
        wtime_stray=contrib.stray_time - stray0, wtime_other=0.0, wtime_nodal=t_nodal,
        stray_solves=_stray_count(contrib) - solves0, history=history,
        pi_used=pi_used, terms_next=terms_next, f_half=f_half)
    elapsed = time.perf_counter() - t_start
    report.wtime_other = max(0.0, elapsed - report.wtime_stray - t_nodal)

    if diagnose:
        ex, diss, work = diag.energy_balance_terms(config, contrib, m_curr, m_next, pi_used, f_half)
        report.dissipation, report.work = diss, work
        report.energy_residual = ex + alpha * diss - work
        f_now = contrib.applied(config.time(i + 1))
        report.energy = diag.energy(config, contrib, m_next, f_now, terms=terms_next)
    return m_next, h_next, report


def _stray_count(contrib):
    return contrib.stray.n_solves if contrib.stray is not None else 0


class Trajectory:
    """States ``m^i`` on the uniform grid ``t_i = i k`` plus per-step diagnostics.

    Only the states whose step index was requested are kept.  ``m^{-1}`` is
    identified with ``m^0``.
    """

    def __init__(self, config, m0, diagnostics=None):
        self.config = config
        self.k = config.k
        self.n_steps = config.n_steps
        self.m0 = np.array(m0, dtype=float)
        self.states = {0: self.m0}
        self.diagnostics = diagnostics if diagnostics is not None else diag.DiagnosticsSeries()
        self.reports = []
        self.dissipation = []
        self.work = []
        self.residuals = []

    def stored_steps(self):
        return sorted(self.states)

    def stored_times(self):
        return [i * self.k for i in self.stored_steps()]

    def index_of(self, t):
        """Step index for a grid time ``t`` (tolerant to round-off)."""
        x = t / self.k
        i = int(round(x))
        if abs(x - i) > 1e-8 * max(1.0, abs(x)):
            raise ValueError(f"t={t!r} is not a multiple of k={self.k!r}")
        return i

    def state(self, i):
        if i == -1:
            return self.m0
        if i not in self.states:
            raise KeyError(f"state {i} was not stored (stored: {len(self.states)} states)")
        return self.states[i]

    def state_at(self, t):
        return self.state(self.index_of(t))

    @property
    def final(self):
        return self.states[max(self.states)]


def reconstruct(trajectory, kind, t):
    """Piecewise-in-time reconstructions of the discrete solution.

    For ``t`` in ``[t_i, t_{i+1})``: ``left`` -> m^i, ``right`` -> m^{i+1},
    ``mean`` -> (m^i + m^{i+1})/2, ``lagged`` -> m^{i-1},
    ``linear`` -> linear interpolant.
    """
    k = trajectory.k
    T = trajectory.n_steps * k
    if not (0.0 <= t < T):
        raise ValueError(f"t={t!r} outside [0, {T!r})")
    x = t / k
    i = int(np.floor(x + 1e-9))
    i = min(i, trajectory.n_steps - 1)
    theta = min(max(x - i, 0.0), 1.0)
    if kind == "left":
        return trajectory.state(i)
    if kind == "right":
        return trajectory.state(i + 1)
    if kind == "mean":
        return 0.5 * (trajectory.state(i) + trajectory.state(i + 1))
    if kind == "lagged":
        if i < 1:
            raise ValueError("lagged reconstruction needs t >= k")
        return trajectory.state(i - 1)
    if kind == "linear":
        return (1.0 - theta) * trajectory.state(i) + theta * trajectory.state(i + 1)
    raise ValueError(f"unknown reconstruction kind {kind!r}")


def _record(traj, contrib, i, m, report, energy_parts):
    beta = contrib.space.beta
    avg = diag.average_magnetization(m, beta)
    rec = {
        "step": i, "t": i * traj.k,
        "energy": energy_parts["energy"], "e_exchange": energy_parts["e_exchange"],
        "e_zeeman": energy_parts["e_zeeman"], "e_pi": energy_parts["e_pi"],
        "norm_dev_max": diag.norm_deviation(m, traj.m0),
        "energy_residual": 0.0 if report is None else report.energy_residual,
        "mx_avg": avg[0], "my_avg": avg[1], "mz_avg": avg[2],
        "sweeps": 0 if report is None else report.sweeps,
        "wtime_total": 0.0 if report is None else report.wtime_total,
        "wtime_stray": 0.0 if report is None else report.wtime_stray,
        "wtime_nodal": 0.0 if report is None else report.wtime_nodal,
        "wtime_other": 0.0 if report is None else report.wtime_other,
        "stray_solves": 0 if report is None else report.stray_solves,
        "residual": 0.0 if report is None else report.residual,
    }
    traj.diagnostics.append(rec)


def integrate(config, contrib, m0, store=None, callback=None):
    """Run ``config.n_steps`` steps from ``m0``.

    ``store`` selects which states are kept: ``None``/``"all"`` keeps every
    state, an int ``s`` keeps every ``s``-th, an iterable keeps those step
    indices.  ``callback(i, m, report)`` is called after each step.
    """
    if not isinstance(contrib, ContributionSet):
        raise TypeError("contrib must be a ContributionSet")
    m0 = np.array(m0, dtype=float)
    space = contrib.space
    if m0.shape != (space.n_nodes, 3) or not np.all(np.isfinite(m0)):
        raise ValueError(f"m0 must be a finite ({space.n_nodes}, 3) array")
    norms = np.linalg.norm(m0, axis=1)
    if np.any(norms == 0):
        warnings.warn(f"{int(np.sum(norms == 0))} node(s) with |m0| = 0 stay fixed", RuntimeWarning)

    n = config.n_steps
    if store is None or store == "all":
        keep = lambda i: True
    elif isinstance(store, (int, np.integer)):
        keep = lambda i, s=int(store): i % s == 0 or i == n
    else:
        wanted = set(int(s) for s in store)
        keep = lambda i: i in wanted or i == n

    traj = Trajectory(config, m0)
    h, terms_curr = initial_field(config, contrib, m0)
    terms_prev = terms_curr
    f0 = contrib.applied(0.0)
    _record(traj, contrib, 0, m0, None, diag.energy(config, contrib, m0, f0, terms=terms_curr))

    m_prev, m_curr = m0, m0
    for i in range(n):
        strategy = config.strategy
        if i == 0 and config.first_step == "mp":
            strategy = PiStrategy.MIDPOINT
        try:
            m_next, h_next, report = fixed_point_step(
                config, contrib, m_prev, m_curr, h, i=i,
                terms_curr=terms_curr, terms_prev=terms_prev, strategy=strategy)
        except FixedPointError:
            raise
        except (ConvergenceError, ValueError, FloatingPointError) as exc:
            raise FixedPointError(f"step {i}: {exc}", getattr(exc, "history", ()), step=i) from exc
        if not np.all(np.isfinite(m_next)):
            raise FixedPointError(f"step {i}: non-finite magnetization", report.history, step=i)
        if i == 0 and strategy is not config.strategy and contrib.has_lower_order:
            # switching from MP to AB/EE: the carried field must use the run's strategy
            pi_next = _lower_order(config.strategy, contrib, report.terms_next, terms_curr)
            h_next = effective_field(config, contrib, m_next, pi_next, contrib.applied(0.5 * config.k))
        terms_next = report.terms_next
        traj.reports.append(_slim(report))
        traj.dissipation.append(report.dissipation)
        traj.work.append(report.work)
        traj.residuals.append(report.energy_residual)
        if keep(i + 1):
            traj.states[i + 1] = m_next
        _record(traj, contrib, i + 1, m_next, report, report.energy)
        if callback is not None:
            callback(i + 1, m_next, report)
        m_prev, m_curr, h = m_curr, m_next, h_next
        terms_prev, terms_curr = terms_curr, terms_next
    traj.final_state = m_curr
    return traj


def _slim(report):
    # drop large arrays so long runs keep only scalars
    report.pi_used = None
    report.terms_next = None
    report.f_half = None
    return report
