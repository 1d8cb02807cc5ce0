"""Energies, invariant monitors, averaged observables and order fitting."""

from __future__ import annotations

import numpy as np

CSV_COLUMNS = ("step", "t", "energy", "e_exchange", "e_zeeman", "e_pi", "norm_dev_max",
               "energy_residual", "mx_avg", "my_avg", "mz_avg", "sweeps",
               "wtime_total", "wtime_stray")


def energy(config, contrib, m, f_now, terms=None):
    """Micromagnetic energy and its parts.

    ``E = c_ex/2 |grad m|^2 - 1/2 <pi_lin(m), m> - <f, m>`` with exact P1
    integration.  Only linear self-adjoint contributions (stray field,
    anisotropy) enter ``pi_lin``.  ``terms`` are the raw lower-order terms
    at ``m`` if already available.
    """
    space = contrib.space
    e_ex = 0.5 * config.c_ex * space.inner_grad(m, m)
    e_z = -space.inner_l2(f_now, m)
    e_pi = 0.0
    if contrib.stray is not None or contrib.anisotropy is not None:
        if terms is None:
            terms = contrib.evaluate(m)
        e_pi = -0.5 * terms.inner_l2(space, m, linear_only=True)
    return {"energy": e_ex + e_z + e_pi, "e_exchange": e_ex, "e_zeeman": e_z, "e_pi": e_pi}


def energy_balance_terms(config, contrib, m_curr, m_next, pi_used, f_half):
    """Per-step pieces of the discrete energy identity.

    Returns ``(exchange_rate, dissipation, work)`` with
    exchange_rate = c_ex/2 (|grad m+|^2 - |grad m|^2)/k,
    dissipation = |d_t m|_h^2 (without the factor alpha),
    work = <d_t m, Pi + f>.
    """
    space = contrib.space
    k = config.k
    dt = (m_next - m_curr) / k
    ex = 0.5 * config.c_ex * space.inner_grad(m_next + m_curr, dt)
    diss = space.inner_h(dt, dt)
    work = space.inner_l2(f_half, dt)
    if pi_used is not None:
        work += pi_used.inner_l2(space, dt)
    return ex, diss, work


def energy_identity_residual(config, contrib, m_curr, m_next, pi_used, f_half):
    """LHS - RHS of the per-step energy identity.

    ``c_ex/2 d_t|grad m|^2 + alpha |d_t m|_h^2 - <d_t m, Pi + f>``, which
    vanishes for the exact midpoint solve and is O(epsilon |d_t m|_h) for
    the inexact one.
    """
    ex, diss, work = energy_balance_terms(config, contrib, m_curr, m_next, pi_used, f_half)
    return ex + config.alpha * diss - work


def cumulative_balance_defect(config, contrib, m_first, m_last, dissipation, work, residuals):
    """Compare the telescoped identity with the sum of per-step residuals.

    ``c_ex/2 (|grad m^J|^2 - |grad m^0|^2) + k sum(alpha diss - work)``
    must equal ``k sum(residual)``.  Returns the absolute difference and the
    scale it should be compared against.
    """
    space = contrib.space
    k = config.k
    lhs = (0.5 * config.c_ex * space.inner_grad(m_last + m_first, m_last - m_first)
           + k * np.sum(config.alpha * np.asarray(dissipation) - np.asarray(work)))
    rhs = k * np.sum(residuals)
    scale = max(1.0, 0.5 * config.c_ex * space.inner_grad(m_last, m_last),
                k * np.sum(np.abs(work)))
    return abs(lhs - rhs), scale


def average_magnetization(m, beta):
    """Lumped average sum_l beta_l m(z_l) / |Omega|."""
    m = np.asarray(m, dtype=float)
    return beta @ m / beta.sum()


def norm_deviation(m, m0):
    """max_l | |m(z_l)| - |m0(z_l)| |."""
    return float(np.max(np.abs(np.linalg.norm(m, axis=1) - np.linalg.norm(m0, axis=1))))


def reference_error(traj_ref, traj, space, times=None):
    """max over shared output times of the L2 distance between two trajectories.

    Shared times default to every stored time of ``traj`` that also lies on
    the grid of ``traj_ref``.
    """
    if times is None:
        times = traj.stored_times()
    err = 0.0
    for t in times:
        d = traj_ref.state_at(t) - traj.state_at(t)
        err = max(err, space.norm_l2(d))
    return err


def fit_order(ks, errors):
    """Least-squares slope of log(error) against log(k)."""
    ks = np.asarray(ks, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ks.shape != errors.shape or ks.size < 2:
        raise ValueError("fit_order needs at least two (k, error) pairs")
    if np.any(ks <= 0) or np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise ValueError("fit_order needs positive finite step sizes and errors")
    if np.ptp(np.log(ks)) == 0:
        raise ValueError("fit_order needs at least two distinct step sizes")
    slope, _ = np.polyfit(np.log(ks), np.log(errors), 1)
    return float(slope)


class DiagnosticsSeries:
    """Per-step diagnostic records (one dict per step, including step 0)."""

    def __init__(self):
        self.records = []

    def append(self, record):
        if self.records and record["t"] < self.records[-1]["t"]:
            raise ValueError("diagnostics times must be non-decreasing")
        self.records.append(dict(record))

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([r.get(name, np.nan) for r in self.records], dtype=float)

    def summary(self):
        """Means over the executed steps (step 0 excluded)."""
        steps = self.records[1:]
        if not steps:
            return {"steps": 0}
        col = lambda n: np.array([r[n] for r in steps], dtype=float)
        return {
            "steps": len(steps),
            "mean_sweeps": float(col("sweeps").mean()),
            "mean_wtime_total": float(col("wtime_total").mean()),
            "mean_wtime_stray": float(col("wtime_stray").mean()),
            "mean_wtime_nodal": float(col("wtime_nodal").mean()),
            "mean_wtime_other": float(col("wtime_other").mean()),
            "mean_stray_solves": float(col("stray_solves").mean()),
            "max_norm_dev": float(col("norm_dev_max").max()),
            "max_abs_energy_residual": float(np.abs(col("energy_residual")).max()),
        }
