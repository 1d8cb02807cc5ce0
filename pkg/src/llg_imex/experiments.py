"""Experiment drivers behind the ``llg`` command.

Each driver takes a resolved ``Config``, writes its outputs below
``cfg["out"]`` (always including ``config.resolved``) and returns a dict of
summary values.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import ConfigError
from .contributions import ContributionSet, PiStrategy
from .demag import StrayFieldSolver
from .fem import FESpace
from .integrator import IntegratorConfig, integrate
from .linsolve import SolverConfig
from .mesh import build_box_mesh, load_mesh
from .output import write_csv, write_summary, write_vtk

MU0 = 4e-7 * np.pi


def _outdir(cfg):
    out = Path(cfg.str("out"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.dump())
    return out


def build_mesh(cfg):
    mesh_file = cfg.get("mesh_file", "").strip()
    if mesh_file:
        return load_mesh(mesh_file)
    try:
        return build_box_mesh(cfg.int("nx", 1), cfg.int("ny", 1), cfg.int("nz", 1),
                              cfg.floats("lo", 3), cfg.floats("hi", 3))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_stray(cfg, space):
    if not cfg.bool("stray"):
        return None
    testing = cfg.str("stray_testing")
    if testing not in ("galerkin", "collocation"):
        raise ConfigError("stray_testing must be 'galerkin' or 'collocation'")
    return StrayFieldSolver(space, quadrature_order=cfg.int("stray_quadrature", 1), testing=testing,
                            cfg=SolverConfig(rtol=cfg.float("stray_rtol", positive=True)))


def integrator_config(cfg, k=None, T=None, strategy=None, alpha=None, c_ex=None):
    try:
        return IntegratorConfig(
            k=cfg.float("k", positive=True) if k is None else k,
            T=cfg.float("T", positive=True) if T is None else T,
            alpha=cfg.float("alpha", positive=True) if alpha is None else alpha,
            c_ex=cfg.float("c_ex", positive=True) if c_ex is None else c_ex,
            epsilon=cfg.float("epsilon", positive=True),
            strategy=cfg.str("strategy") if strategy is None else strategy,
            max_sweeps=cfg.int("max_sweeps", 1),
            first_step=cfg.str("first_step"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def uniform_state(mesh, direction):
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or np.linalg.norm(d) == 0:
        raise ConfigError("m0 must be a nonzero 3-vector")
    return np.tile(d / np.linalg.norm(d), (mesh.n_nodes, 1))


def _snapshot_steps(cfg, icfg):
    steps = {}
    for t in cfg.floats("snapshot_times"):
        i = int(round(t / icfg.k))
        if abs(i * icfg.k - t) > 1e-9 * max(1.0, t) or not 0 <= i <= icfg.n_steps:
            raise ConfigError(f"snapshot time {t} is not on the time grid")
        steps[i] = t
    return steps


def _run_with_outputs(cfg, icfg, contrib, m0, out, prefix="", store=()):
    """Integrate, writing the diagnostics CSV and VTK snapshots."""
    mesh = contrib.space.mesh
    snaps = _snapshot_steps(cfg, icfg)
    if 0 in snaps:
        write_vtk(mesh, m0, out / f"{prefix}m_{0:06d}.vtk")

    def callback(i, m, report):
        if i in snaps:
            write_vtk(mesh, m, out / f"{prefix}m_{i:06d}.vtk")

    traj = integrate(icfg, contrib, m0, store=list(store), callback=callback)
    write_csv(traj.diagnostics, out / f"{prefix}diagnostics.csv")
    return traj


def run_cube(cfg):
    """Unit cube, constant initial state, constant applied field, stray field on."""
    out = _outdir(cfg)
    mesh = build_mesh(cfg)
    space = FESpace(mesh)
    t0 = time.perf_counter()
    contrib = ContributionSet(space, stray=build_stray(cfg, space),
                              applied_field=np.array(cfg.floats("applied_field", 3)))
    setup = time.perf_counter() - t0
    icfg = integrator_config(cfg)
    m0 = uniform_state(mesh, cfg.floats("m0", 3))
    traj = _run_with_outputs(cfg, icfg, contrib, m0, out)
    summary = {"experiment": "cube", "strategy": icfg.strategy.value, "k": icfg.k,
               "n_elements": mesh.n_elements, "setup_seconds": setup}
    summary.update(traj.diagnostics.summary())
    summary["final_m_avg"] = ",".join(f"{v:.10g}" for v in diag.average_magnetization(
        traj.final_state, space.beta))
    write_summary(summary, out / "summary.txt")
    summary["trajectory"] = traj
    return summary


def run_convergence(cfg):
    """Empirical order of each strategy against one fine reference run.

    All runs end at the largest multiple of the coarsest step that does not
    exceed ``T``; errors are compared at the multiples of the coarsest step.
    """
    out = _outdir(cfg)
    mesh = build_mesh(cfg)
    space = FESpace(mesh)
    contrib = ContributionSet(space, stray=build_stray(cfg, space),
                              applied_field=np.array(cfg.floats("applied_field", 3)))
    m0 = uniform_state(mesh, cfg.floats("m0", 3))
    ks = sorted(cfg.floats("k_list"))
    k_ref = cfg.float("k_ref", positive=True)
    if len(ks) < 2 or ks[0] <= 0:
        raise ConfigError("k_list needs at least two positive step sizes")
    k_max = ks[-1]
    for k in ks:
        ratio = k / k_ref
        if k <= k_ref or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"k = {k} is not an integer multiple (> 1) of k_ref = {k_ref}")
        r2 = k_max / k
        if abs(r2 - round(r2)) > 1e-9 * r2:
            raise ConfigError(f"k = {k} does not divide the coarsest step {k_max}")
    n_coarse = int(np.floor(cfg.float("T", positive=True) / k_max + 1e-9))
    if n_coarse < 1:
        raise ConfigError("T is shorter than the coarsest step")
    T = n_coarse * k_max
    times = [j * k_max for j in range(n_coarse + 1)]
    strategies = [PiStrategy.parse(s) for s in cfg.words("strategies")]

    ref_strategy = PiStrategy.parse(cfg.str("reference_strategy"))
    ref_cfg = integrator_config(cfg, k=k_ref, T=n_coarse * round(k_max / k_ref) * k_ref,
                                strategy=ref_strategy)
    ref = integrate(ref_cfg, contrib, m0, store=int(round(k_max / k_ref)))

    rows = []
    orders = {}
    for s in strategies:
        errs = []
        for k in ks:
            n_per = int(round(k_max / k))
            icfg = integrator_config(cfg, k=k, T=n_coarse * n_per * k, strategy=s)
            traj = integrate(icfg, contrib, m0, store=n_per)
            err = diag.reference_error(ref, traj, space, times)
            errs.append(err)
            rows.append({"strategy": s.value, "k": k, "error": err,
                         "mean_sweeps": traj.diagnostics.summary()["mean_sweeps"]})
        orders[s.value] = diag.fit_order(ks, errs)

    with (out / "errors.csv").open("w") as fh:
        fh.write("strategy,k,error,mean_sweeps\n")
        for r in rows:
            fh.write(f"{r['strategy']},{r['k']:.17g},{r['error']:.17g},{r['mean_sweeps']:.17g}\n")
    summary = {"experiment": "convergence", "T_effective": T, "k_ref": k_ref,
               "reference_strategy": ref_strategy.value}
    summary.update({f"order_{s}": v for s, v in orders.items()})
    write_summary(summary, out / "summary.txt")
    summary["errors"] = rows
    summary["orders"] = orders
    return summary


def mumag5_scales(cfg):
    """Nondimensional exchange constant, spin velocity and time unit (seconds)."""
    L = cfg.float("length_scale", positive=True)
    A = cfg.float("exchange_A", positive=True)
    Ms = cfg.float("Ms", positive=True)
    g0 = cfg.float("gamma0", positive=True)
    c_ex = 2.0 * A / (MU0 * Ms ** 2 * L ** 2)
    v = -np.array(cfg.floats("v_tilde", 3)) / (g0 * Ms * L)
    return c_ex, v, 1.0 / (g0 * Ms)


def vortex_state(mesh, core_height=10.0):
    x = mesh.vertices
    m = np.stack([-x[:, 1], x[:, 0], np.full(len(x), core_height)], axis=1)
    return m / np.linalg.norm(m, axis=1)[:, None]


def run_mumag5(cfg):
    """Two-stage current-driven vortex run on a thin film.

    Stage 1 relaxes the analytic vortex without current (damping
    ``relax_alpha``), stage 2 switches on the spin-transfer torque until
    ``T_ns`` nanoseconds.
    """
    out = _outdir(cfg)
    mesh = build_mesh(cfg)
    space = FESpace(mesh)
    stray = build_stray(cfg, space)
    c_ex, v, t_unit = mumag5_scales(cfg)
    k = cfg.float("k", positive=True)

    relax_n = max(1, int(round(cfg.float("relax_T", positive=True) / k)))
    relax_cfg = integrator_config(cfg, k=k, T=relax_n * k, alpha=cfg.float("relax_alpha", positive=True),
                                  c_ex=c_ex)
    relax = integrate(relax_cfg, ContributionSet(space, stray=stray), vortex_state(mesh), store=[])
    write_csv(relax.diagnostics, out / "relax_diagnostics.csv")
    m_relaxed = relax.final_state
    write_vtk(mesh, m_relaxed, out / "relaxed.vtk")

    dyn_n = max(1, int(round(cfg.float("T_ns", positive=True) * 1e-9 / t_unit / k)))
    dyn_cfg = integrator_config(cfg, k=k, T=dyn_n * k, c_ex=c_ex)
    zl = (v, cfg.float("xi", positive=True)) if np.any(v) else None
    contrib = ContributionSet(space, stray=stray, zhang_li=zl)
    dyn = _run_with_outputs(cfg, dyn_cfg, contrib, m_relaxed, out, prefix="dynamic_")

    t_ns = dyn.diagnostics.column("t") * t_unit * 1e9
    rows = [{"t_ns": t, "mx_avg": r["mx_avg"], "my_avg": r["my_avg"], "mz_avg": r["mz_avg"]}
            for t, r in zip(t_ns, dyn.diagnostics.records)]
    write_csv(rows, out / "mumag5.csv", columns=("t_ns", "mx_avg", "my_avg", "mz_avg"))
    summary = {"experiment": "mumag5", "c_ex": c_ex, "v": ",".join(f"{x:.10g}" for x in v),
               "time_unit_s": t_unit, "k": k, "relax_steps": relax_n, "dynamic_steps": dyn_n,
               "relaxed_m_avg": ",".join(f"{relax.diagnostics[-1][c]:.10g}"
                                         for c in ("mx_avg", "my_avg", "mz_avg"))}
    summary.update({f"dynamic_{key}": val for key, val in dyn.diagnostics.summary().items()})
    write_summary(summary, out / "summary.txt")
    summary["relax"] = relax
    summary["dynamic"] = dyn
    summary["t_ns"] = t_ns
    return summary


def run_custom(cfg):
    """Any mesh and contribution set from the config keys."""
    out = _outdir(cfg)
    mesh = build_mesh(cfg)
    space = FESpace(mesh)
    aniso = cfg.floats("anisotropy_axis") or None
    zl_v = cfg.floats("zl_velocity")
    zl = (np.array(zl_v), cfg.float("zl_xi", positive=True)) if zl_v else None
    try:
        contrib = ContributionSet(space, stray=build_stray(cfg, space),
                                  anisotropy=None if aniso is None else np.array(aniso),
                                  zhang_li=zl, applied_field=np.array(cfg.floats("applied_field", 3)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    icfg = integrator_config(cfg)
    traj = _run_with_outputs(cfg, icfg, contrib, uniform_state(mesh, cfg.floats("m0", 3)), out)
    summary = {"experiment": "custom", "strategy": icfg.strategy.value, "k": icfg.k}
    summary.update(traj.diagnostics.summary())
    write_summary(summary, out / "summary.txt")
    summary["trajectory"] = traj
    return summary


RUNNERS = {"cube": run_cube, "convergence": run_convergence, "mumag5": run_mumag5,
           "custom": run_custom}
