"""Interaction-picture dipole, Hamiltonian assembly, unitary propagation.

The free motion is removed by working in the frame co-rotating with the level
energies: the dipole acquires phases ``mu[i, j] * exp(1j*(E_i - E_j)*t)`` and
the drive enters through ``H(t) = -mu_t(t)*E - mu_t(t)^dag * conj(E)``.  With
zero drive the propagator is exactly constant.

Propagation uses a zeroth-order hold on the field with the rotating dipole
evaluated at the step midpoint: second-order accurate in the step size
without needing field values the feedback loop has not produced yet.  The
propagator is never renormalized; its unitarity residual is recorded as a
diagnostic so integrator defects stay visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from .analysis import Trajectory, objective, register_population
from .errors import ConfigError, StructureError
from .kernel import expm_unitary, frobenius_distance_to_unitary
from .model import SystemModel, register_projector

__all__ = [
    "Propagator",
    "interaction_dipole",
    "interaction_hamiltonian",
    "coupled_gap_max",
    "default_time_step",
    "check_step_size",
    "step",
    "replay",
]

#: Hard cap on dt * (largest coupled level gap); beyond this the midpoint
#: hold no longer resolves the dipole phases.
MAX_PHASE_PER_STEP = 0.5


@dataclass
class Propagator:
    """The evolving unitary and its current time."""

    u: np.ndarray
    t: float

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.complex128)

    @property
    def unitarity_residual(self) -> float:
        return frobenius_distance_to_unitary(self.u)


def interaction_dipole(model: SystemModel, t: float) -> np.ndarray:
    """Rotating-frame dipole: entrywise ``mu[i,j] * exp(1j*(E_i - E_j)*t)``."""
    e = model.energies
    return model.dipole * np.exp(1j * t * (e[:, None] - e[None, :]))


def interaction_hamiltonian(model: SystemModel, field: complex, t: float) -> np.ndarray:
    """Drive Hamiltonian ``-(mu_t * field + (mu_t * field)^dag)``; Hermitian."""
    x = interaction_dipole(model, t) * (-field)
    return x + x.conj().T


def coupled_gap_max(model: SystemModel) -> float:
    """Largest |E_i - E_j| over nonzero dipole couplings (0 if uncoupled)."""
    idx = np.nonzero(model.dipole)
    if idx[0].size == 0:
        return 0.0
    return float(np.abs(model.energies[idx[0]] - model.energies[idx[1]]).max())


def default_time_step(model: SystemModel, t_final: float) -> float:
    """Default dt: resolves all coupled phases, at least 2**16 samples."""
    cap = t_final / 2.0**16
    gap = coupled_gap_max(model)
    if gap > 0:
        cap = min(cap, 0.05 / gap)
    return cap


def check_step_size(model: SystemModel, dt: float):
    """Validate dt against the fastest coupled phase; raises ConfigError."""
    if not dt > 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    gap = coupled_gap_max(model)
    if dt * gap > MAX_PHASE_PER_STEP:
        raise ConfigError(
            f"dt={dt} too large: dt * max coupled gap = {dt * gap:.3g} "
            f"> {MAX_PHASE_PER_STEP}"
        )


def step(prop: Propagator, model: SystemModel, field: complex, dt: float) -> Propagator:
    """One zeroth-order-hold step: field constant, dipole at the midpoint."""
    h = interaction_hamiltonian(model, field, prop.t + 0.5 * dt)
    return Propagator(u=expm_unitary(h, dt) @ prop.u, t=prop.t + dt)


def _uniform_dt(times: np.ndarray) -> float:
    if times.size < 1:
        raise StructureError("field record is empty")
    if times.size == 1:
        raise StructureError("field record needs at least two samples to fix dt")
    diffs = np.diff(times)
    dt = float(diffs[0])
    if not dt > 0 or not np.all(np.abs(diffs - dt) <= 1e-6 * dt):
        raise StructureError("field record must be uniformly sampled in time")
    return dt


def replay(
    model: SystemModel,
    times,
    fields,
    u0,
    target,
    snapshot_count: int = 0,
) -> Trajectory:
    """Open-loop propagation of a stored field record.

    ``times``/``fields`` are the per-step samples produced by a synthesis run
    (each ``fields[k]`` held over ``[times[k], times[k] + dt)``).  ``u0`` is
    the starting propagator, typically the exact identity; ``target`` is the
    register unitary against which the objective is recorded.
    """
    times = np.asarray(times, dtype=float)
    fields = np.asarray(fields, dtype=np.complex128)
    if times.shape != fields.shape:
        raise StructureError("times and fields must have equal length")
    dt = _uniform_dt(times)
    check_step_size(model, dt)
    u0 = np.asarray(u0, dtype=np.complex128)
    if u0.shape != (model.n_levels, model.n_levels):
        raise StructureError(
            f"u0 shape {u0.shape} does not match model dimension {model.n_levels}"
        )
    reg = np.asarray(model.register, dtype=np.int64)
    ground_mask = np.array([m == "ground" for m in model.manifold])
    o_blk = np.asarray(target, dtype=np.complex128)[np.ix_(reg, reg)]
    snap_idx = _engine.snapshot_indices(times.size, snapshot_count)
    out = _engine.run_open_loop(
        model.energies,
        model.dipole,
        ground_mask,
        reg,
        o_blk,
        u0,
        float(times[0]),
        dt,
        fields,
        snap_idx,
    )
    fields_rec, j_vals, c_vals, resid, _u_fin, snaps = out
    full_times = times[0] + dt * np.arange(times.size + 1)
    snapshots = None
    if snapshot_count > 0:
        snapshots = [(full_times[i], snaps[k]) for k, i in enumerate(snap_idx)]
    return Trajectory(
        times=full_times,
        fields=fields_rec,
        j_vals=j_vals,
        c_vals=c_vals,
        unit_residuals=resid,
        snapshots=snapshots,
    )


def _reference_replay(model, times, fields, u0, target):
    """Step-composed twin of :func:`replay`; used to cross-check the engine."""
    times = np.asarray(times, dtype=float)
    dt = _uniform_dt(times)
    p_r = register_projector(model)
    prop = Propagator(u=np.array(u0, dtype=np.complex128), t=float(times[0]))
    j_vals, c_vals, resid, recs = [], [], [], []
    for e in np.asarray(fields, dtype=np.complex128):
        j_vals.append(objective(prop.u, target, p_r))
        c_vals.append(register_population(prop.u, p_r))
        resid.append(prop.unitarity_residual)
        recs.append(e)
        prop = step(prop, model, e, dt)
    j_vals.append(objective(prop.u, target, p_r))
    c_vals.append(register_population(prop.u, p_r))
    resid.append(prop.unitarity_residual)
    recs.append(0.0j)
    return Trajectory(
        times=times[0] + dt * np.arange(len(recs)),
        fields=np.array(recs),
        j_vals=np.array(j_vals),
        c_vals=np.array(c_vals),
        unit_residuals=np.array(resid),
    )
