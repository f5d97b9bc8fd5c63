"""Objective/constraint metrics, target construction, spectral diagnostics.

Conventions used by every metric here: for a propagator ``u`` and register
projector ``p_r``, the register block is ``u_r = p_r @ u @ p_r``; the
objective is ``J = |Tr(o_r^dag u_r)|**2`` for a target ``o_r`` supported and
unitary on the register block, and the retained register population is
``C = Tr(u_r^dag u_r)``.  Fidelity is ``F = J / n_r**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .kernel import fft_amplitude
from .model import SystemModel, transition_table

__all__ = [
    "Trajectory",
    "FeatureCheck",
    "SpectrumReport",
    "register_indices",
    "objective",
    "register_population",
    "fidelity",
    "log10_infidelity",
    "fourier_target",
    "spectrum_report",
    "snapshot_export",
]


def register_indices(p_r) -> np.ndarray:
    """Level indices selected by a diagonal 0/1 projector."""
    return np.flatnonzero(np.abs(np.diag(np.asarray(p_r))) > 0.5)


@dataclass
class Trajectory:
    """Uniformly sampled record of one propagation run.

    All sequences have equal length ``n + 1`` for ``n`` steps; entry ``k``
    describes time ``times[k]``.  ``fields[k]`` is the complex drive applied
    over ``[times[k], times[k+1])``; the final entry is 0 by construction
    (nothing is applied after the last step).  ``snapshots`` optionally holds
    sparse ``(t, U)`` pairs.
    """

    times: np.ndarray
    fields: np.ndarray
    j_vals: np.ndarray
    c_vals: np.ndarray
    unit_residuals: np.ndarray
    snapshots: list = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=np.complex128)
        self.j_vals = np.asarray(self.j_vals, dtype=float)
        self.c_vals = np.asarray(self.c_vals, dtype=float)
        self.unit_residuals = np.asarray(self.unit_residuals, dtype=float)
        n = self.times.size
        for name in ("fields", "j_vals", "c_vals", "unit_residuals"):
            if getattr(self, name).size != n:
                raise StructureError(
                    f"trajectory sequence '{name}' has length "
                    f"{getattr(self, name).size}, expected {n}"
                )
        if n < 2:
            raise StructureError("trajectory needs at least two time samples")
        steps = np.diff(self.times)
        dt = float(self.times[-1] - self.times[0]) / (n - 1)
        if not dt > 0 or not np.all(np.abs(steps - dt) <= 1e-6 * dt):
            raise StructureError("trajectory times must be uniform and increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def applied_fields(self) -> np.ndarray:
        """The field samples actually applied (drops the trailing zero)."""
        return self.fields[:-1]


@dataclass(frozen=True)
class FeatureCheck:
    """Verdict for one expected spectral feature."""

    freq: float
    ratio: float
    status: str  # "pass" | "fail" | "unevaluable"

    @property
    def evaluable(self) -> bool:
        return self.status != "unevaluable"

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class SpectrumReport:
    """Field and intensity spectra with dip/peak verdicts.

    ``freqs`` is the nonnegative angular-frequency grid shared by
    ``field_amp`` (magnitude spectrum of the drive) and ``intensity_amp``
    (magnitude spectrum of ``|E(t)|**2``).  Each one-photon transition gets a
    dip check, each two-photon difference a peak check.
    """

    freqs: np.ndarray
    field_amp: np.ndarray
    intensity_amp: np.ndarray
    one_photon_dips: list
    two_photon_peaks: list


def objective(u, o_r, p_r) -> float:
    """Squared trace overlap J between the register block of u and the target."""
    if np.asarray(u).shape != np.asarray(p_r).shape:
        raise StructureError("objective: u and p_r dimensions disagree")
    reg = register_indices(p_r)
    u_blk = np.asarray(u, dtype=np.complex128)[np.ix_(reg, reg)]
    o_blk = np.asarray(o_r, dtype=np.complex128)[np.ix_(reg, reg)]
    return float(abs(np.vdot(o_blk, u_blk)) ** 2)


def register_population(u, p_r) -> float:
    """Retained register population C = Tr(u_r^dag u_r)."""
    reg = register_indices(p_r)
    u_blk = np.asarray(u, dtype=np.complex128)[np.ix_(reg, reg)]
    return float(np.sum(np.abs(u_blk) ** 2))


def fidelity(j: float, n_r: int) -> float:
    """Gate fidelity F = J / n_r**2."""
    if j < 0:
        raise StructureError(f"objective value must be >= 0, got {j}")
    return float(j) / float(n_r) ** 2


def log10_infidelity(f: float):
    """log10(1 - F), or None when F >= 1 to numerical precision."""
    if 1.0 - f <= 0.0:
        return None
    return math.log10(1.0 - f)


def fourier_target(n_r: int, model: SystemModel) -> np.ndarray:
    """Discrete-Fourier-transform gate embedded on the model's register.

    Full-dimension matrix, zero outside the register block; block entries are
    ``w**(j*k) / sqrt(n_r)`` with ``w = exp(2j*pi/n_r)``, indexed in register
    order.  Unitary on the register.
    """
    if n_r != model.n_register:
        raise StructureError(
            f"fourier_target: n_r={n_r} does not match register size {model.n_register}"
        )
    jk = np.mod(np.outer(np.arange(n_r), np.arange(n_r)), n_r)
    block = np.exp(2j * np.pi * jk / n_r) / np.sqrt(n_r)
    out = np.zeros((model.n_levels, model.n_levels), dtype=np.complex128)
    out[np.ix_(model.register, model.register)] = block
    return out


def _band_ratio(freqs, amps, nu, window, floor):
    """Amplitude near nu relative to the median of its surrounding band."""
    dw = freqs[1] - freqs[0]
    core = np.abs(freqs - nu) <= 1.5 * dw  # within +-1 bin of nu
    band = (np.abs(freqs - nu) <= window) & ~core
    if not np.any(core) or np.count_nonzero(band) < 4:
        return None
    ref = float(np.median(amps[band]))
    if ref <= floor:
        return None
    return float(np.max(amps[core])) / ref


def spectrum_report(
    traj: Trajectory,
    model: SystemModel,
    window: float = None,
    dip_threshold: float = 0.5,
    peak_threshold: float = 2.0,
) -> SpectrumReport:
    """Spectral-mechanism diagnostics of a completed run.

    Computes the magnitude spectrum of the drive and of its intensity
    ``|E(t)|**2`` on the nonnegative frequency axis, then checks for a dip at
    every one-photon transition of the model (amplitude within one bin of the
    transition at most ``dip_threshold`` times the median of the surrounding
    ``+-window`` band) and for a peak at every two-photon difference (at
    least ``peak_threshold`` times the band median).  ``window`` defaults to
    10 frequency bins.  Features beyond Nyquist, or in bands with negligible
    amplitude, are flagged unevaluable rather than failed.
    """
    e = traj.applied_fields
    dt = traj.dt
    freqs2, field2 = fft_amplitude(e, dt)
    _, inten2 = fft_amplitude(np.abs(e) ** 2, dt)
    keep = freqs2 >= 0.0
    freqs = freqs2[keep]
    field_amp = field2[keep]
    intensity_amp = inten2[keep]

    dw = 2.0 * np.pi / (e.size * dt)
    if window is None:
        window = 10.0 * dw
    if not window > 0:
        raise StructureError(f"window must be > 0, got {window}")
    nyquist = np.pi / dt

    one_photon, two_photon = transition_table(model)
    field_floor = 1e-9 * float(field_amp.max(initial=0.0))
    inten_floor = 1e-9 * float(intensity_amp.max(initial=0.0))

    dips = []
    for nu in one_photon:
        if nu > nyquist:
            dips.append(FeatureCheck(nu, math.nan, "unevaluable"))
            continue
        ratio = _band_ratio(freqs, field_amp, nu, window, field_floor)
        if ratio is None:
            dips.append(FeatureCheck(nu, math.nan, "unevaluable"))
        else:
            dips.append(
                FeatureCheck(nu, ratio, "pass" if ratio <= dip_threshold else "fail")
            )
    peaks = []
    for nu in two_photon:
        if nu > nyquist:
            peaks.append(FeatureCheck(nu, math.nan, "unevaluable"))
            continue
        ratio = _band_ratio(freqs, intensity_amp, nu, window, inten_floor)
        if ratio is None:
            peaks.append(FeatureCheck(nu, math.nan, "unevaluable"))
        else:
            peaks.append(
                FeatureCheck(nu, ratio, "pass" if ratio >= peak_threshold else "fail")
            )
    return SpectrumReport(
        freqs=freqs,
        field_amp=field_amp,
        intensity_amp=intensity_amp,
        one_photon_dips=dips,
        two_photon_peaks=peaks,
    )


def snapshot_export(u, p_r):
    """Register-block elements of u as ``(row, col, re, im)`` tuples.

    Rows/cols are block-local positions (0..n_r-1) in register order, ready
    for compass-style rendering of each element as a vector in the complex
    plane.
    """
    reg = register_indices(p_r)
    blk = np.asarray(u, dtype=np.complex128)[np.ix_(reg, reg)]
    out = []
    for a in range(reg.size):
        for b in range(reg.size):
            out.append((a, b, float(blk[a, b].real), float(blk[a, b].imag)))
    return out
