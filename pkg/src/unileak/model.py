"""Multilevel system definition: energies, dipole couplings, register.

A :class:`SystemModel` is a two-manifold level scheme (``ground`` and
``excited``) with a dipole operator that couples the manifolds and an ordered
register of ground levels that carries the computation.  All quantities are
in scaled units with hbar = 1: energies O(1-50), times O(1e2-1e4).

The dipole operator stores the excited-to-ground block only: ``dipole[i, j]``
may be nonzero exactly when level ``i`` is in the ground manifold and level
``j`` in the excited manifold.  The reverse block enters the dynamics through
the adjoint.  A consequence used throughout: the dipole never couples two
register levels directly, ``P_r @ dipole @ P_r == 0`` exactly.

Config files are JSON objects with keys ``levels``, ``dipole`` and
``register`` (see :func:`load_model`); unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError, StructureError

__all__ = [
    "LadderSpec",
    "SystemModel",
    "build_ladder",
    "load_model",
    "load_model_file",
    "default_config_path",
    "register_projector",
    "transition_table",
    "energy_to_wavenumber",
    "time_to_picoseconds",
]

GROUND = "ground"
EXCITED = "excited"

#: Minimum separation required between the one- and two-photon frequency
#: sets of a loaded model (keeps spectral diagnostics unambiguous).
FREQUENCY_SET_GAP = 0.1


@dataclass(frozen=True)
class LadderSpec:
    """Anharmonic-ladder generator for one manifold.

    Level ``k`` sits at ``offset + omega*(k + 1/2) - chi*(k + 1/2)**2``.
    """

    n: int
    omega: float
    chi: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"ladder n must be >= 1, got {self.n}")
        if not self.omega > 0:
            raise ConfigError(f"ladder omega must be > 0, got {self.omega}")
        if self.chi < 0:
            raise ConfigError(f"ladder chi must be >= 0, got {self.chi}")
        top = self.n + 0.5
        if self.chi * top * top >= self.omega * top:
            raise ConfigError(
                f"ladder chi={self.chi} too large for omega={self.omega}, n={self.n}: "
                "level ordering would invert inside the ladder"
            )

    def energies(self) -> np.ndarray:
        k = np.arange(self.n) + 0.5
        return self.offset + self.omega * k - self.chi * k * k


@dataclass(frozen=True)
class SystemModel:
    """Immutable level scheme with dipole couplings and register.

    Attributes:
        energies: level energies, one per level (scaled units).
        manifold: per-level tag, ``"ground"`` or ``"excited"``.
        dipole: complex coupling matrix; strictly ground-row x excited-column.
        register: ordered ground-level indices carrying the computation.
    """

    energies: np.ndarray
    manifold: tuple
    dipole: np.ndarray
    register: tuple

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        dipole = np.asarray(self.dipole, dtype=np.complex128)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "manifold", tuple(self.manifold))
        object.__setattr__(self, "dipole", dipole)
        object.__setattr__(self, "register", tuple(int(i) for i in self.register))
        n = energies.size
        if n == 0:
            raise StructureError("model needs at least one level")
        if not np.all(np.isfinite(energies)):
            raise StructureError("energies contain non-finite values")
        if len(self.manifold) != n:
            raise StructureError(
                f"manifold has {len(self.manifold)} tags for {n} levels"
            )
        bad = sorted({m for m in self.manifold if m not in (GROUND, EXCITED)})
        if bad:
            raise StructureError(f"unknown manifold tags: {bad}")
        if dipole.shape != (n, n):
            raise StructureError(
                f"dipole shape {dipole.shape} does not match {n} levels"
            )
        if not np.all(np.isfinite(dipole.real)) or not np.all(np.isfinite(dipole.imag)):
            raise StructureError("dipole contains non-finite entries")
        for i, j in zip(*np.nonzero(dipole)):
            if self.manifold[i] != GROUND or self.manifold[j] != EXCITED:
                raise StructureError(
                    f"dipole[{i},{j}] couples {self.manifold[i]}->{self.manifold[j]}; "
                    "only ground-row x excited-column entries are allowed"
                )
        for tag in (GROUND, EXCITED):
            idx = [i for i, m in enumerate(self.manifold) if m == tag]
            ee = energies[idx]
            if ee.size > 1 and not np.all(np.diff(ee) > 0):
                raise StructureError(
                    f"{tag}-manifold energies must be strictly ascending in index order"
                )
        if len(set(self.register)) != len(self.register):
            raise StructureError("register indices must be unique")
        if len(self.register) < 1:
            raise StructureError("register must contain at least one level")
        for i in self.register:
            if not 0 <= i < n:
                raise StructureError(f"register index {i} out of range for {n} levels")
            if self.manifold[i] != GROUND:
                raise StructureError(
                    f"register index {i} is not in the ground manifold"
                )

    @property
    def n_levels(self) -> int:
        return self.energies.size

    @property
    def n_register(self) -> int:
        return len(self.register)

    @property
    def ground_indices(self) -> tuple:
        return tuple(i for i, m in enumerate(self.manifold) if m == GROUND)

    @property
    def excited_indices(self) -> tuple:
        return tuple(i for i, m in enumerate(self.manifold) if m == EXCITED)


def _uniform_dipole(manifold) -> np.ndarray:
    n = len(manifold)
    dip = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            if manifold[i] == GROUND and manifold[j] == EXCITED:
                dip[i, j] = 1.0
    return dip


def build_ladder(
    spec_ground: LadderSpec,
    spec_excited: LadderSpec,
    dipole_rule="uniform",
    register_size: int = 2,
) -> SystemModel:
    """Assemble a two-ladder model: ground levels first, then excited.

    ``dipole_rule`` is either ``"uniform"`` (every ground-excited pair coupled
    with strength 1) or a callable ``(ground_index, excited_index) -> complex``
    evaluated on ladder-local indices.  The register is the first
    ``register_size`` ground levels; at least 2 are required.
    """
    if register_size > spec_ground.n:
        raise ConfigError(
            f"register_size={register_size} exceeds ground ladder size {spec_ground.n}"
        )
    if register_size < 2:
        raise ConfigError(f"register_size must be >= 2, got {register_size}")
    energies = np.concatenate([spec_ground.energies(), spec_excited.energies()])
    manifold = (GROUND,) * spec_ground.n + (EXCITED,) * spec_excited.n
    if dipole_rule == "uniform":
        dipole = _uniform_dipole(manifold)
    elif callable(dipole_rule):
        dipole = np.zeros((len(manifold),) * 2, dtype=np.complex128)
        for gi in range(spec_ground.n):
            for ej in range(spec_excited.n):
                dipole[gi, spec_ground.n + ej] = dipole_rule(gi, ej)
    else:
        raise ConfigError(f"unknown dipole_rule: {dipole_rule!r}")
    return SystemModel(
        energies=energies,
        manifold=manifold,
        dipole=dipole,
        register=tuple(range(register_size)),
    )


def _require_keys(obj: dict, allowed, required, where: str):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ConfigError(f"missing key(s) {missing} in {where}")


def _ladder_from_config(obj, where: str) -> LadderSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    _require_keys(obj, ("n", "omega", "chi", "offset"), ("n", "omega"), where)
    try:
        return LadderSpec(
            n=int(obj["n"]),
            omega=float(obj["omega"]),
            chi=float(obj.get("chi", 0.0)),
            offset=float(obj.get("offset", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in {where}: {exc}") from exc


def load_model(config_text: str) -> SystemModel:
    """Parse and validate a JSON model config, returning a SystemModel.

    Schema::

        {
          "levels": {"ladder": {"ground": {n, omega, chi?, offset?},
                                "excited": {n, omega, chi?, offset?}}}
                    | {"energies": [...], "manifold": ["ground"|"excited", ...]},
          "dipole": "uniform" | [[i, j, re, im], ...],
          "register": [indices...]
        }

    Explicit ``dipole`` entries override the uniform fill.  Indices are
    0-based.  Unknown keys anywhere are rejected.  Loaded models additionally
    require a register of at least two levels, and (when both sets are
    nonempty) a gap of at least ``FREQUENCY_SET_GAP`` between the one-photon
    and two-photon frequency sets.
    """
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(cfg, ("levels", "dipole", "register"), ("levels", "dipole", "register"), "config")

    levels = cfg["levels"]
    if not isinstance(levels, dict):
        raise ConfigError("'levels' must be an object")
    if "ladder" in levels:
        _require_keys(levels, ("ladder",), ("ladder",), "'levels'")
        ladder = levels["ladder"]
        if not isinstance(ladder, dict):
            raise ConfigError("'levels.ladder' must be an object")
        _require_keys(ladder, (GROUND, EXCITED), (GROUND, EXCITED), "'levels.ladder'")
        spec_g = _ladder_from_config(ladder[GROUND], "'levels.ladder.ground'")
        spec_e = _ladder_from_config(ladder[EXCITED], "'levels.ladder.excited'")
        energies = np.concatenate([spec_g.energies(), spec_e.energies()])
        manifold = (GROUND,) * spec_g.n + (EXCITED,) * spec_e.n
    else:
        _require_keys(levels, ("energies", "manifold"), ("energies", "manifold"), "'levels'")
        try:
            energies = np.asarray([float(e) for e in levels["energies"]], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad 'levels.energies': {exc}") from exc
        manifold = tuple(levels["manifold"])
        if len(manifold) != energies.size:
            raise ConfigError(
                "'levels.manifold' length does not match 'levels.energies'"
            )

    n = len(manifold)
    dip_cfg = cfg["dipole"]
    if dip_cfg == "uniform":
        dipole = _uniform_dipole(manifold)
    elif isinstance(dip_cfg, list):
        dipole = np.zeros((n, n), dtype=np.complex128)
        for k, entry in enumerate(dip_cfg):
            if not (isinstance(entry, list) and len(entry) == 4):
                raise ConfigError(
                    f"'dipole[{k}]' must be [i, j, re, im], got {entry!r}"
                )
            i, j = int(entry[0]), int(entry[1])
            if not (0 <= i < n and 0 <= j < n):
                raise ConfigError(f"'dipole[{k}]' index ({i},{j}) out of range")
            dipole[i, j] = float(entry[2]) + 1j * float(entry[3])
    else:
        raise ConfigError("'dipole' must be \"uniform\" or a list of [i, j, re, im]")

    register = cfg["register"]
    if not isinstance(register, list) or not all(isinstance(i, int) for i in register):
        raise ConfigError("'register' must be a list of integer level indices")
    if len(register) < 2:
        raise ConfigError(f"'register' must contain at least 2 levels, got {len(register)}")

    try:
        model = SystemModel(
            energies=energies, manifold=manifold, dipole=dipole, register=tuple(register)
        )
    except StructureError as exc:
        raise ConfigError(str(exc)) from exc

    one_photon, two_photon = transition_table(model)
    if one_photon and two_photon:
        gap = min(abs(a - b) for a in one_photon for b in two_photon)
        if gap < FREQUENCY_SET_GAP:
            raise ConfigError(
                f"one-photon and two-photon frequency sets come within {gap:.3g} "
                f"(< {FREQUENCY_SET_GAP}); adjust 'levels' to separate them"
            )
    return model


def load_model_file(path) -> SystemModel:
    """Load a model config from a file path (bare names resolve to shipped data)."""
    import os

    if not os.path.exists(path) and os.path.basename(str(path)) == str(path):
        shipped = resources.files("unileak").joinpath("data", str(path))
        if shipped.is_file():
            return load_model(shipped.read_text())
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_model(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def default_config_path() -> str:
    """Filesystem path of the shipped na2_like.json example config."""
    return str(resources.files("unileak").joinpath("data", "na2_like.json"))


def register_projector(model: SystemModel) -> np.ndarray:
    """Diagonal 0/1 projector onto the register levels."""
    p = np.zeros((model.n_levels, model.n_levels), dtype=np.complex128)
    for i in model.register:
        p[i, i] = 1.0
    return p


def transition_table(model: SystemModel):
    """One- and two-photon frequency sets of the model.

    Returns ``(one_photon, two_photon)``: sorted tuples of the distinct
    ground-excited gaps over nonzero dipole couplings, and of the distinct
    energy differences between register levels.
    """
    one = set()
    for i, j in zip(*np.nonzero(model.dipole)):
        one.add(abs(float(model.energies[i] - model.energies[j])))
    two = set()
    reg = model.register
    for a in range(len(reg)):
        for b in range(a + 1, len(reg)):
            two.add(abs(float(model.energies[reg[a]] - model.energies[reg[b]])))
    return tuple(sorted(one)), tuple(sorted(two))


# Reporting helpers only; the simulation itself never leaves scaled units.
_C_CM_PER_PS = 2.99792458e-2  # speed of light in cm/ps


def energy_to_wavenumber(energy: float, time_unit_ps: float = 1.0) -> float:
    """Scaled energy -> wavenumber in 1/cm, given the ps size of one time unit."""
    omega_rad_per_ps = energy / time_unit_ps
    return omega_rad_per_ps / (2.0 * math.pi * _C_CM_PER_PS)


def time_to_picoseconds(t: float, time_unit_ps: float = 1.0) -> float:
    """Scaled time -> picoseconds, given the ps size of one time unit."""
    return t * time_unit_ps
