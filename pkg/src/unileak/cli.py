"""Command-line surface: synthesize drives, replay stored fields, analyze runs.

Subcommands
-----------
``unileak synth``    closed-loop synthesis; writes field/trajectory CSVs,
                     a JSON report and SVG plots.
``unileak replay``   open-loop propagation of a stored field CSV, from the
                     exact identity (``--pure``) or the seeded start.
``unileak analyze``  spectral diagnostics of a trajectory CSV: dip/peak
                     verdicts plus annotated SVG spectra.

Exit codes: 0 success, 2 invalid input/config, 3 numerical failure.
All artifacts are deterministic: identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import svgplot
from .analysis import (
    Trajectory,
    fidelity,
    fourier_target,
    log10_infidelity,
    objective,
    register_population,
    snapshot_export,
    spectrum_report,
)
from .controller import ControlParams, Envelope, seed_rotation, synthesize
from .dynamics import replay
from .errors import ConfigError, NumericsError, StructureError, UnileakError
from .model import SystemModel, load_model_file, register_projector, transition_table

__all__ = ["main", "RunReport"]

OUT_ENV_VAR = "UNILEAK_OUT"


@dataclass
class RunReport:
    """Summary of one command invocation, serialized to report.json."""

    command: str
    config_path: str
    config_digest: str
    params: dict
    n_steps: int = 0
    final: dict = field(default_factory=dict)
    max_constraint_drift: float = 0.0
    max_unitarity_residual: float = 0.0
    min_step_objective_delta: float = 0.0
    fidelity_first_crossings: dict = field(default_factory=dict)
    comparison: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    artifacts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return json.dumps(clean(self.__dict__), indent=2, sort_keys=True) + "\n"


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def write_field_csv(path, traj: Trajectory):
    """One row per applied step: ``t,e_re,e_im`` at full precision."""
    lines = ["t,e_re,e_im"]
    t = traj.times
    e = traj.fields
    for k in range(traj.n_steps):
        lines.append(f"{_g17(t[k])},{_g17(e[k].real)},{_g17(e[k].imag)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trajectory_csv(path, traj: Trajectory, stride: int = 1):
    """Per-sample records ``t,e_re,e_im,J,C,unit_residual`` (final row kept)."""
    lines = ["t,e_re,e_im,J,C,unit_residual"]
    n = traj.times.size
    idx = list(range(0, n, max(1, stride)))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    for k in idx:
        lines.append(
            f"{_g17(traj.times[k])},{_g17(traj.fields[k].real)},"
            f"{_g17(traj.fields[k].imag)},{_g17(traj.j_vals[k])},"
            f"{_g17(traj.c_vals[k])},{_g17(traj.unit_residuals[k])}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path):
    """Read a field CSV back as ``(times, complex fields)``."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise StructureError(f"cannot parse field CSV {path}: {exc}") from exc
    if data.shape[1] < 3 or data.shape[0] < 2:
        raise StructureError(f"field CSV {path} must have >= 2 rows of t,e_re,e_im")
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def read_trajectory_csv(path) -> Trajectory:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise StructureError(f"cannot parse trajectory CSV {path}: {exc}") from exc
    if data.shape[1] < 6 or data.shape[0] < 2:
        raise StructureError(
            f"trajectory CSV {path} is truncated: need >= 2 rows of "
            "t,e_re,e_im,J,C,unit_residual"
        )
    return Trajectory(
        times=data[:, 0],
        fields=data[:, 1] + 1j * data[:, 2],
        j_vals=data[:, 3],
        c_vals=data[:, 4],
        unit_residuals=data[:, 5],
    )


def _build_target(model: SystemModel, spec: str) -> np.ndarray:
    n_r = model.n_register
    if spec == "ft":
        return fourier_target(n_r, model)
    if spec == "identity":
        return register_projector(model)
    if spec.startswith("file:"):
        path = spec[5:]
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read target file {path}: {exc}") from exc
        rows = payload.get("matrix") if isinstance(payload, dict) else payload
        blk = np.array(
            [[complex(c[0], c[1]) for c in row] for row in rows], dtype=np.complex128
        )
        if blk.shape != (n_r, n_r):
            raise ConfigError(
                f"target matrix in {path} has shape {blk.shape}, expected ({n_r},{n_r})"
            )
        out = np.zeros((model.n_levels, model.n_levels), dtype=np.complex128)
        out[np.ix_(model.register, model.register)] = blk
        return out
    raise ConfigError(f"unknown target {spec!r}; use ft, identity or file:PATH")


def _parse_gain(text):
    if text is None:
        return None
    if text.startswith("sin2:"):
        return Envelope("sin2", float(text[5:]))
    return Envelope("constant", float(text))


def _out_dir(arg, default_leaf: str) -> str:
    root = arg or os.environ.get(OUT_ENV_VAR) or "unileak-out"
    path = root if arg else os.path.join(root, default_leaf)
    os.makedirs(path, exist_ok=True)
    return path


def _params_from_args(args) -> ControlParams:
    kwargs = {}
    if args.t_final is not None:
        kwargs["t_final"] = args.t_final
    if args.dt is not None:
        kwargs["dt"] = args.dt
    if args.e_max is not None:
        kwargs["e_max"] = args.e_max
    if args.seed_eps is not None:
        kwargs["seed_eps"] = args.seed_eps
    gain = _parse_gain(args.gain)
    if gain is not None:
        kwargs["gain"] = gain
    return ControlParams(**kwargs)


def _params_dict(params: ControlParams, model: SystemModel) -> dict:
    env = params.envelope()
    return {
        "t_final": params.t_final,
        "dt": params.resolve_dt(model),
        "e_max": params.e_max,
        "gain": {"kind": env.kind, "amplitude": env.amplitude},
        "seed_eps": params.seed_eps,
        "g_floor": params.g_floor,
    }


def _final_block(traj: Trajectory, n_r: int) -> dict:
    j = float(traj.j_vals[-1])
    f = fidelity(j, n_r)
    return {
        "J": j,
        "sqrt_J": math.sqrt(j),
        "C": float(traj.c_vals[-1]),
        "fidelity": f,
        "log10_infidelity": log10_infidelity(f),
    }


def _crossings(traj: Trajectory, n_r: int) -> dict:
    out = {}
    f_vals = traj.j_vals / n_r**2
    for thr in (0.5, 0.9, 0.99):
        idx = np.argmax(f_vals >= thr)
        out[str(thr)] = float(traj.times[idx]) if f_vals[idx] >= thr else None
    return out


def _plot_run(outdir, traj: Trajectory, model: SystemModel) -> dict:
    n_r = model.n_register
    arts = {}
    t = traj.times
    path = os.path.join(outdir, "field.svg")
    svgplot.line_plot(
        path,
        [
            svgplot.Series(t, traj.fields.real, "Re E", "#1f77b4", 0.8),
            svgplot.Series(t, np.abs(traj.fields), "|E|", "#d62728", 1.2),
        ],
        title="Drive field",
        xlabel="t (scaled units)",
        ylabel="E(t)",
    )
    arts["field_svg"] = path
    path = os.path.join(outdir, "objective.svg")
    svgplot.line_plot(
        path,
        [
            svgplot.Series(t, np.sqrt(traj.j_vals), "sqrt(J)", "#1f77b4", 1.4),
            svgplot.Series(t, traj.c_vals, "C", "#2ca02c", 1.4, dash="6,4"),
        ],
        title="Objective and register population",
        xlabel="t (scaled units)",
        ylabel=f"sqrt(J), C (max {n_r})",
    )
    arts["objective_svg"] = path
    return arts


def _plot_spectra(outdir, rep, model: SystemModel) -> dict:
    arts = {}
    one, two = transition_table(model)
    amp_at = np.interp(one, rep.freqs, rep.field_amp)
    hi = 1.3 * max(one) if one else float(rep.freqs[-1])
    path = os.path.join(outdir, "spectrum_field.svg")
    svgplot.line_plot(
        path,
        [svgplot.Series(rep.freqs, rep.field_amp, "|E(w)|", "#1f77b4", 0.9)],
        markers=[svgplot.Markers(np.array(one), amp_at, "circle", "#d62728", 4.5, "one-photon")],
        title="Field spectrum with one-photon transitions",
        xlabel="angular frequency (scaled units)",
        ylabel="|FFT E|",
        xlim=(0.0, hi),
    )
    arts["spectrum_field_svg"] = path
    amp2_at = np.interp(two, rep.freqs, rep.intensity_amp)
    hi2 = 1.5 * max(two) if two else float(rep.freqs[-1])
    path = os.path.join(outdir, "spectrum_intensity.svg")
    svgplot.line_plot(
        path,
        [svgplot.Series(rep.freqs, rep.intensity_amp, "| |E|^2(w) |", "#1f77b4", 0.9)],
        markers=[svgplot.Markers(np.array(two), amp2_at, "triangle", "#2ca02c", 4.5, "two-photon")],
        title="Intensity spectrum with two-photon differences",
        xlabel="angular frequency (scaled units)",
        ylabel="|FFT |E|^2|",
        xlim=(0.0, hi2),
    )
    arts["spectrum_intensity_svg"] = path
    return arts


def _write_snapshots(outdir, traj: Trajectory, model: SystemModel) -> dict:
    if not traj.snapshots:
        return {}
    p_r = register_projector(model)
    payload = []
    for t, u in traj.snapshots:
        payload.append(
            {"t": t, "elements": [list(e) for e in snapshot_export(u, p_r)]}
        )
    path = os.path.join(outdir, "snapshots.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"snapshots_json": path}


def _spectrum_payload(rep) -> dict:
    def rows(checks):
        return [
            {"freq": c.freq, "ratio": None if math.isnan(c.ratio) else c.ratio, "status": c.status}
            for c in checks
        ]

    dips = rows(rep.one_photon_dips)
    peaks = rows(rep.two_photon_peaks)
    return {
        "one_photon_dips": dips,
        "two_photon_peaks": peaks,
        "summary": {
            "dips_pass": sum(c.status == "pass" for c in rep.one_photon_dips),
            "dips_fail": sum(c.status == "fail" for c in rep.one_photon_dips),
            "dips_unevaluable": sum(
                c.status == "unevaluable" for c in rep.one_photon_dips
            ),
            "peaks_pass": sum(c.status == "pass" for c in rep.two_photon_peaks),
            "peaks_fail": sum(c.status == "fail" for c in rep.two_photon_peaks),
            "peaks_unevaluable": sum(
                c.status == "unevaluable" for c in rep.two_photon_peaks
            ),
        },
    }


def cmd_synth(args) -> int:
    t_start = time.perf_counter()
    model = load_model_file(args.config)
    params = _params_from_args(args)
    target = _build_target(model, args.target)
    outdir = _out_dir(args.out, "synth")
    traj = synthesize(model, target, params, snapshot_count=args.snapshots)

    arts = {}
    field_csv = os.path.join(outdir, "field.csv")
    write_field_csv(field_csv, traj)
    arts["field_csv"] = field_csv
    traj_csv = os.path.join(outdir, "trajectory.csv")
    write_trajectory_csv(traj_csv, traj, stride=args.traj_stride)
    arts["trajectory_csv"] = traj_csv
    arts.update(_plot_run(outdir, traj, model))
    rep = spectrum_report(traj, model)
    arts.update(_plot_spectra(outdir, rep, model))
    arts.update(_write_snapshots(outdir, traj, model))
    spec_path = os.path.join(outdir, "spectrum.json")
    with open(spec_path, "w", encoding="utf-8") as fh:
        json.dump(_spectrum_payload(rep), fh, indent=1, sort_keys=True)
        fh.write("\n")
    arts["spectrum_json"] = spec_path

    n_r = model.n_register
    report = RunReport(
        command="synth",
        config_path=str(args.config),
        config_digest=_digest_or_name(args.config),
        params=_params_dict(params, model),
        n_steps=traj.n_steps,
        final=_final_block(traj, n_r),
        max_constraint_drift=float(np.abs(traj.c_vals - traj.c_vals[0]).max()),
        max_unitarity_residual=float(traj.unit_residuals.max()),
        min_step_objective_delta=float(np.diff(traj.j_vals).min()),
        fidelity_first_crossings=_crossings(traj, n_r),
        wall_time_s=round(time.perf_counter() - t_start, 3),
        artifacts=arts,
    )
    report_path = os.path.join(outdir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    print(f"synth: F = {report.final['fidelity']:.6f} "
          f"(log10(1-F) = {report.final['log10_infidelity']}), "
          f"C drift = {report.max_constraint_drift:.3e}")
    print(f"artifacts in {outdir}")
    return 0


def _digest_or_name(config) -> str:
    from .model import default_config_path

    path = str(config)
    if not os.path.exists(path) and os.path.basename(path) == path:
        shipped = os.path.join(os.path.dirname(default_config_path()), path)
        if os.path.exists(shipped):
            path = shipped
    return _digest(path) if os.path.exists(path) else "unknown"


def cmd_replay(args) -> int:
    t_start = time.perf_counter()
    model = load_model_file(args.config)
    times, drive = read_field_csv(args.field_csv)

    prior = {}
    prior_path = os.path.join(os.path.dirname(os.path.abspath(args.field_csv)), "report.json")
    if os.path.exists(prior_path):
        try:
            with open(prior_path, "r", encoding="utf-8") as fh:
                prior = json.load(fh)
        except (OSError, json.JSONDecodeError):
            prior = {}

    seed_eps = args.seed_eps
    if seed_eps is None:
        seed_eps = prior.get("params", {}).get("seed_eps", ControlParams().seed_eps)
    target_spec = args.target or "ft"
    target = _build_target(model, target_spec)
    if args.pure:
        u0 = np.eye(model.n_levels, dtype=np.complex128)
    else:
        u0 = seed_rotation(model, seed_eps)
    outdir = _out_dir(args.out, "replay")
    traj = replay(model, times, drive, u0, target, snapshot_count=args.snapshots)

    arts = {}
    traj_csv = os.path.join(outdir, "trajectory.csv")
    write_trajectory_csv(traj_csv, traj, stride=args.traj_stride)
    arts["trajectory_csv"] = traj_csv
    arts.update(_plot_run(outdir, traj, model))
    arts.update(_write_snapshots(outdir, traj, model))

    n_r = model.n_register
    final = _final_block(traj, n_r)
    comparison = {}
    if prior.get("final"):
        f_prior = prior["final"].get("fidelity")
        if f_prior is not None:
            comparison = {
                "synthesis_fidelity": f_prior,
                "replay_fidelity": final["fidelity"],
                "fidelity_difference": final["fidelity"] - f_prior,
            }
    report = RunReport(
        command="replay" + (" --pure" if args.pure else ""),
        config_path=str(args.config),
        config_digest=_digest_or_name(args.config),
        params={"seed_eps": 0.0 if args.pure else seed_eps, "target": target_spec,
                "dt": float(times[1] - times[0]), "n_steps": int(times.size)},
        n_steps=traj.n_steps,
        final=final,
        max_constraint_drift=float(np.abs(traj.c_vals - traj.c_vals[0]).max()),
        max_unitarity_residual=float(traj.unit_residuals.max()),
        min_step_objective_delta=float(np.diff(traj.j_vals).min()),
        fidelity_first_crossings=_crossings(traj, n_r),
        comparison=comparison,
        wall_time_s=round(time.perf_counter() - t_start, 3),
        artifacts=arts,
    )
    report_path = os.path.join(outdir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    msg = f"replay: F = {final['fidelity']:.6f}"
    if comparison:
        msg += f" (delta vs synthesis = {comparison['fidelity_difference']:+.3e})"
    print(msg)
    print(f"artifacts in {outdir}")
    return 0


def cmd_analyze(args) -> int:
    t_start = time.perf_counter()
    model = load_model_file(args.config)
    traj = read_trajectory_csv(args.trajectory_csv)
    outdir = _out_dir(args.out, "analyze")
    rep = spectrum_report(
        traj,
        model,
        window=args.window,
        dip_threshold=args.dip_threshold,
        peak_threshold=args.peak_threshold,
    )
    arts = _plot_spectra(outdir, rep, model)
    payload = _spectrum_payload(rep)
    payload["wall_time_s"] = round(time.perf_counter() - t_start, 3)
    payload["artifacts"] = arts
    path = os.path.join(outdir, "spectrum.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    s = payload["summary"]
    print(
        f"analyze: one-photon dips {s['dips_pass']} pass / {s['dips_fail']} fail "
        f"/ {s['dips_unevaluable']} unevaluable; two-photon peaks "
        f"{s['peaks_pass']} pass / {s['peaks_fail']} fail / "
        f"{s['peaks_unevaluable']} unevaluable"
    )
    print(f"artifacts in {outdir}")
    return 0


def _sweep_values(spec: str):
    try:
        key, rng = spec.split("=", 1)
        a, b, n = rng.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ConfigError(f"bad --sweep spec {spec!r}; expected KEY=a:b:n") from exc
    allowed = {"t-final", "dt", "e-max", "gain", "seed-eps"}
    if key not in allowed:
        raise ConfigError(f"--sweep key must be one of {sorted(allowed)}, got {key!r}")
    if n < 1:
        raise ConfigError(f"--sweep point count must be >= 1, got {n}")
    vals = [a] if n == 1 else list(np.linspace(a, b, n))
    return key, vals


def _run_sweep_point(argv):
    """Entry point for one sweep worker process."""
    try:
        return main(argv)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)


def cmd_sweep(args, base_argv) -> int:
    key, vals = _sweep_values(args.sweep)
    outroot = _out_dir(args.out, "sweep")
    jobs = []
    for v in vals:
        sub = os.path.join(outroot, f"{key}={v:g}")
        argv = ["synth", "--config", str(args.config), "--out", sub, f"--{key}", repr(float(v))]
        argv += ["--target", args.target]
        for flag, val in (
            ("--t-final", args.t_final),
            ("--dt", args.dt),
            ("--e-max", args.e_max),
            ("--gain", args.gain),
            ("--seed-eps", args.seed_eps),
        ):
            if val is not None and flag != f"--{key}":
                argv += [flag, str(val)]
        if args.snapshots:
            argv += ["--snapshots", str(args.snapshots)]
        jobs.append((v, sub, argv))

    import concurrent.futures as cf

    results = {}
    workers = min(len(jobs), os.cpu_count() or 1)
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(_run_sweep_point, argv): (v, sub) for v, sub, argv in jobs}
        for fut in cf.as_completed(futs):
            v, sub = futs[fut]
            code = fut.result()
            entry = {"exit_code": code, "out_dir": sub}
            rp = os.path.join(sub, "report.json")
            if code == 0 and os.path.exists(rp):
                with open(rp, "r", encoding="utf-8") as fh:
                    entry["final"] = json.load(fh).get("final", {})
            results[f"{v:g}"] = entry
    summary_path = os.path.join(outroot, "sweep.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump({"key": key, "points": results}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"sweep over {key}: {len(jobs)} points, summary in {summary_path}")
    return 0 if all(r["exit_code"] == 0 for r in results.values()) else 3


def _float_or_none(text):
    return None if text is None else float(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="unileak",
        description="Synthesize and analyze leakage-free register-unitary drives.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="model config JSON (bare names resolve to shipped data)")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV_VAR} or ./unileak-out)")

    ps = sub.add_parser("synth", help="closed-loop drive synthesis")
    add_common(ps)
    ps.add_argument("--target", default="ft", help="ft | identity | file:PATH (default ft)")
    ps.add_argument("--t-final", type=float, default=None)
    ps.add_argument("--dt", type=float, default=None)
    ps.add_argument("--e-max", type=float, default=None)
    ps.add_argument("--gain", default=None, help="REAL (constant) or sin2:REAL")
    ps.add_argument("--seed-eps", type=float, default=None)
    ps.add_argument("--snapshots", type=int, default=0)
    ps.add_argument("--traj-stride", type=int, default=1, help="write every Nth trajectory row")
    ps.add_argument("--sweep", default=None, help="KEY=a:b:n, run n concurrent synth points")

    pr = sub.add_parser("replay", help="open-loop replay of a stored field")
    pr.add_argument("field_csv", help="field CSV from a synth run")
    add_common(pr)
    pr.add_argument("--pure", action="store_true", help="start from the exact identity")
    pr.add_argument("--target", default=None, help="ft | identity | file:PATH")
    pr.add_argument("--seed-eps", type=float, default=None,
                    help="seed angle for the non-pure start (default: from adjacent report.json)")
    pr.add_argument("--snapshots", type=int, default=0)
    pr.add_argument("--traj-stride", type=int, default=1)

    pa = sub.add_parser("analyze", help="spectral diagnostics of a trajectory")
    pa.add_argument("trajectory_csv", help="trajectory CSV from a synth/replay run")
    add_common(pa)
    pa.add_argument("--window", type=float, default=None, help="band half-width (default 10 bins)")
    pa.add_argument("--dip-threshold", type=float, default=0.5)
    pa.add_argument("--peak-threshold", type=float, default=2.0)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "synth":
            if args.sweep:
                return cmd_sweep(args, argv)
            return cmd_synth(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, StructureError, UnileakError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
