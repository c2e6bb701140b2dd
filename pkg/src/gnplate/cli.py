"""Line-oriented config parsing and experiment orchestration.

Config format: ``[section]`` headers, ``key = value`` pairs, ``#``
comments.  Sections: material, grid, time, experiment, ic, output.
Material and grid are mandatory.  Every experiment writes its module CSVs
plus ``summary.csv`` with header ``criterion,value,threshold,pass``;
the run exits 0 iff every criterion row passes.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backward as bwd
from . import decay as dcy
from .dynamics import (
    EnergyReport,
    ZERO_SOURCES,
    assemble,
    energy,
    make_initial_state,
    mms_verify,
    resolvent_solve,
    run,
    write_energy_csv,
)
from .grid import Grid
from .material import MaterialParams, ModelType, require_valid, validate
from .resultants import FIELD_NAMES, State


class ParseError(ValueError):
    """Malformed config line; message carries the 1-based line number."""


class UnknownKey(ParseError):
    """A key (or section) the schema does not define."""


class MissingRequired(ValueError):
    """A mandatory section or key is absent."""


EXPERIMENTS = (
    "type2_conservation",
    "type3_decay",
    "spatial_decay",
    "backward_uniqueness",
    "forward_backward_roundtrip",
    "mms_convergence",
    "resolvent_check",
)

IC_PRESETS = ("zero", "sine_mode", "gaussian_bump")

# config key -> MaterialParams field
_MATERIAL_KEYS = {
    "lambda": "lam",
    "mu": "mu",
    "d1": "d1",
    "d2": "d2",
    "c": "c",
    "kappa": "kappa",
    "r": "r",
    "k1": "k1",
    "h1": "h1",
    "hbar1": "hbar1",
    "k2": "k2",
    "h2": "h2",
    "hbar2": "hbar2",
    "rho": "rho",
    "T0": "T0",
    "h": "half_thickness",
    "model_type": "model_type",
}

_SECTION_KEYS = {
    "material": set(_MATERIAL_KEYS),
    "grid": {"Lx", "Ly", "nx", "ny"},
    "time": {"dt", "t_end", "snapshot_every"},
    "experiment": {"name"},
    "ic": {"preset", "target_field", "amplitude", "center", "width", "mode_numbers"},
    "output": {"dir"},
}


@dataclass
class Config:
    material: MaterialParams
    grid: Grid
    dt: float = 1e-3
    t_end: float = 1.0
    snapshot_every: int = 1
    experiment: str | None = None
    ic_preset: str = "zero"
    ic_target_field: str = "w"
    ic_amplitude: float = 1.0
    ic_center: tuple[float, float] | None = None
    ic_width: float | None = None
    ic_mode_numbers: tuple[int, int] = (1, 1)
    output_dir: str = "out"

    def initial_state(self) -> State:
        return make_initial_state(
            self.grid,
            preset=self.ic_preset,
            target_field=self.ic_target_field,
            amplitude=self.ic_amplitude,
            center=self.ic_center,
            width=self.ic_width,
            mode_numbers=self.ic_mode_numbers,
        )


def _float(raw: str, lineno: int, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"line {lineno}: {key} expects a number, got {raw!r}") from None


def _int(raw: str, lineno: int, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"line {lineno}: {key} expects an integer, got {raw!r}") from None


def _pair(raw: str, lineno: int, key: str, conv) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ParseError(f"line {lineno}: {key} expects two comma-separated values")
    return tuple(conv(p, lineno, key) for p in parts)


def parse_config(text: str) -> Config:
    """Parse the line-oriented format; see the module docstring.

    Raises:
        ParseError: malformed line, bad value, or duplicate key.
        UnknownKey: key or section outside the schema.
        MissingRequired: material or grid section (or one of their keys)
            absent; also surfaces material validation failures.
    """
    entries: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"line {lineno}: unterminated section header")
            name = line[1:-1].strip()
            if name not in _SECTION_KEYS:
                raise UnknownKey(f"line {lineno}: unknown section [{name}]")
            section = name
            entries.setdefault(section, {})
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key = value, got {line!r}")
        if section is None:
            raise ParseError(f"line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SECTION_KEYS[section]:
            raise UnknownKey(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in entries[section]:
            raise ParseError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        entries[section][key] = (value, lineno)

    for required in ("material", "grid"):
        if required not in entries:
            raise MissingRequired(f"section [{required}] is mandatory")

    mat_entries = entries["material"]
    kwargs = {}
    for cfg_key, field_name in _MATERIAL_KEYS.items():
        if cfg_key not in mat_entries:
            raise MissingRequired(f"[material] is missing {cfg_key!r}")
        raw, lineno = mat_entries[cfg_key]
        if cfg_key == "model_type":
            try:
                kwargs[field_name] = ModelType.from_string(raw)
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
        else:
            kwargs[field_name] = _float(raw, lineno, cfg_key)
    material = MaterialParams(**kwargs)
    report = validate(material)
    if not report.passed:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        raise MissingRequired(f"material parameters invalid; failed conditions: {failed}")

    grid_entries = entries["grid"]
    for key in ("Lx", "Ly", "nx", "ny"):
        if key not in grid_entries:
            raise MissingRequired(f"[grid] is missing {key!r}")
    Lx = _float(*grid_entries["Lx"], "Lx")
    Ly = _float(*grid_entries["Ly"], "Ly")
    nx = _int(*grid_entries["nx"], "nx")
    ny = _int(*grid_entries["ny"], "ny")
    if Lx <= 0 or Ly <= 0 or nx < 1 or ny < 1:
        raise ParseError("grid extents must be positive and node counts >= 1")
    config = Config(material=material, grid=Grid(Lx=Lx, Ly=Ly, nx=nx, ny=ny))

    time_entries = entries.get("time", {})
    if "dt" in time_entries:
        config.dt = _float(*time_entries["dt"], "dt")
    if "t_end" in time_entries:
        config.t_end = _float(*time_entries["t_end"], "t_end")
    if "snapshot_every" in time_entries:
        config.snapshot_every = _int(*time_entries["snapshot_every"], "snapshot_every")
    if config.dt <= 0 or config.t_end <= 0 or config.snapshot_every < 1:
        raise ParseError("time values must be positive")

    exp_entries = entries.get("experiment", {})
    if "name" in exp_entries:
        raw, lineno = exp_entries["name"]
        if raw not in EXPERIMENTS:
            raise ParseError(
                f"line {lineno}: unknown experiment {raw!r}; "
                f"expected one of {', '.join(EXPERIMENTS)}"
            )
        config.experiment = raw

    ic_entries = entries.get("ic", {})
    if "preset" in ic_entries:
        raw, lineno = ic_entries["preset"]
        if raw not in IC_PRESETS:
            raise ParseError(f"line {lineno}: unknown ic preset {raw!r}")
        config.ic_preset = raw
    if "target_field" in ic_entries:
        raw, lineno = ic_entries["target_field"]
        if raw not in FIELD_NAMES:
            raise ParseError(
                f"line {lineno}: target_field must be one of {', '.join(FIELD_NAMES)}"
            )
        config.ic_target_field = raw
    if "amplitude" in ic_entries:
        config.ic_amplitude = _float(*ic_entries["amplitude"], "amplitude")
    if "center" in ic_entries:
        raw, lineno = ic_entries["center"]
        config.ic_center = _pair(raw, lineno, "center", _float)
    if "width" in ic_entries:
        config.ic_width = _float(*ic_entries["width"], "width")
    if "mode_numbers" in ic_entries:
        raw, lineno = ic_entries["mode_numbers"]
        config.ic_mode_numbers = _pair(raw, lineno, "mode_numbers", _int)

    out_entries = entries.get("output", {})
    if "dir" in out_entries:
        config.output_dir = out_entries["dir"][0]
    return config


@dataclass
class CriterionRow:
    criterion: str
    value: float | str
    threshold: float | str
    passed: bool


def _write_summary(rows: list[CriterionRow], path: Path) -> None:
    def cell(x) -> str:
        return repr(float(x)) if isinstance(x, (int, float)) else str(x)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("criterion,value,threshold,pass\n")
        for row in rows:
            verdict = "pass" if row.passed else "fail"
            fh.write(f"{row.criterion},{cell(row.value)},{cell(row.threshold)},{verdict}\n")


def _require_type(config: Config, wanted: ModelType, experiment: str) -> None:
    if config.material.model_type is not wanted:
        raise ValueError(f"{experiment} requires model_type={wanted.value}")


def _exp_type2_conservation(config: Config, out: Path) -> list[CriterionRow]:
    _require_type(config, ModelType.TYPE_II, "type2_conservation")
    matrices = assemble(config.material, config.grid)
    _, report = run(config.initial_state(), matrices, ZERO_SOURCES, config.dt, config.t_end)
    write_energy_csv(report, out / "energy.csv")
    drift = report.max_drift()
    return [CriterionRow("energy_drift", drift, 1e-9, drift <= 1e-9)]


def _exp_type3_decay(config: Config, out: Path) -> list[CriterionRow]:
    _require_type(config, ModelType.TYPE_III, "type3_decay")
    matrices = assemble(config.material, config.grid)
    _, report = run(config.initial_state(), matrices, ZERO_SOURCES, config.dt, config.t_end)
    write_energy_csv(report, out / "energy.csv")
    residual = report.max_balance_residual_rel()
    increase = float(np.max(np.diff(report.E0))) if report.E0.size > 1 else 0.0
    return [
        CriterionRow("balance_residual_rel", residual, 1e-10, residual <= 1e-10),
        CriterionRow("max_energy_increase", increase, 0.0, increase <= 0.0),
    ]


def _exp_spatial_decay(config: Config, out: Path) -> list[CriterionRow]:
    _require_type(config, ModelType.TYPE_III, "spatial_decay")
    matrices = assemble(config.material, config.grid)
    acc = dcy.DecayAccumulator(
        config.grid, config.material, config.dt, sample_every=config.snapshot_every
    )
    run(config.initial_state(), matrices, ZERO_SOURCES, config.dt, config.t_end,
        on_state=acc)
    profile = acc.profile()
    dcy.write_decay_csv(profile, out / "decay.csv")

    rows = []
    curv = dcy.check_dissipation_curvature_bound(profile, config.material)
    margin_rel = curv.min_margin / max(curv.scale, 1e-300)
    rows.append(CriterionRow("lemma_margin", margin_rel, -1e-10, curv.passed))
    env = dcy.envelope_check(profile, config.material)
    rows.append(CriterionRow("envelope_worst_ratio", env.worst_ratio, 1.0, env.passed))

    # J at the very last cut (clamped edge) is zero by construction; the
    # resolution check lives on the last cut that carries a flux integral.
    J_final = profile.J[:, -1]
    far_ratio = abs(J_final[-2]) / max(abs(J_final[0]), 1e-300)
    rows.append(CriterionRow("far_edge_flux_ratio", far_ratio, 1e-8, far_ratio <= 1e-8))

    # dual-route check where the volume form carries meaningful signal,
    # restricted to cuts whose far side starts empty (the identity's
    # hypothesis; cuts inside the data band differ by the initial energy)
    V = profile.volume_E
    floor = 0.01 * float(np.max(np.abs(V))) if V.size else 0.0
    clear = V[:, 0] <= 1e-12 * max(float(V[0, 0]), 1e-300)
    mask = clear[:, None] & (np.abs(V) >= max(floor, 1e-300))
    if np.any(mask):
        mismatch = float(np.max(np.abs(profile.J[mask] - V[mask]) / np.abs(V[mask])))
    else:
        mismatch = 0.0
    rows.append(CriterionRow("flux_volume_mismatch", mismatch, 1e-4, mismatch <= 1e-4))
    return rows


def _exp_backward_uniqueness(config: Config, out: Path) -> list[CriterionRow]:
    report = bwd.backward_uniqueness_check(
        config.material, config.grid, config.dt, config.t_end
    )
    matrices = bwd.assemble_backward(config.material, config.grid)
    tracker = bwd.BackwardTracker(config.grid, matrices, sample_every=config.snapshot_every)
    start = bwd.reverse_state(config.initial_state())
    bwd.run_backward(start, matrices, config.dt, config.t_end, on_state=tracker)
    bwd.write_backward_csv(*tracker.arrays(), out / "backward.csv")
    return [
        CriterionRow(
            "zero_data_max_norm", report.zero_max_norm, 1e-12, report.zero_max_norm <= 1e-12
        ),
        CriterionRow(
            "perturbation_growth_rate",
            report.growth_rate_max,
            math.inf,
            math.isfinite(report.growth_rate_max),
        ),
    ]


def _exp_roundtrip(config: Config, out: Path) -> list[CriterionRow]:
    matrices = bwd.assemble_backward(config.material, config.grid)
    U0 = config.initial_state()
    if energy(U0, matrices.forward) == 0.0:
        raise ValueError("forward_backward_roundtrip needs nonzero initial data")
    forward_end, _ = run(U0, matrices.forward, ZERO_SOURCES, config.dt, config.t_end)
    tracker = bwd.BackwardTracker(config.grid, matrices, sample_every=config.snapshot_every)
    back_end, _ = bwd.run_backward(
        bwd.reverse_state(forward_end), matrices, config.dt, config.t_end, on_state=tracker
    )
    bwd.write_backward_csv(*tracker.arrays(), out / "backward.csv")
    recovered = bwd.reverse_state(back_end)
    diff = recovered.pack() - U0.pack()
    E = matrices.E1_form
    rel = math.sqrt(max(float(diff @ (E @ diff)), 0.0)) / math.sqrt(
        float(U0.pack() @ (E @ U0.pack()))
    )
    return [CriterionRow("roundtrip_relative_error", rel, 1e-6, rel <= 1e-6)]


def _exp_mms(config: Config, out: Path) -> list[CriterionRow]:
    report = mms_verify(config.material)
    with open(out / "mms.csv", "w", encoding="utf-8") as fh:
        fh.write("ladder,step,error\n")
        for k, err in enumerate(report.spatial_errors):
            fh.write(f"spatial,{k},{err!r}\n")
        for k, err in enumerate(report.temporal_errors):
            fh.write(f"temporal,{k},{err!r}\n")
    return [
        CriterionRow(
            "spatial_order", report.spatial_order, "[1.8,2.2]",
            1.8 <= report.spatial_order <= 2.2,
        ),
        CriterionRow(
            "temporal_order", report.temporal_order, "[1.8,2.2]",
            1.8 <= report.temporal_order <= 2.2,
        ),
    ]


def _exp_resolvent(config: Config, out: Path) -> list[CriterionRow]:
    matrices = assemble(config.material, config.grid)
    rng = np.random.default_rng(20260815)
    worst = 0.0
    for _ in range(10):
        u = rng.standard_normal(matrices.n_dof)
        state = State.unpack(config.grid, u)
        v = resolvent_solve(state, matrices).pack()
        residual = u - (v - matrices.A @ v)
        worst = max(worst, float(np.linalg.norm(residual) / np.linalg.norm(u)))
    with open(out / "resolvent.csv", "w", encoding="utf-8") as fh:
        fh.write("max_relative_residual\n")
        fh.write(f"{worst!r}\n")
    return [CriterionRow("resolvent_residual", worst, 1e-10, worst <= 1e-10)]


_RUNNERS = {
    "type2_conservation": _exp_type2_conservation,
    "type3_decay": _exp_type3_decay,
    "spatial_decay": _exp_spatial_decay,
    "backward_uniqueness": _exp_backward_uniqueness,
    "forward_backward_roundtrip": _exp_roundtrip,
    "mms_convergence": _exp_mms,
    "resolvent_check": _exp_resolvent,
}


def run_experiment(config: Config, out_dir: str | None = None) -> int:
    """Run the configured experiment; 0 iff every summary row passes.

    summary.csv is always written; an unexpected exception becomes a
    machine-readable error row and exit status 1.
    """
    if config.experiment is None:
        raise MissingRequired("config has no [experiment] section with a name")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows = _RUNNERS[config.experiment](config, out)
    except Exception as exc:  # noqa: BLE001 - fold into the summary contract
        reason = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        rows = [CriterionRow("error", reason, "", False)]
    _write_summary(rows, out / "summary.csv")
    return 0 if all(r.passed for r in rows) else 1


def _apply_threads_env() -> None:
    raw = os.environ.get("GN_PLATE_THREADS")
    if raw is None or raw == "":
        return
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"GN_PLATE_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise SystemExit("GN_PLATE_THREADS must be >= 0")
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gn-plate",
        description="Deterministic experiments for thermoelastic-diffusion plates",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment named in the config")
    p_run.add_argument("config", help="path to a config file")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_val = sub.add_parser("validate", help="parse the config and check the material")
    p_val.add_argument("config", help="path to a config file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_threads_env()
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except (ParseError, MissingRequired) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        report = validate(config.material)
        for check in report.checks:
            verdict = "ok" if check.passed else "FAILED"
            print(f"{check.name}: margin={check.margin:.6e} {verdict}")
        print("material valid" if report.passed else "material INVALID")
        return 0 if report.passed else 1

    status = run_experiment(config, out_dir=args.out)
    summary = Path(args.out if args.out is not None else config.output_dir) / "summary.csv"
    print(summary.read_text(encoding="utf-8"), end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
