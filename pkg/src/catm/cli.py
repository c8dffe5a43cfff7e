"""Command-line front end.

Usage::

    catm run CONFIG
    catm spectrum CONFIG
    catm scan-v0 CONFIG
    catm scan-n CONFIG

CONFIG is a JSON file; see the README for the schema. Output goes to the
config's ``output_dir`` unless ``CATM_OUTPUT_DIR`` is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .absorber import InitialState
from .eig import ConvergenceError
from .floquet import assemble, write_matrix
from .models import (
    ThreeLevelIntuitive,
    ThreeLevelStirap,
    TwoLevelRWA,
    load_custom_samples,
    sample_hamiltonian,
    write_samples,
)
from .reference import converged_reference
from .solver import family_mask, solve, solve_floquet
from .timegrid import CONVENTIONS, SIGNED, build_grid

log = logging.getLogger("catm")

OUTPUT_ENV = "CATM_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE = 0, 2, 3
LARGE_RESIDUAL = 1e-3


class ValidationError(ValueError):
    pass


class StageError(Exception):
    """Wraps a failure with the name of the operation that raised it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass
class RunConfig:
    model: object
    initial: InitialState
    v0: float
    n_points: int
    t_physical: float
    t_total: float
    convention: str = SIGNED
    backend: str = "native"
    reference: dict = field(default_factory=dict)
    output_dir: Path = Path("catm-output")
    scan_v0: list | None = None
    scan_n: list | None = None
    debug: dict = field(default_factory=dict)
    samples_path: Path | None = None

    def grid(self, n_points: int | None = None):
        return build_grid(n_points or self.n_points, self.t_physical, self.t_total)


def _number(raw, name: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ValidationError(f"{name} must be a number, got {raw!r}")
    if not math.isfinite(raw):
        raise ValidationError(f"{name} must be finite")
    return float(raw)


def _amplitude(raw) -> complex:
    if isinstance(raw, list) and len(raw) == 2:
        return complex(_number(raw[0], "initial"), _number(raw[1], "initial"))
    return complex(_number(raw, "initial"))


def _parse_model(spec: dict):
    kind = spec.get("type")
    rabi = spec.get("rabi")
    if kind == "two_level":
        return TwoLevelRWA(
            _number(rabi, "model.rabi"),
            _number(spec.get("detuning", 0.0), "model.detuning"),
            _number(spec.get("phase", 0.0), "model.phase"),
            _number(spec.get("duration", 1.0), "model.duration"),
        )
    if kind == "intuitive":
        return ThreeLevelIntuitive(
            _number(rabi, "model.rabi"),
            _number(spec.get("detuning", 0.0), "model.detuning"),
            _number(spec.get("period", 1.0), "model.period"),
        )
    if kind == "stirap":
        return ThreeLevelStirap(_number(rabi, "model.rabi"), _number(spec.get("period", 1.0), "model.period"))
    if kind == "custom":
        if "path" not in spec:
            raise ValidationError("custom model needs a 'path'")
        # a placeholder until the samples are read onto the grid
        return None
    raise ValidationError(f"unknown model type {kind!r}")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    mspec = raw.get("model")
    if not isinstance(mspec, dict):
        raise ValidationError("config needs a 'model' object")
    model = _parse_model(mspec)
    samples_path = None
    if model is None:
        samples_path = (path.parent / mspec["path"]).resolve()
        t_physical = _number(mspec.get("t_physical", 1.0), "model.t_physical")
    else:
        t_physical = model.t_physical

    if "t_total" in mspec:
        t_total = _number(mspec["t_total"], "model.t_total")
    elif hasattr(model, "period"):
        t_total = model.t_total
    else:
        t_total = t_physical + _number(raw.get("extension", t_physical), "extension")
    if not t_total > t_physical:
        raise ValidationError(f"T' = {t_total} must exceed T = {t_physical}")

    init = raw.get("initial")
    if isinstance(init, dict) and "level" in init:
        L = int(init.get("levels", getattr(model, "level_count", 2)))
        try:
            initial = InitialState.basis(int(init["level"]), L)
        except IndexError:
            raise ValidationError(f"initial level {init['level']} out of range") from None
    elif isinstance(init, list) and init:
        initial = InitialState([_amplitude(c) for c in init])
    else:
        raise ValidationError("config needs 'initial' as an amplitude list or {'level': k}")

    n_points = raw.get("n_points")
    if not isinstance(n_points, int) or isinstance(n_points, bool) or n_points < 2:
        raise ValidationError(f"n_points must be an integer >= 2, got {n_points!r}")
    v0 = _number(raw.get("v0"), "v0")
    if v0 < 0:
        raise ValidationError("v0 must be non-negative")
    convention = raw.get("convention", SIGNED)
    if convention not in CONVENTIONS:
        raise ValidationError(f"convention must be one of {CONVENTIONS}")
    backend = raw.get("backend", "native")
    if backend not in ("native", "lapack"):
        raise ValidationError("backend must be 'native' or 'lapack'")

    scan = raw.get("scan", {}) or {}
    output = Path(os.environ.get(OUTPUT_ENV) or raw.get("output_dir", "catm-output"))
    if not output.is_absolute() and OUTPUT_ENV not in os.environ:
        output = path.parent / output
    cfg = RunConfig(
        model=model,
        initial=initial,
        v0=v0,
        n_points=n_points,
        t_physical=t_physical,
        t_total=t_total,
        convention=convention,
        backend=backend,
        reference=dict(raw.get("reference", {}) or {}),
        output_dir=output,
        scan_v0=scan.get("v0"),
        scan_n=scan.get("n_points"),
        debug=dict(raw.get("debug", {}) or {}),
        samples_path=samples_path,
    )
    return cfg


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(v) for v in row] for row in rows)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValidationError, StageError):
        raise
    except (ValueError, IndexError, TypeError, ConvergenceError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _resolve_model(cfg: RunConfig, grid):
    """Model for the reference and the sampled Hamiltonian for the solver."""
    if cfg.samples_path is None:
        return cfg.model, _stage("models.sample_hamiltonian", sample_hamiltonian, cfg.model, grid)
    H = _stage("models.load_custom_samples", load_custom_samples, cfg.samples_path, grid)
    return H.model, H


def _reference(cfg: RunConfig, model):
    r = cfg.reference
    return _stage(
        "reference.converged_reference",
        converged_reference,
        model,
        cfg.initial,
        start=int(r.get("start", 1 << 12)),
        cap=int(r.get("cap", 1 << 20)),
        tol=float(r.get("tol", 1e-10)),
    )


def _spectrum_rows(sol):
    conn = family_mask(sol.spectrum, sol.omega, sol.grid.omega0)
    folded = analysis.fold(sol.spectrum, sol.grid.omega0)
    return [(w.real, w.imag, bool(c), f) for w, c, f in zip(sol.spectrum, conn, folded)]


SPECTRUM_HEADER = ["re_omega", "im_omega", "connected", "folded_re"]


def _solve(cfg: RunConfig, grid, H):
    from .absorber import absorbing_potential

    if H.level_count != cfg.initial.level_count:
        raise StageError(
            "catm.solve",
            ValueError(f"initial state has {cfg.initial.level_count} levels, model has {H.level_count}"),
        )
    V = _stage("absorber.absorbing_potential", absorbing_potential, grid, cfg.initial, H.diagonals, cfg.v0)
    F = _stage("floquet.assemble", assemble, H, V, cfg.convention)
    out = cfg.output_dir
    if cfg.debug.get("dump_hamiltonian"):
        write_samples(out / "hamiltonian.txt", H)
    if cfg.debug.get("dump_matrix"):
        write_matrix(out / "floquet_matrix.txt", F)
    if H.level_count > 2 and cfg.initial.basis_index is None:
        raise StageError("catm.solve", ValueError("superposition initial states need two levels"))
    return _stage("catm.solve", solve_floquet, F, H, V, cfg.initial, cfg.backend)


def cmd_run(cfg: RunConfig) -> None:
    grid = _stage("timegrid.build_grid", cfg.grid)
    model, H = _resolve_model(cfg, grid)
    sol = _solve(cfg, grid, H)
    ref = _reference(cfg, model)
    n_phys = grid.index_physical_end + 1
    times = grid.points[:n_phys]
    ref_states = ref.at(times)
    pc, bc = analysis.populations_phases(sol.physical_trajectory)
    pr, br = analysis.populations_phases(ref_states)
    L = sol.level_count
    header = ["t"]
    for tag in ("catm", "ref"):
        header += [f"p{n}_{tag}" for n in range(L)] + [f"beta{n}_{tag}" for n in range(L)]
    rows = [
        [t, *pc[i], *bc[i], *pr[i], *br[i]] for i, t in enumerate(times)
    ]
    write_csv(cfg.output_dir / "trajectory.csv", header, rows)
    write_csv(cfg.output_dir / "spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(sol))

    report = analysis.error_metrics(sol.physical_trajectory, ref_states, times)
    summary = [
        ("omega_re", sol.omega.real),
        ("omega_im", sol.omega.imag),
        ("connection_residual", sol.connection_residual),
        ("connection_flag", "large" if sol.connection_residual > LARGE_RESIDUAL else "ok"),
        ("eigen_residual", sol.eigen_residual),
        ("isolated", sol.isolated),
        ("eps_p", report.eps_p),
        ("eps_a", report.eps_a),
        ("max_population_deviation", float(np.max(np.abs(pc - pr)))),
    ]
    im_res = analysis.check_connected_im(sol, ref)
    summary.append(("connected_im_residual", "n/a" if im_res is None else im_res))
    if L == 2:
        try:
            pair = analysis.check_pair_relation(sol)
            summary.append(("pair_relation_residual", pair.residual))
            summary.append(("pair_relation_flag", "degenerate" if pair.flagged else "ok"))
        except ValueError as exc:
            log.warning("pair relation: %s", exc)
            summary.append(("pair_relation_residual", "n/a"))
    summary += [(f"final_p{n}_catm", pc[-1, n]) for n in range(L)]
    summary += [(f"final_p{n}_ref", pr[-1, n]) for n in range(L)]
    summary += [("reference_steps", ref.steps), ("reference_converged", ref.converged)]
    write_csv(cfg.output_dir / "summary.csv", ["quantity", "value"], summary)


def cmd_spectrum(cfg: RunConfig) -> None:
    grid = _stage("timegrid.build_grid", cfg.grid)
    _, H = _resolve_model(cfg, grid)
    sol = _solve(cfg, grid, H)
    write_csv(cfg.output_dir / "spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(sol))
    write_csv(
        cfg.output_dir / "summary.csv",
        ["quantity", "value"],
        [("omega_re", sol.omega.real), ("omega_im", sol.omega.imag),
         ("connection_residual", sol.connection_residual), ("isolated", sol.isolated)],
    )


def _scan_list(values, name: str) -> list:
    if not isinstance(values, list) or not values:
        raise ValidationError(f"scan.{name} must be a non-empty list")
    return values


def cmd_scan_v0(cfg: RunConfig) -> None:
    values = [_number(v, "scan.v0") for v in _scan_list(cfg.scan_v0, "v0")]
    if any(v < 0 for v in values):
        raise ValidationError("scan.v0 values must be non-negative")
    grid = _stage("timegrid.build_grid", cfg.grid)
    model, H = _resolve_model(cfg, grid)
    ref = _reference(cfg, model)
    rows = analysis.scan_v0(model, cfg.initial, values, grid, ref, cfg.convention, cfg.backend)
    header = ["v0", "area", "eps_p", "eps_a", "omega_re", "omega_im",
              "omega_pair_re", "omega_pair_im", "connection_residual", "error"]
    write_csv(
        cfg.output_dir / "scan_v0.csv",
        header,
        [(r.v0, r.area, r.eps_p, r.eps_a, r.omega.real, r.omega.imag,
          r.omega_pair.real, r.omega_pair.imag, r.connection_residual, r.error) for r in rows],
    )


def cmd_scan_n(cfg: RunConfig) -> None:
    values = _scan_list(cfg.scan_n, "n_points")
    if any(not isinstance(n, int) or isinstance(n, bool) or n < 2 for n in values):
        raise ValidationError("scan.n_points must hold integers >= 2")
    if cfg.samples_path is not None:
        raise ValidationError("scan-n needs an analytic model; custom samples fix N")
    rows = analysis.scan_n(cfg.model, cfg.initial, cfg.v0, values, cfg.t_total,
                           cfg.convention, cfg.backend)
    L = cfg.initial.level_count
    header = ["n_points"] + [f"p{n}" for n in range(L)] + ["omega_re", "omega_im", "connection_residual", "error"]
    out = []
    for r in rows:
        pops = list(r.populations) if r.populations.size else [math.nan] * L
        out.append([r.n_points, *pops, r.omega.real, r.omega.imag, r.connection_residual, r.error])
    write_csv(cfg.output_dir / "scan_n.csv", header, out)


COMMANDS = {"run": cmd_run, "spectrum": cmd_spectrum, "scan-v0": cmd_scan_v0, "scan-n": cmd_scan_n}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="catm", description="Constrained adiabatic trajectory method")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--convention", choices=CONVENTIONS, default=None,
                   help="Fourier frequency convention (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            cfg = load_config(args.config, {"convention": args.convention})
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from exc
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg)
    except ValidationError as exc:
        print(f"catm: config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"catm: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (ConvergenceError, np.linalg.LinAlgError)):
            return EXIT_CONVERGENCE
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
