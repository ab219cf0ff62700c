"""Command-line experiment runner.

Every run writes a directory under ``$HSKDV_OUTPUT_ROOT`` (default ``./runs``)
named after the subcommand, the config digest and the seed. It holds the
resolved config, a manifest, CSV fields and a ``summary.jsonl`` record.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import BC, CascadeSolver, duality_pairing_check, random_smooth_profile
from .config import ExperimentConfig, load_config
from .control import HumConfig, Sources, space_E_report, synthesize_null_control
from .discretization import l2_norm, make_grid, make_time_grid
from .errors import ConfigurationError, HskdvError
from .kdv import KdvOperatorSpec, solve_linear_kdv
from .nonlinear import (OuterConfig, PicardConfig, admissible_decay, admissible_source, nonlinear_null_control,
                        picard_solve_nonlinear, residual_norms, residual_Y)
from .sentinel import (carleman_ratio_audit, duality_identity_check, load_baseline, observability_ratio_audit,
                       random_perturbation, regression_check, store_baseline)
from .weights import WeightConfig, beta_derivative_checks, build_weights, weight_gap_check

OUTPUT_ENV = "HSKDV_OUTPUT_ROOT"
SUBCOMMANDS = ("simulate", "cascade", "control-linear", "picard", "control-nonlinear", "insensitize",
               "audit-weights", "audit-observability")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_field_csv(path: Path, field: np.ndarray, x: np.ndarray, t: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t\\x"] + [_fmt(v) for v in x])
        for tk, row in zip(t, field):
            w.writerow([_fmt(tk)] + [_fmt(v) for v in row])


def write_table_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool)
                        else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Run:
    def __init__(self, subcommand: str, cfg: ExperimentConfig, root: Path):
        self.cfg = cfg
        self.dir = root / f"{subcommand}-{cfg.digest()[:12]}-seed{cfg.seed}"
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.cfg").write_text(cfg.to_text())
        manifest = {"subcommand": subcommand, "config_sha256": cfg.digest(), "seed": cfg.seed,
                    "version": __version__, "config_file": "config.cfg"}
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        (self.dir / "summary.jsonl").write_text("")

    def summary(self, record: dict) -> None:
        with (self.dir / "summary.jsonl").open("a") as fh:
            fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")

    def path(self, name: str) -> Path:
        return self.dir / name


def experiment_setup(cfg: ExperimentConfig):
    grid = make_grid(cfg.L, cfg.N)
    tgrid = make_time_grid(cfg.T, cfg.M)
    solver = CascadeSolver(grid, tgrid, cfg.geometry.validate(), theta=cfg.theta)
    w = build_weights(WeightConfig(cfg.omega0, cfg.s, cfg.T), grid, tgrid)
    return grid, tgrid, solver, w


def experiment_sources(cfg, grid, tgrid, w):
    a = admissible_decay(cfg.s, w.beta_max, cfg.T, cfg.decay_margin)
    o0, o1 = cfg.obs
    xi1 = admissible_source(grid, tgrid, cfg.amplitude, o0 + 0.25 * (o1 - o0), 0.25 * (o1 - o0), a)
    w0, w1 = cfg.omega
    xi2 = admissible_source(grid, tgrid, cfg.amplitude, w0 + 0.75 * (w1 - w0), 0.25 * (w1 - w0), a)
    f3 = admissible_source(grid, tgrid, cfg.f3_amplitude, 0.5 * (o0 + o1), 0.5 * (o1 - o0), a)
    return xi1, xi2, f3


def _hum(cfg):
    return HumConfig(eps=cfg.eps, cg_tol=cfg.cg_tol, cg_max=cfg.cg_max, s=cfg.s)


def _picard(cfg):
    return PicardConfig(R=cfg.R, tol=cfg.picard_tol, max_outer=cfg.picard_max, coupling=cfg.coupling)


def _controls_long(h, grid, tgrid):
    rows = []
    for k, tk in enumerate(tgrid.times):
        for j, xj in enumerate(grid.nodes):
            rows.append((tk, xj, h.h1[k, j], h.h2[k, j]))
    return rows


def cmd_simulate(cfg, run):
    grid, tgrid = make_grid(cfg.L, cfg.N), make_time_grid(cfg.T, cfg.M)
    spec = KdvOperatorSpec(cfg.kdv_a, cfg.kdv_bc, cfg.kdv_direction)
    rng = np.random.default_rng(cfg.seed)
    datum = random_smooth_profile(rng, grid, BC(cfg.kdv_bc))
    y = solve_linear_kdv(spec, grid, tgrid, datum, None, cfg.theta)
    write_field_csv(run.path("field.csv"), y, grid.nodes, tgrid.times)
    norms = [l2_norm(r, grid) for r in y]
    run.summary({"kind": "simulate", "a": cfg.kdv_a, "bc": cfg.kdv_bc, "direction": cfg.kdv_direction,
                 "norm_t0": norms[0], "norm_T": norms[-1]})


def cmd_cascade(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    rng = np.random.default_rng(cfg.seed)
    if cfg.system == "state":
        xi1, xi2, f3 = experiment_sources(cfg, grid, tgrid, w)
        st = solver.solve_extended_linear(f1=xi1, f2=xi2, f3=f3)
        fields = st.fields()
    else:
        adj = solver.solve_adjoint(random_smooth_profile(rng, grid, BC.LEFT), random_smooth_profile(rng, grid, BC.RIGHT))
        fields = adj.fields()
    for name, f in fields.items():
        write_field_csv(run.path(f"{name}.csv"), f, grid.nodes, tgrid.times)
    defect = duality_pairing_check(solver, 5, np.random.default_rng(cfg.seed))
    run.summary({"kind": "cascade", "system": cfg.system, "duality_defect": defect,
                 "norms_T": {k: l2_norm(v[-1], grid) for k, v in fields.items()},
                 "norms_0": {k: l2_norm(v[0], grid) for k, v in fields.items()}})


def _write_pq0(run, grid, state):
    write_table_csv(run.path("pq0.csv"), ["x", "p0", "q0"],
                    [(x, p, q) for x, p, q in zip(grid.nodes, state.p[0], state.q[0])])


def cmd_control_linear(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    _, _, f3 = experiment_sources(cfg, grid, tgrid, w)
    h, st, rep = synthesize_null_control(solver, Sources(f3=f3), _hum(cfg))
    write_table_csv(run.path("controls.csv"), ["t", "x", "h1", "h2"], _controls_long(h, grid, tgrid))
    _write_pq0(run, grid, st)
    write_table_csv(run.path("cg_history.csv"), ["iteration", "functional", "residual"],
                    [(i, J, r) for i, (J, r) in enumerate(zip(rep.functional_history, rep.residual_history))])
    run.summary({"kind": "control-linear", **rep.as_dict(), "eps": cfg.eps,
                 "space_E": space_E_report(st, h, w, solver)})


def cmd_picard(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    xi1, xi2, _ = experiment_sources(cfg, grid, tgrid, w)
    st, hist = picard_solve_nonlinear(solver, xi1=xi1, xi2=xi2, cfg=_picard(cfg))
    write_table_csv(run.path("history.csv"), ["iteration", "increment", "norm"],
                    [(r["iteration"], r["increment"], r["norm"]) for r in hist.as_rows()])
    for name, f in st.fields().items():
        write_field_csv(run.path(f"{name}.csv"), f, grid.nodes, tgrid.times)
    res = residual_norms(solver, residual_Y(solver, st, None, xi1, xi2, cfg.coupling))
    run.summary({"kind": "picard", "iterations": len(hist.increments), "ratios": hist.ratios,
                 "residuals": res})


def _nonlinear_control(cfg, solver, xi1, xi2):
    return nonlinear_null_control(solver, xi1, xi2, _hum(cfg), _picard(cfg),
                                  OuterConfig(cfg.target_ratio, cfg.outer_tol, cfg.outer_max))


def cmd_control_nonlinear(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    xi1, xi2, _ = experiment_sources(cfg, grid, tgrid, w)
    h, st, rows = _nonlinear_control(cfg, solver, xi1, xi2)
    keys = ["round", "pq0_norm", "baseline", "control_increment", "cg_iterations"]
    write_table_csv(run.path("history.csv"), keys, [[r[k] for k in keys] for r in rows])
    write_table_csv(run.path("controls.csv"), ["t", "x", "h1", "h2"], _controls_long(h, grid, tgrid))
    _write_pq0(run, grid, st)
    res = residual_Y(solver, st, h, xi1, xi2, cfg.coupling)
    run.summary({"kind": "control-nonlinear", "rounds": len(rows) - 1, "final": rows[-1],
                 "residuals": residual_norms(solver, res), "space_E": space_E_report(st, h, w, solver, res)})


def cmd_insensitize(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    xi1, xi2, _ = experiment_sources(cfg, grid, tgrid, w)
    pic = _picard(cfg)
    h = None
    if not cfg.force_zero_control:
        h, _, _ = _nonlinear_control(cfg, solver, xi1, xi2)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for trial in range(cfg.perturbations):
        pert = random_perturbation(rng, grid, cfg.tau)
        lhs, rhs, defect = duality_identity_check(solver, h, xi1, xi2, pert, pic)
        lhs0, rhs0, _ = duality_identity_check(solver, None, xi1, xi2, pert, pic)
        rows.append((trial, lhs, rhs, defect, lhs0, rhs0))
    write_table_csv(run.path("insensitivity.csv"),
                    ["trial", "dJ_fd", "dJ_dual", "defect", "dJ_fd_uncontrolled", "dJ_dual_uncontrolled"], rows)
    arr = np.array([r[1:] for r in rows])
    run.summary({"kind": "insensitize", "zero_control": cfg.force_zero_control, "tau": cfg.tau,
                 "max_abs_dJ": float(np.abs(arr[:, 0]).max()),
                 "max_abs_dJ_uncontrolled": float(np.abs(arr[:, 3]).max()),
                 "max_defect": float(arr[:, 2].max())})


def cmd_audit_weights(cfg, run):
    grid, tgrid, solver, w = experiment_setup(cfg)
    c0, ok = weight_gap_check(w)
    write_table_csv(run.path("weights_x.csv"), ["x", "beta"], list(zip(grid.nodes, w.beta)))
    inner = np.isfinite(w.xi)
    gap = np.full(w.xi.shape, np.nan)
    gap[inner] = (36 * w.phi_star[inner] - 35 * w.phi_hat[inner]) / w.xi[inner]
    write_table_csv(run.path("weights_t.csv"),
                    ["t", "xi", "phi_star", "phi_hat", "gap_ratio", "frakZ", "frakS_star", "frakS_hat"],
                    list(zip(tgrid.times, w.xi, w.phi_star, w.phi_hat, gap, w.frakZ, w.frakS_star, w.frakS_hat)))
    run.summary({"kind": "audit-weights", "K1": w.K1, "K2": w.K2, "M_const": w.M_const, "c0": c0,
                 "gap_ok": ok, "beta_checks": beta_derivative_checks(w)})


def cmd_audit_observability(cfg, run, write_baseline=False):
    grid, tgrid, solver, w = experiment_setup(cfg)
    carl = carleman_ratio_audit(solver, w, cfg.ensemble, np.random.default_rng(cfg.seed))
    obs = observability_ratio_audit(solver, w, cfg.ensemble, np.random.default_rng(cfg.seed))
    rows = [(i, "carleman", r["lhs"], r["rhs"], r["ratio"]) for i, r in enumerate(carl["rows"])]
    rows += [(i, "observability", r["lhs"], r["rhs"], r["ratio"]) for i, r in enumerate(obs["rows"])]
    write_table_csv(run.path("audit.csv"), ["trial", "estimate", "lhs", "rhs", "ratio"], rows)
    current = {"carleman_max": carl["max"], "observability_max": obs["max"]}
    base = load_baseline()
    record = {"kind": "audit-observability", **current, "carleman_median": carl["median"],
              "observability_median": obs["median"], "all_finite": carl["all_finite"] and obs["all_finite"]}
    if write_baseline:
        record["baseline_written"] = str(store_baseline({**current, "config_sha256": cfg.digest(),
                                                         "ensemble": cfg.ensemble, "seed": cfg.seed}))
    elif base is not None and base.get("config_sha256") == cfg.digest():
        record["regression"] = regression_check(current, {k: base[k] for k in current})
    run.summary(record)


COMMANDS = {
    "simulate": cmd_simulate, "cascade": cmd_cascade, "control-linear": cmd_control_linear,
    "picard": cmd_picard, "control-nonlinear": cmd_control_nonlinear, "insensitize": cmd_insensitize,
    "audit-weights": cmd_audit_weights, "audit-observability": cmd_audit_observability,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hskdv", description="Coupled KdV cascade control experiments")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key = value config file (desk defaults when omitted)")
    ap.add_argument("--output-root", help=f"run directory root (overrides ${OUTPUT_ENV})")
    ap.add_argument("--eps", type=float)
    ap.add_argument("--grid-n", type=int, dest="N")
    ap.add_argument("--grid-m", type=int, dest="M")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--s", type=float)
    ap.add_argument("--tau", type=float)
    ap.add_argument("--ensemble", type=int)
    ap.add_argument("--force-zero-control", action="store_const", const="true", dest="force_zero_control")
    ap.add_argument("--write-baseline", action="store_true",
                    help="audit-observability: freeze the current maxima as the regression baseline")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        overrides = {k: getattr(args, k) for k in ("eps", "N", "M", "seed", "s", "tau", "ensemble",
                                                   "force_zero_control")}
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
        cfg = cfg.with_overrides(**overrides)
        root = Path(args.output_root or os.environ.get(OUTPUT_ENV, "runs"))
        r = Run(args.subcommand, cfg, root)
        if args.subcommand == "audit-observability":
            cmd_audit_observability(cfg, r, write_baseline=args.write_baseline)
        else:
            COMMANDS[args.subcommand](cfg, r)
        print(r.dir)
        return 0
    except HskdvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
