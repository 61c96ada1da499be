"""Stage runners and the end-to-end pipeline.

Stages exchange data only through files in their output directories, so
any downstream stage can be deleted and rerun from upstream outputs.  Each
stage writes into ``<out>/<stage>``; a stage producing several runs (one per
``a_eps`` value) uses ``run0``, ``run1``, ... subdirectories.
"""
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cell_stokes import CellProblem, cell_grid, dirichlet_form, solution_mean_velocity
from .darcy2d import solve_darcy
from .dns_thin import (NotApplicable, ScalingRow, average_velocity, compare_fields,
                       dilated_norms, run_signature, scaling_report, solve_dns, u3_ratio)
from .errors import GridMismatch, InconsistentRuns, PermahomError, ValidationError
from .geometry import build_thin_domain, voxelize_cell
from .io import (fmt, read_csv, read_csv_columns, read_grid_csv, sha256_file, write_csv,
                 write_grid_csv, write_json_atomic, write_mask_vtk, write_vtk)
from .permeability import PermeabilityTensor, certify
from .unfolding import DilatedField, fold, unfold, verify_norm_identities

log = logging.getLogger(__name__)

UNFOLD_TOL = 1e-12
REPORT_COLUMNS = ["a_eps", "eps", "ratio_u", "ratio_Du", "rel_err_velocity",
                  "rel_err_pressure", "u3_ratio"]
UNFOLD_COLUMNS = ["identity_a_defect", "identity_b_defect", "identity_c_defect", "trials",
                  "max_defect"]


@dataclass
class StageResult:
    """Scalar diagnostics and produced files of one stage."""

    info: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)  # name -> passed


def _run_dirs(base, count):
    if count == 1:
        return [base]
    return [os.path.join(base, f"run{i}") for i in range(count)]


def _find_runs(base, marker):
    if os.path.exists(os.path.join(base, marker)):
        return [base]
    runs = sorted((d for d in os.listdir(base) if d.startswith("run")),
                  key=lambda d: int(d[3:]))
    if not runs:
        raise FileNotFoundError(f"no {marker} under {base}")
    return [os.path.join(base, d) for d in runs]


# --------------------------------------------------------------------------
# cell

def _cell_centred(u, grid):
    out = np.empty(grid.shape + (3,))
    for c in range(3):
        out[..., c] = 0.5 * (u[c] + np.roll(u[c], -1, axis=c))
    return out


def stage_cell(cfg, out):
    os.makedirs(out, exist_ok=True)
    mask = voxelize_cell(cfg.shape, cfg.cell_n)
    prob = CellProblem(mask, cfg.solver)
    res = StageResult()
    mpath = os.path.join(out, "mask.vtk")
    write_mask_vtk(mpath, mask.labels, (mask.h,) * 3, (-0.5, -0.5, -0.5))
    res.files.append(mpath)
    rows = []
    for i in (1, 2):
        sol = prob.solve(i)
        g = sol.grid
        faces = os.path.join(out, f"w{i}_faces.csv")
        entries = []
        for c in range(3):
            idx = np.argwhere(g.free[c])
            vals = sol.w.u[c][g.free[c]]
            entries += [(c, *ix, v) for ix, v in zip(idx.tolist(), vals)]
        write_csv(faces, ["component", "i", "j", "k", "value"], entries)
        vtk = os.path.join(out, f"w{i}.vtk")
        h = mask.h
        write_vtk(vtk, g.shape, (h, h, h), (-0.5, -0.5, -0.5),
                  scalars={f"pi{i}": sol.pi, "solid": mask.solid},
                  vectors={f"w{i}": _cell_centred(sol.w.u, g)})
        res.files += [faces, vtk]
        rows.append((i, sol.outer_iterations, sol.momentum_residual, sol.div_residual,
                     *solution_mean_velocity(sol)))
        res.info[f"w{i}"] = {"momentum_residual": sol.momentum_residual,
                             "div_residual": sol.div_residual,
                             "outer_iterations": sol.outer_iterations}
    path = os.path.join(out, "cell_report.csv")
    write_csv(path, ["i", "iterations", "momentum_residual", "div_residual", "mean_velocity_x",
                     "mean_velocity_y", "mean_velocity_z"], rows)
    res.files.append(path)
    return res


def _read_faces(path, grid):
    cols = read_csv_columns(path)
    u = list(grid.zero_faces())
    comp = cols["component"].astype(int)
    ijk = np.stack([cols["i"], cols["j"], cols["k"]], axis=1).astype(int)
    for c in range(3):
        sel = comp == c
        u[c][tuple(ijk[sel].T)] = cols["value"][sel]
    return tuple(u)


# --------------------------------------------------------------------------
# k

def stage_k(cfg, cell_dir, out):
    os.makedirs(out, exist_ok=True)
    mask = voxelize_cell(cfg.shape, cfg.cell_n)
    g = cell_grid(mask)
    w = [_read_faces(os.path.join(cell_dir, f"w{i}_faces.csv"), g) for i in (1, 2)]
    nu = cfg.solver.nu
    K = np.array([[nu * dirichlet_form(w[i], w[j], g) for j in range(2)] for i in range(2)])
    asym = abs(K[0, 1] - K[1, 0])
    K = 0.5 * (K + K.T)
    vol = g.cell_volume
    K_alt = np.array([[vol * float(np.sum(w[i][j])) for j in range(2)] for i in range(2)])
    tensor = PermeabilityTensor(K, K_alt, nu, cfg.cell_n, asym)
    rep = certify(tensor)
    path = os.path.join(out, "K.csv")
    rows = [(f"K{i + 1}{j + 1}", K[i, j]) for i in range(2) for j in range(2)]
    rows += [(f"K_alt{i + 1}{j + 1}", K_alt[i, j]) for i in range(2) for j in range(2)]
    rows += [("eig_min", rep.eigenvalues[0]), ("eig_max", rep.eigenvalues[1]),
             ("consistency_gap", tensor.consistency_gap), ("asymmetry", asym),
             ("n", cfg.cell_n), ("nu", nu)]
    write_csv(path, ["quantity", "value"], rows)
    return StageResult({"K": K.tolist(), "consistency_gap": tensor.consistency_gap,
                        "eigenvalues": list(rep.eigenvalues)}, [path],
                       {"K_positive_definite": rep.passed})


def read_K(path):
    """Energy-form tensor from a ``K.csv`` written by the k stage."""
    header, rows = read_csv(path)
    vals = {r[0]: r[1] for r in rows}
    try:
        return np.array([[vals["K11"], vals["K12"]], [vals["K21"], vals["K22"]]])
    except KeyError as e:
        raise ValidationError(f"{path} has no entry {e}", "k") from None


# --------------------------------------------------------------------------
# darcy

def darcy_grids(cfg):
    if cfg.darcy_grid is not None:
        return [cfg.darcy_grid]
    return [(d.mx, d.my) for d in cfg.domains]


def stage_darcy(cfg, k_path, out):
    K = read_K(k_path)
    f = cfg.force.build(K, cfg.Lx, cfg.Ly)
    grids = darcy_grids(cfg)
    res = StageResult()
    for i, (d, (gx, gy)) in enumerate(zip(_run_dirs(out, len(grids)), grids)):
        os.makedirs(d, exist_ok=True)
        sol = solve_darcy(K, f, gx, gy, cfg.Lx, cfg.Ly)
        g = sol.grid
        x = (np.arange(gx) + 0.5) * g.hx
        y = (np.arange(gy) + 0.5) * g.hy
        pp, up = os.path.join(d, "p.csv"), os.path.join(d, "U.csv")
        write_grid_csv(pp, x, y, ["p"], [sol.p])
        write_grid_csv(up, x, y, ["U1", "U2", "U3"], [sol.U[..., 0], sol.U[..., 1], sol.U3])
        vtk = os.path.join(d, "fields.vtk")
        U3d = np.concatenate([sol.U, np.zeros(sol.p.shape + (1,))], axis=-1)
        write_vtk(vtk, (gx, gy, 1), (g.hx, g.hy, 1.0),
                  scalars={"p": sol.p}, vectors={"U": U3d[:, :, None, :]})
        summ = os.path.join(d, "summary.csv")
        write_csv(summ, ["gx", "gy", "Lx", "Ly", "flux_residual", "iterations"],
                  [(gx, gy, g.Lx, g.Ly, sol.flux_residual, sol.iterations)])
        res.files += [pp, up, vtk, summ]
        res.info[f"run{i}"] = {"flux_residual": sol.flux_residual,
                               "iterations": sol.iterations}
    return res


# --------------------------------------------------------------------------
# dns

DNS_SUMMARY = ["a_eps", "eps", "Lx", "Ly", "n_c", "has_obstacles", "norm_u", "norm_Du",
               "ratio_u", "ratio_Du", "u3_ratio", "momentum_residual", "div_residual",
               "outer_iterations", "signature"]


def stage_dns(cfg, out, override=False):
    cell = voxelize_cell(cfg.shape, cfg.n_c)
    f = cfg.force.build(None, cfg.Lx, cfg.Ly)
    res = StageResult()
    for i, (d, spec) in enumerate(zip(_run_dirs(out, len(cfg.domains)), cfg.domains)):
        os.makedirs(d, exist_ok=True)
        mask = build_thin_domain(spec, cell)
        sol = solve_dns(mask, f, cfg.solver, cfg.max_unknowns, override)
        avg = average_velocity(sol)
        nu_, nd = dilated_norms(sol)
        a = spec.a_eps
        x = (np.arange(spec.mx) + 0.5) * a
        y = (np.arange(spec.my) + 0.5) * a
        cols = os.path.join(d, "columns.csv")
        write_grid_csv(cols, x, y, ["U1_scaled", "U2_scaled", "U3_mean", "p_mean"],
                       [avg.scaled[..., 0], avg.scaled[..., 1], avg.column[..., 2],
                        avg.pressure])
        blocks = os.path.join(d, "blocks.csv")
        B = avg.block
        idx = np.argwhere(np.ones(B.shape[:3], dtype=bool))
        write_csv(blocks, ["kx", "ky", "kz", "u1", "u2", "u3"],
                  [(*ix, *B[tuple(ix)]) for ix in idx.tolist()])
        vtk = os.path.join(d, "fields.vtk")
        h = mask.voxel_size
        write_vtk(vtk, mask.shape, (h, h, h),
                  scalars={"p": sol.p, "fluid": mask.labels},
                  vectors={"u": sol.extended_velocity()})
        summ = os.path.join(d, "summary.csv")
        write_csv(summ, DNS_SUMMARY,
                  [(a, spec.epsilon, spec.Lx, spec.Ly, cfg.n_c, mask.has_obstacles, nu_, nd,
                    nu_ / a ** 2, nd / a, u3_ratio(avg), sol.momentum_residual,
                    sol.div_residual, sol.outer_iterations, run_signature(sol))])
        res.files += [cols, blocks, vtk, summ]
        res.info[f"run{i}"] = {"a_eps": a, "momentum_residual": sol.momentum_residual,
                               "div_residual": sol.div_residual,
                               "outer_iterations": sol.outer_iterations}
    return res


# --------------------------------------------------------------------------
# compare

def _summary(path):
    header, rows = read_csv(path)
    return dict(zip(header, rows[0]))


def stage_compare(dns_dir, darcy_dir, out_csv):
    dns_runs = _find_runs(dns_dir, "summary.csv")
    darcy_runs = _find_runs(darcy_dir, "summary.csv")
    if len(darcy_runs) == 1:
        darcy_runs = darcy_runs * len(dns_runs)
    if len(darcy_runs) != len(dns_runs):
        raise GridMismatch(f"{len(dns_runs)} DNS runs but {len(darcy_runs)} Darcy solutions")
    rows, summaries = [], []
    res = StageResult()
    for dd, rd in zip(dns_runs, darcy_runs):
        s = _summary(os.path.join(dd, "summary.csv"))
        summaries.append(s)
        ds = _summary(os.path.join(rd, "summary.csv"))
        shape = (int(ds["gx"]), int(ds["gy"]))
        cols = read_csv_columns(os.path.join(dd, "columns.csv"))
        mx = int(round(s["Lx"] / s["a_eps"]))
        my = int(round(s["Ly"] / s["a_eps"]))
        if (mx, my) != shape or not np.isclose(ds["Lx"], s["Lx"]) or \
                not np.isclose(ds["Ly"], s["Ly"]):
            raise GridMismatch(f"Darcy grid {shape} is not aligned with the {(mx, my)} "
                               f"microcell columns of the DNS run in {dd}")
        U = read_grid_csv(os.path.join(rd, "U.csv"), shape)
        P = read_grid_csv(os.path.join(rd, "p.csv"), shape)
        if not int(s["has_obstacles"]):
            rel_u = rel_p = "NA"
            note = NotApplicable("no obstacles: the Darcy limit does not apply").reason
        else:
            su = np.stack([cols["U1_scaled"].reshape(shape), cols["U2_scaled"].reshape(shape)],
                          axis=-1)
            du = np.stack([U["U1"], U["U2"]], axis=-1)
            rel_u, rel_p, _, _ = compare_fields(su, du, cols["p_mean"].reshape(shape), P["p"],
                                                s["a_eps"] ** 2)
            note = ""
        rows.append((s["a_eps"], s["eps"], s["ratio_u"], s["ratio_Du"], rel_u, rel_p,
                     s["u3_ratio"]))
        res.info[os.path.basename(dd)] = {"rel_err_velocity": rel_u, "rel_err_pressure": rel_p,
                                          "note": note}
    os.makedirs(os.path.dirname(os.path.abspath(out_csv)), exist_ok=True)
    write_csv(out_csv, REPORT_COLUMNS, rows)
    res.files.append(out_csv)
    if len(summaries) >= 2:
        if len({s["signature"] for s in summaries}) != 1:
            raise InconsistentRuns("DNS runs differ in domain, obstacle, resolution or force")
        audit = scaling_report([ScalingRow(s["a_eps"], s["eps"], s["norm_u"], s["norm_Du"],
                                           s["ratio_u"], s["ratio_Du"]) for s in summaries])
        res.info["scaling_growth_u"] = list(audit.growth_u)
        res.info["scaling_growth_Du"] = list(audit.growth_Du)
        res.checks["scaling_audit"] = audit.passed
    return res


# --------------------------------------------------------------------------
# verify-unfold

def stage_verify_unfold(cfg, out_csv, trials=None):
    trials = cfg.unfold_trials if trials is None else int(trials)
    spec = cfg.domains[0]
    n_c = cfg.n_c
    fluid = None
    if cfg.shape is not None:
        fluid = build_thin_domain(spec, voxelize_cell(cfg.shape, n_c)).labels
    shape = (spec.mx * n_c, spec.my * n_c, spec.mz * n_c)
    rng = np.random.default_rng(cfg.unfold_seed)
    worst = np.zeros(3)
    round_trip = True
    for _ in range(trials):
        fld = DilatedField(rng.standard_normal(shape), spec.a_eps, spec.epsilon, n_c, fluid)
        r = verify_norm_identities(fld)
        worst = np.maximum(worst, [r.identity_a_defect, r.identity_b_defect,
                                   r.identity_c_defect])
        round_trip &= bool(np.array_equal(fold(unfold(fld)).values, fld.values))
    os.makedirs(os.path.dirname(os.path.abspath(out_csv)), exist_ok=True)
    write_csv(out_csv, UNFOLD_COLUMNS, [(*worst, trials, worst.max())])
    return StageResult({"max_defect": float(worst.max()), "round_trip": round_trip},
                       [out_csv], {"unfold_identities": bool(worst.max() <= UNFOLD_TOL)
                                   and round_trip})


# --------------------------------------------------------------------------
# orchestration

@dataclass
class RunManifest:
    config_hash: str
    version: str
    stages: list
    outputs: dict
    checks: dict
    failed_stage: str = None

    def as_dict(self):
        return {"config_hash": self.config_hash, "version": self.version,
                "stages": self.stages, "outputs": self.outputs, "checks": self.checks,
                "failed_stage": self.failed_stage}

    @property
    def passed(self):
        return self.failed_stage is None and all(self.checks.values())


def _stage_plan(cfg, out, override):
    p = {s: os.path.join(out, s) for s in ("cell", "k", "darcy", "dns", "compare",
                                           "verify-unfold")}
    return {
        "cell": lambda: stage_cell(cfg, p["cell"]),
        "k": lambda: stage_k(cfg, p["cell"], p["k"]),
        "darcy": lambda: stage_darcy(cfg, os.path.join(p["k"], "K.csv"), p["darcy"]),
        "dns": lambda: stage_dns(cfg, p["dns"], override),
        "compare": lambda: stage_compare(p["dns"], p["darcy"],
                                         os.path.join(p["compare"], "report.csv")),
        "verify-unfold": lambda: stage_verify_unfold(
            cfg, os.path.join(p["verify-unfold"], "report.csv")),
    }


def run_pipeline(cfg, out, override=False, stages=None):
    """Run the configured stages in order and write ``manifest.json`` into ``out``."""
    os.makedirs(out, exist_ok=True)
    stages = tuple(stages or cfg.stages)
    plan = _stage_plan(cfg, out, override)
    manifest = RunManifest(cfg.hash, __version__, [], {}, {})
    files = []
    try:
        for name in stages:
            t0 = time.perf_counter()
            entry = {"name": name, "status": "running"}
            manifest.stages.append(entry)
            log.info("stage %s", name)
            try:
                r = plan[name]()
            except PermahomError:
                entry["status"] = "failed"
                entry["seconds"] = time.perf_counter() - t0
                manifest.failed_stage = name
                raise
            entry.update(status="ok", seconds=time.perf_counter() - t0, info=r.info)
            manifest.checks.update(r.checks)
            files += r.files
    finally:
        for path in files:
            if os.path.exists(path):
                manifest.outputs[os.path.relpath(path, out)] = sha256_file(path)
        write_json_atomic(os.path.join(out, "manifest.json"), _jsonable(manifest.as_dict()))
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else fmt(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
