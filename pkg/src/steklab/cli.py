"""Command-line entry point: ``steklab <kind> --config run.ini --out dir``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from . import reduced1d as rd
from . import shapeopt as so
from .config import KINDS, RunConfig, load_config, parse_config
from .errors import ConfigError, SteklabError
from .geometry.builders import build_annulus_mesh, build_disk_mesh, build_square_mesh
from .geometry.cusp import GlueParams, build_cusp_mesh
from .geometry.glue import build_glue_base, glue
from .geometry.meshio import read_mesh, write_mesh
from .geometry.topology import topology_invariants
from .steklov import SteklovProblem

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


# ----------------------------------------------------------------- output
def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def write_csv(path: Path, header, rows, digest: str) -> None:
    """CSV with a config-hash comment line, a header row and 17-digit floats."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config-sha256: {digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            cells = [row.get(h) for h in header] if isinstance(row, dict) else list(row)
            w.writerow([_cell(c) for c in cells])


# --------------------------------------------------------------- geometry
def glue_params(cfg: RunConfig, eps=None, alpha=None, t=None) -> GlueParams:
    g = cfg["glue"]
    tt = t if t is not None else (1.0 if g["t"] == "auto" else g["t"])
    return GlueParams(
        eps if eps is not None else g["eps"],
        alpha if alpha is not None else g["alpha"],
        t=tt, p0=g["p0"], p1=g["p1"], orientation_flags=(g["flip0"], g["flip1"]),
    )


def plain_geometry(cfg: RunConfig) -> tuple:
    """``(mesh, metric)`` for every shape except ``glued-disk``."""
    g = cfg["geometry"]
    shape = g["shape"]
    if shape == "disk":
        return build_disk_mesh(g["refinement"], g["radius"])
    if shape == "annulus":
        mesh, metric = build_annulus_mesh(g["inner_radius"] / g["radius"], g["n_theta"], g["n_radial"])
        return mesh, metric.shifted(math.log(g["radius"]))
    if shape == "square":
        return build_square_mesh(g["n"], g["side"])
    if shape == "cusp":
        return build_cusp_mesh(glue_params(cfg), g["n_s"], g["layers"])
    if shape == "file":
        return read_mesh(cfg.mesh_path())
    raise ConfigError(f"[geometry] shape: {shape!r} does not give a plain mesh here")


def glued_surface(cfg: RunConfig, eps=None, alpha=None, t=None, xi=None):
    """Glued disk; ``t = auto`` balances the thin mass to ``xi``.

    Returns ``(glued, base_sigma_star, multiplicity, thin_mass)``; the mass is
    NaN when ``t`` is fixed.
    """
    g, gl = cfg["geometry"], cfg["glue"]
    params = glue_params(cfg, eps, alpha, t)
    base = build_glue_base(params, n_phi=g["n_phi"], cap_rings=g["cap_rings"])
    s_star, k = rd.base_sigma_star(base.mesh, base.metric)
    if t is None and gl["t"] == "auto":
        choice = rd.choose_t_for_mass(base, params, xi=xi or gl["xi"], sigma_star=s_star, tol=gl["mass_tol"], layers=g["layers"])
        return choice.glued, s_star, k, choice.mass
    placed = params.replace(p0=base.p0_arc, p1=base.p1_arc, r=params.r)
    return glue(base.mesh, base.metric, placed, layers=g["layers"]), s_star, k, float("nan")


def steklov_problem(cfg: RunConfig, mesh) -> SteklovProblem:
    s = cfg["solver"]
    tags = s["steklov_tags"] or None
    if tags is None and cfg["geometry"]["shape"] == "cusp":
        tags = ("side+", "side-")
    return SteklovProblem(mesh, steklov_tags=tags, dirichlet_tags=s["dirichlet_tags"], lumped=s["lumped"])


def _mesh_and_metric(cfg):
    if cfg["geometry"]["shape"] == "glued-disk":
        glued, *_ = glued_surface(cfg)
        return glued.mesh, glued.metric
    return plain_geometry(cfg)


# --------------------------------------------------------------- commands
def _topology_rows(mesh):
    topo = topology_invariants(mesh)
    rows = [(k, v) for k, v in topo.as_dict().items()]
    rows += [("n_vertices", mesh.n_vertices), ("n_triangles", len(mesh.triangles)), ("min_angle_deg", mesh.min_angle())]
    return rows


def cmd_mesh(cfg, out, digest):
    mesh, metric = _mesh_and_metric(cfg)
    write_mesh(out / "mesh.txt", mesh, metric, comments=[f"config-sha256: {digest}"])
    write_csv(out / "topology.csv", ["quantity", "value"], _topology_rows(mesh), digest)


def cmd_spectrum(cfg, out, digest):
    mesh, metric = _mesh_and_metric(cfg)
    s = cfg["solver"]
    spec = steklov_problem(cfg, mesh).solve(metric, count=s["count"], method=s["method"], shift=s["shift"])
    cluster_of = {i: c for c, group in enumerate(spec.clusters) for i in group}
    rows = [(i, sig, sig * spec.boundary_length, cluster_of[i]) for i, sig in enumerate(spec.eigenvalues)]
    write_csv(out / "spectrum.csv", ["index", "sigma", "sigma_L", "cluster"], rows, digest)


def cmd_glue(cfg, out, digest):
    if cfg["geometry"]["shape"] != "glued-disk":
        raise ConfigError("[geometry] shape: the glue command needs shape = glued-disk")
    glued, s_star, k, mass = glued_surface(cfg)
    p = glued.params
    write_mesh(out / "mesh.txt", glued.mesh, glued.metric, comments=[f"config-sha256: {digest}"])
    write_csv(out / "topology.csv", ["quantity", "value"], _topology_rows(glued.mesh), digest)
    rows = [("eps", p.eps), ("alpha", p.alpha), ("r", p.r), ("log_inv_r", p.log_inv_r), ("t", p.t),
            ("thin_mass", mass), ("sigma_star", s_star), ("multiplicity", k)]
    write_csv(out / "glue.csv", ["quantity", "value"], rows, digest)


def cmd_reduce(cfg, out, digest):
    r = cfg["reduce"]
    params = glue_params(cfg)
    states = rd.solve_reduced(params, r["bc"], count=r["count"], n=r["n"], correction=r["correction"],
                              method=r["method"], beta=r["beta"])
    exact = r["bc"] == "dirichlet-dirichlet" and not r["correction"]
    rows = []
    for k, st in enumerate(states, start=1):
        ref = rd.truncated_dirichlet_sigma(params, k) if exact else float("nan")
        rows.append((k, st.sigma, ref, st.sigma - ref))
    write_csv(out / "reduced.csv", ["mode", "sigma", "closed_form", "difference"], rows, digest)
    if r["coupled"] != "none":
        if cfg["geometry"]["shape"] != "glued-disk":
            raise ConfigError("[reduce] coupled: needs [geometry] shape = glued-disk")
        g = cfg["geometry"]
        glued, *_ = glued_surface(cfg)
        base = build_glue_base(glued.params, n_phi=g["n_phi"], cap_rings=g["cap_rings"])
        res = rd.coupled_solve(base, glued.params, method=r["coupled"], correction=r["correction"])
        write_csv(out / "coupled.csv", ["index", "sigma", "t", "iterations"],
                  [(i, s, glued.params.t, res.iterations) for i, s in enumerate(res.sigma)], digest)


def cmd_verify(cfg, out, digest):
    a = cfg["asymptotics"]
    ode1, ode2 = asy.ode_residuals(a["points"])
    ints = asy.model_integrals()
    rs = np.geomspace(a["r_min"], a["r_max"], a["r_count"])
    diff_i = max(abs(asy.integral_I(r) - asy.integral_I_quadrature(r)) for r in rs)
    ident = asy.energy_identity_residuals(lambda x, v: np.sin(np.pi * v) + 0 * x, glue_params(cfg))
    checks = [
        ("ode_residual_f1", ode1, 1e-10),
        ("ode_residual_f2", ode2, 1e-10),
        ("int_f_f1", abs(ints["f_f1"]), 1e-12),
        ("int_f_f2_plus_half_f1_sq", abs(ints["f_f2"] + 0.5 * ints["f1_f1"]), 1e-12),
        ("integral_I_closed_vs_quadrature", diff_i, 1e-12),
        ("energy_identity_square", ident["square"], 1e-8),
        ("energy_identity_mean", ident["mean"], 1e-8),
        ("energy_identity_gradient", ident["gradient"], 1e-8),
    ]
    rows = [(name, val, tol, bool(val <= tol)) for name, val, tol in checks]
    write_csv(out / "asymptotics.csv", ["check", "value", "tolerance", "pass"], rows, digest)


def cmd_optimize(cfg, out, digest):
    if cfg["geometry"]["shape"] in ("glued-disk", "cusp"):
        raise ConfigError("[geometry] shape: optimize runs on disk, annulus, square or file meshes")
    o = cfg["optimize"]
    mesh, metric = plain_geometry(cfg)
    prob = steklov_problem(cfg, mesh)
    basis = so.DensityBasis(prob, metric, modes=o["modes"], per_vertex=o["per_vertex"], exclude=o["exclude"])
    if o["init"] == "random":
        init = basis.random(np.random.default_rng(cfg["run"]["seed"]), o["amplitude"])
    else:
        init = basis.zero()
    res = so.optimize_density(prob, metric, init=init, basis=basis, max_iter=o["max_iter"], cluster_rtol=o["cluster_rtol"])
    write_csv(out / "history.csv", ["iter", "sigma1L", "clustersize", "stepsize"],
              [(h.iteration, h.sigma1L, h.cluster_size, h.step) for h in res.history], digest)
    s = prob.partition[0]
    w = res.density.log_density
    write_csv(out / "density.csv", ["vertex", "x", "y", "log_density", "density"],
              [(int(v), mesh.vertices[v, 0], mesh.vertices[v, 1], w[v], math.exp(w[v])) for v in s], digest)
    imm = so.extract_immersion(prob, res.metric, res.spectrum, indices=res.cluster)
    names = [f"phi{i + 1}" for i in range(imm.dimension)]
    write_csv(out / "immersion.csv", ["vertex"] + names,
              [(v, *imm.coordinates[v]) for v in range(mesh.n_vertices)], digest)
    rep = so.minimality_residuals(imm, prob, res.metric)
    rows = [("status", res.status), ("sigma1L", res.value), ("dimension", imm.dimension), ("scale", imm.scale),
            ("harmonicity", rep.harmonicity), ("sphere_deviation", rep.sphere_deviation),
            ("boundary_angle", rep.boundary_angle), ("flatness", res.density.flatness(s))]
    write_csv(out / "residuals.csv", ["quantity", "value"], rows, digest)


# ------------------------------------------------------------------ sweeps
CUSP_COLUMNS = ["index", "eps", "alpha", "t", "log_inv_r", "sigma1", "law", "law_rel_err", "monotone"]
GLUED_COLUMNS = [
    "index", "eps", "alpha", "xi", "t", "thin_mass", "sigma_star", "multiplicity", "sigma1", "sigma_K1",
    "ub1", "ub1_scale", "ubK1", "ubK1_scale", "slack1", "slackK1", "coupled_sigma1", "coupled_rel_err",
    "combined_bound", "single_bound", "c1", "bound_gap",
]


def sweep_grid(cfg: RunConfig) -> list:
    s = cfg["sweep"]
    if cfg["geometry"]["shape"] == "cusp":
        third = [("t", t) for t in (s["t"] or (1.0,))]
    elif s["t"]:
        third = [("t", t) for t in s["t"]]
    else:
        third = [("xi", x) for x in (s["xi"] or (cfg["glue"]["xi"],))]
    return [(i, e, a, key, val) for i, (e, a, (key, val)) in enumerate(
        (e, a, kv) for a in s["alpha"] for e in s["eps"] for kv in third)]


def _sweep_point(args):
    text, base_dir, (i, eps, alpha, key, val) = args
    cfg = parse_config(text, base_dir)
    if cfg["geometry"]["shape"] == "cusp":
        g = cfg["geometry"]
        p = glue_params(cfg, eps, alpha, val)
        sigma, law = asy.cusp_branch_law(p, g["n_s"], g["layers"])
        return {"index": i, "eps": eps, "alpha": alpha, "t": val, "log_inv_r": p.log_inv_r, "sigma1": sigma,
                "law": law, "law_rel_err": abs(law - math.pi**2) / math.pi**2}
    t = val if key == "t" else None
    xi = val if key == "xi" else None
    glued, s_star, k, mass = glued_surface(cfg, eps, alpha, t=t, xi=xi)
    p = glued.params
    spec = SteklovProblem(glued.mesh).solve(glued.metric, max(6, k + 3))
    ub1 = asy.upper_bound_first(p, s_star)
    ubk = asy.upper_bound_Kplus1(p, s_star)
    g = cfg["geometry"]
    base = build_glue_base(p, n_phi=g["n_phi"], cap_rings=g["cap_rings"])
    coupled = rd.coupled_solve(base, p).sigma[1]
    s1, sk = float(spec.eigenvalues[1]), float(spec.eigenvalues[k + 1])
    row = {"index": i, "eps": eps, "alpha": alpha, "xi": xi, "t": p.t, "thin_mass": mass, "sigma_star": s_star,
           "multiplicity": k, "sigma1": s1, "sigma_K1": sk, "ub1": ub1.bound, "ub1_scale": ub1.error_scale,
           "ubK1": ubk.value, "ubK1_scale": ubk.error_scale, "slack1": (s1 - ub1.bound) / ub1.error_scale,
           "slackK1": (sk - ubk.value) / ubk.error_scale, "coupled_sigma1": coupled,
           "coupled_rel_err": abs(coupled - s1) / s1}
    try:
        cb = rd.combined_test_function(glued, spec, k)
        row.update(combined_bound=cb.bound, single_bound=cb.single_bound, c1=cb.c1, bound_gap=cb.bound - cb.single_bound)
    except SteklabError:  # |c1| below threshold: no improved bound at this point
        pass
    return row


def _sweep_summary(cfg, rows):
    if cfg["geometry"]["shape"] == "cusp":
        ok = True
        for alpha in cfg["sweep"]["alpha"]:
            errs = [r["law_rel_err"] for r in sorted((r for r in rows if r["alpha"] == alpha), key=lambda r: -r["eps"])]
            ok &= all(b <= a for a, b in zip(errs, errs[1:]))
        eps_min = min(cfg["sweep"]["eps"])
        worst = max(r["law_rel_err"] for r in rows if r["eps"] == eps_min)
        return {"index": "summary", "law_rel_err": worst, "monotone": ok}
    gaps = [r["bound_gap"] for r in rows if "bound_gap" in r]
    return {"index": "summary", "slack1": max(r["slack1"] for r in rows), "slackK1": max(r["slackK1"] for r in rows),
            "coupled_rel_err": max(r["coupled_rel_err"] for r in rows), "bound_gap": min(gaps) if gaps else None}


def run_sweep(cfg: RunConfig, threads: int = 1) -> tuple:
    """Rows ordered by grid index, plus one summary row."""
    text = cfg.serialize()
    jobs = [(text, str(cfg.base_dir), pt) for pt in sweep_grid(cfg)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads, mp_context=get_context("spawn")) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    columns = CUSP_COLUMNS if cfg["geometry"]["shape"] == "cusp" else GLUED_COLUMNS
    return columns, rows + [_sweep_summary(cfg, rows)]


def cmd_sweep(cfg, out, digest):
    columns, rows = run_sweep(cfg, cfg["run"]["threads"])
    write_csv(out / "sweep.csv", columns, rows, digest)


COMMANDS = {
    "mesh": cmd_mesh, "spectrum": cmd_spectrum, "glue": cmd_glue, "reduce": cmd_reduce,
    "verify-asymptotics": cmd_verify, "optimize": cmd_optimize, "sweep": cmd_sweep,
}


# -------------------------------------------------------------------- main
def run(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    COMMANDS[cfg.kind](cfg, out, cfg.digest())


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steklab", description="Steklov eigenvalue experiments on glued surfaces.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", type=int, default=None, help="worker processes for sweeps")
    ap.add_argument("--seed", type=_u64, default=None, help="seed for randomized initial densities")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config).with_overrides(kind=args.kind, seed=args.seed, threads=args.threads)
        run(cfg, Path(args.out))
    except ConfigError as exc:
        print(f"steklab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SteklabError as exc:
        print(f"steklab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
