"""Command line interface.

Subcommands: mesh, simulate, reconstruct, gridsearch, ablate, report.  All read
one structured config file; a few flags override the most common fields.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_experiment_config
from .errors import EcgiTvError
from .experiment import (METHODS, ExperimentConfig, ablate_electrodes, build_assets,
                         reconstruct, run_experiment, simulate_fields, summarize,
                         write_ablation_csv, write_heatmap_ppm)
from .metrics import CSV_HEADER, MetricsReport
from .mesh import save_mesh
from .simulate import TruthBundle, add_noise, sample_truth, save_truth_bundle


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["seeds"] = (args.seed,)
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    if getattr(args, "method", None):
        updates["methods"] = tuple(args.method)
    if getattr(args, "snr_db", None) is not None:
        updates["snr_db"] = (args.snr_db,)
    if getattr(args, "electrodes", None) is not None:
        updates["n_electrodes"] = args.electrodes
    return replace(config, **updates) if updates else config


def _load(args) -> ExperimentConfig:
    config = load_experiment_config(args.config)
    return _apply_overrides(config, args)


def cmd_mesh(args) -> int:
    config = _load(args)
    assets = build_assets(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mesh_inverse.txt"
    save_mesh(assets.geometry.inv_mesh, assets.geometry.bounds, assets.geometry.electrodes, path)
    g = assets.geometry
    print(f"wrote {path}")
    print(f"inverse mesh: {g.inv_mesh.n_vertices} vertices, {g.inv_mesh.n_triangles} triangles, "
          f"N_V={g.bounds.n_epi_nodes}, |Gamma|={g.bounds.gamma_nodes.size}, "
          f"electrodes={g.electrodes.count}")
    print(f"full mesh: {g.full_mesh.n_vertices} vertices, {g.full_mesh.n_triangles} triangles")
    return 0


def cmd_simulate(args) -> int:
    config = _load(args)
    assets = build_assets(config)
    phi, v = simulate_fields(assets.geometry, config.sim, config.table)
    u_g, z_g = sample_truth(v, assets.geometry)
    z_noisy, info = add_noise(z_g, config.snr_db[0], config.seeds[0])
    bundle = TruthBundle(u_g=u_g, z_g=z_g, z_noisy=z_noisy, phi=phi, noise=info,
                         config_hash=config.sim.content_hash())
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_truth_bundle(bundle, out / "truth_bundle.txt")
    write_heatmap_ppm(u_g, assets.geometry.bounds.n_epi_nodes, out / "heatmap_GT.ppm")
    print(f"wrote {out / 'truth_bundle.txt'} (snr target {info.target_snr_db} dB, "
          f"achieved {info.snr_db_clean:.2f} dB clean-norm / {info.snr_db_noisy:.2f} dB noisy-norm)")
    return 0


def cmd_reconstruct(args) -> int:
    config = _load(args)
    if len(config.methods) != 1:
        raise EcgiTvError("reconstruct needs exactly one --method")
    method = config.methods[0]
    lam_g = args.lambda_g
    lam_t = args.lambda_t
    if lam_t is None:
        lam_t = lam_g if method in ("T1ST", "TVST1", "TVST2") else 0.0
    assets = build_assets(config)
    phi, v = simulate_fields(assets.geometry, config.sim, config.table)
    u_g, z_g = sample_truth(v, assets.geometry)
    z_noisy, _ = add_noise(z_g, config.snr_db[0], config.seeds[0])
    u, seconds, trace = reconstruct(assets, method, lam_g, lam_t, z_noisy,
                                    seed=config.seeds[0])
    row = assets.metrics(method, lam_g, lam_t, config.snr_db[0],
                         assets.tm.n_electrodes, u, u_g, seconds)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / f"recon_{method}.txt", u)
    write_heatmap_ppm(u, assets.geometry.bounds.n_epi_nodes, out / f"heatmap_{method}.ppm")
    if trace is not None:
        trace.write_csv(out / f"trace_{method}.csv")
        print(f"{trace.n_iterations} iterations, terminated: {trace.termination}")
    print(CSV_HEADER)
    print(row.csv_row())
    return 0


def cmd_gridsearch(args) -> int:
    config = _load(args)
    rows = run_experiment(config)
    print(f"wrote {Path(config.out_dir) / 'metrics.csv'}")
    print(summarize(rows))
    return 0


def cmd_ablate(args) -> int:
    config = _load(args)
    rows = ablate_electrodes(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, out / "ablation.csv", config.reproducible_csv)
    print(f"wrote {out / 'ablation.csv'}")
    print(summarize(rows))
    return 0


def cmd_report(args) -> int:
    path = Path(args.metrics)
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise EcgiTvError(f"unexpected metrics header: {header}")
        for line in fh:
            f = line.strip().split(",")
            rows.append(MetricsReport(method=f[0], lam_gamma=float(f[1]), lam_t=float(f[2]),
                                      snr_db=float(f[3]), n_electrodes=int(f[4]),
                                      re=float(f[5]), cc=float(f[6]), vh=float(f[7]),
                                      seconds=float(f[8])))
    print(summarize(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecgi-tv",
                                     description="Space-time TV reconstruction benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="structured key-value config file")
        p.add_argument("--seed", type=int, default=None, help="override noise seed")
        p.add_argument("--out-dir", default=None, help="override output directory")

    p_mesh = sub.add_parser("mesh", help="generate and save the meshes")
    common(p_mesh)
    p_mesh.add_argument("--electrodes", type=int, default=None)
    p_mesh.set_defaults(func=cmd_mesh)

    p_sim = sub.add_parser("simulate", help="simulate ground truth and noise")
    common(p_sim)
    p_sim.add_argument("--snr-db", type=float, default=None)
    p_sim.add_argument("--electrodes", type=int, default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="single reconstruction at fixed lambda")
    common(p_rec)
    p_rec.add_argument("--method", action="append", choices=METHODS, required=True)
    p_rec.add_argument("--lambda-g", type=float, required=True)
    p_rec.add_argument("--lambda-t", type=float, default=None)
    p_rec.add_argument("--snr-db", type=float, default=None)
    p_rec.add_argument("--electrodes", type=int, default=None)
    p_rec.set_defaults(func=cmd_reconstruct)

    p_grid = sub.add_parser("gridsearch", help="grid-searched benchmark over all methods")
    common(p_grid)
    p_grid.add_argument("--method", action="append", choices=METHODS, default=None)
    p_grid.add_argument("--snr-db", type=float, default=None)
    p_grid.add_argument("--electrodes", type=int, default=None)
    p_grid.set_defaults(func=cmd_gridsearch)

    p_abl = sub.add_parser("ablate", help="electrode-count ablation at fixed lambda")
    common(p_abl)
    p_abl.add_argument("--method", action="append", choices=METHODS, default=None)
    p_abl.add_argument("--snr-db", type=float, default=None)
    p_abl.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="summarize a metrics.csv file")
    p_rep.add_argument("metrics", help="path to metrics.csv")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EcgiTvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
