"""Command-line surface: dataset ingestion, toy data, train/sample/evaluate.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import selftest as selftest_mod
from .autoencoder import MolecularAutoencoder
from .checkpoint import (CheckpointError, arrays_to_state_dict, load_checkpoint,
                         save_checkpoint, state_dict_to_arrays)
from .config import RunConfig, parse_config
from .data import DEFAULT_VOCAB, make_toy_dataset, read_xyz, write_xyz
from .diffusion import make_schedule
from .geometry import Molecule, project_zero_com
from .metrics import hash_molecules, set_metrics
from .sampler import SampleConfig, node_count_histogram, sample_molecules
from .score_network import DualScoreNetwork
from .trainer import train_autoencoder, train_diffusion


def _load_config(args) -> RunConfig:
    overrides = {}
    for item in args.set or []:
        key, _, val = item.partition("=")
        if not _:
            raise ValueError(f"--set expects key=value, got {item!r}")
        overrides[key] = val
    return parse_config(overrides, path=args.config)


def _attach_sidecar(mols: list[Molecule], path: str | None) -> int:
    """Attach normalized property vectors from a sidecar file.

    Format: a header line of property names, then one whitespace-separated
    row of values per molecule. Values are normalized to zero mean and unit
    variance over the corpus. Returns the number of properties.
    """
    if path is None:
        return 0
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    names = lines[0].split()
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if rows.shape != (len(mols), len(names)):
        raise ValueError(
            f"sidecar shape {rows.shape} does not match "
            f"{len(mols)} molecules x {len(names)} properties")
    std = rows.std(axis=0)
    std[std == 0] = 1.0
    normalized = (rows - rows.mean(axis=0)) / std
    for mol, row in zip(mols, normalized):
        mol.condition = row
    return len(names)


def _write_log(log: list[dict], path: str | None) -> None:
    if path:
        Path(path).write_text("".join(json.dumps(rec) + "\n" for rec in log))


def _save_model(path, stage, module, cfg: RunConfig, extra_arrays=None):
    arrays = state_dict_to_arrays(module)
    if extra_arrays:
        arrays.update(extra_arrays)
    save_checkpoint(path, stage, arrays, cfg.to_dict(), cfg.seed)


def _load_ae(path) -> tuple[MolecularAutoencoder, RunConfig]:
    stage, arrays, cfg_dict, _ = load_checkpoint(path)
    if stage != "ae":
        raise CheckpointError(f"expected an ae checkpoint, got {stage!r}")
    cfg = parse_config(cfg_dict)
    ae = MolecularAutoencoder(len(DEFAULT_VOCAB), k=cfg.k,
                              hidden_dim=cfg.hidden_dim,
                              n_layers=cfg.n_layers, tau=cfg.tau)
    arrays_to_state_dict(ae, arrays)
    return ae, cfg


def _load_diff(path):
    stage, arrays, cfg_dict, _ = load_checkpoint(path)
    if stage != "diffusion":
        raise CheckpointError(f"expected a diffusion checkpoint, got {stage!r}")
    cfg = parse_config(cfg_dict)
    hist = {}
    sizes = arrays.pop("node_hist_sizes", None)
    counts = arrays.pop("node_hist_counts", None)
    if sizes is not None and counts is not None:
        hist = {int(s): int(c) for s, c in zip(sizes, counts)}
    net = DualScoreNetwork(k=cfg.k, hidden_dim=cfg.hidden_dim,
                           n_conv=cfg.n_conv, time_dim=cfg.time_dim,
                           noise_dim=cfg.noise_dim, cond_dim=cfg.cond_dim,
                           var_noise_scale=cfg.var_noise_scale)
    arrays_to_state_dict(net, arrays)
    return net, cfg, hist


def _check_config_match(a: RunConfig, b: RunConfig) -> None:
    keys = ("k", "tau", "hidden_dim", "n_layers")
    for key in keys:
        if getattr(a, key) != getattr(b, key):
            raise CheckpointError(
                f"config mismatch between checkpoints: {key} "
                f"{getattr(a, key)} != {getattr(b, key)}")


def cmd_ingest(args) -> int:
    mols = read_xyz(args.data)
    _attach_sidecar(mols, args.sidecar)
    for mol in mols:
        mol.coords = project_zero_com(mol.coords)
    write_xyz(mols, args.out)
    print(f"ingested {len(mols)} molecules -> {args.out}")
    return 0


def cmd_make_toy(args) -> int:
    mols = make_toy_dataset(args.kind, args.n, args.seed)
    write_xyz(mols, args.out)
    print(f"wrote {len(mols)} toy molecules -> {args.out}")
    return 0


def cmd_train_ae(args) -> int:
    cfg = _load_config(args)
    mols = read_xyz(args.data)
    cfg.cond_dim = _attach_sidecar(mols, args.sidecar)
    ae, log = train_autoencoder(mols, cfg)
    _save_model(args.out, "ae", ae, cfg)
    _write_log(log, args.log)
    print(f"trained autoencoder ({len(log)} log records) -> {args.out}")
    return 0


def cmd_train_diff(args) -> int:
    cfg = _load_config(args)
    mols = read_xyz(args.data)
    cfg.cond_dim = _attach_sidecar(mols, args.sidecar)
    ae, ae_cfg = _load_ae(args.ae)
    _check_config_match(cfg, ae_cfg)
    net, log = train_diffusion(mols, ae, cfg)
    hist = node_count_histogram(mols)
    extra = {"node_hist_sizes": np.array(sorted(hist), dtype=np.float64),
             "node_hist_counts": np.array([hist[s] for s in sorted(hist)],
                                          dtype=np.float64)}
    _save_model(args.out, "diffusion", net, cfg, extra)
    _write_log(log, args.log)
    print(f"trained diffusion ({len(log)} log records) -> {args.out}")
    return 0


def cmd_sample(args) -> int:
    ae, ae_cfg = _load_ae(args.ae)
    net, cfg, hist = _load_diff(args.diff)
    _check_config_match(cfg, ae_cfg)
    cond = None
    if args.condition:
        cond = np.array([float(v) for v in args.condition.split(",")])
    sample_cfg = SampleConfig(
        n_molecules=args.n, fixed_n=args.fixed_n,
        histogram=hist or None, var_noise_source=cfg.var_noise_source,
        sigma_mode=cfg.sigma_mode, condition=cond, seed=args.seed)
    sched = make_schedule(cfg.schedule_kind, cfg.T)
    torch.set_num_threads(1)
    mols, stats = sample_molecules(ae, net, sched, cfg, sample_cfg,
                                   DEFAULT_VOCAB)
    write_xyz(mols, args.out)
    print(f"sampled {len(mols)} molecules "
          f"({stats.n_rejected} rejected) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    generated = read_xyz(args.generated)
    train_hashes = set()
    if args.reference:
        train_hashes = hash_molecules(read_xyz(args.reference))
    report = set_metrics(generated, train_hashes,
                         require_connected=not args.allow_fragments)
    print(report.as_text())
    if args.records:
        Path(args.records).write_text(
            "".join(rec + "\n" for rec in report.as_records()))
    return 0


def cmd_selftest(args) -> int:
    failures = selftest_mod.run_selftest(verbose=True)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmdm",
        description="Latent molecular diffusion: train, sample, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_opts(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a single config key")
        p.add_argument("--log", default=None, help="write JSONL training log")
        p.add_argument("--sidecar", default=None,
                       help="per-molecule property file for conditioning")

    p = sub.add_parser("ingest", help="validate and COM-normalize a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("make-toy", help="generate a deterministic toy dataset")
    p.add_argument("--kind", choices=["chains", "rings", "mixed", "clusters"],
                   default="chains")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("train-ae", help="stage 1: train the autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_config_opts(p)
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-diff", help="stage 2: train latent diffusion")
    p.add_argument("--data", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--out", required=True)
    add_config_opts(p)
    p.set_defaults(func=cmd_train_diff)

    p = sub.add_parser("sample", help="draw molecules and write XYZ")
    p.add_argument("--ae", required=True)
    p.add_argument("--diff", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--fixed-n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition", default=None,
                   help="comma-separated property values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="score a generated set")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", default=None)
    p.add_argument("--records", default=None,
                   help="also write line-delimited metric records")
    p.add_argument("--allow-fragments", action="store_true",
                   help="drop the connectivity requirement for validity")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest",
                       help="run the property suite; nonzero exit on failure")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, CheckpointError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
