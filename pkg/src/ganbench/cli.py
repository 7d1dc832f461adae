"""Command line entry point: ``ganbench run | metrics | inspect``.

Exit codes: 0 success, 1 configuration or usage error, 2 partial failure
(at least one report row failed, or an input file could not be read).
"""
import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import datasets as D
from . import metrics as M
from . import zoo
from .config import ConfigError, load_config
from .runner import run_experiment, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _read_samples(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(D.TENSOR_MAGIC))
    if magic == D.TENSOR_MAGIC:
        return D.load_tensor_dataset(path).data
    return D.load_tabular(path).continuous().data


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg.workers = args.workers
    out = args.out or cfg.out
    result = run_experiment(cfg)
    write_outputs(result, out)
    for row in result.report.rows:
        if row.status == "ok":
            print(f"{row.dataset:>12} {row.variant:<8} mmd={row.mmd:.6g} emd={row.emd:.6g}")
        else:
            print(f"{row.dataset:>12} {row.variant:<8} FAILED {row.error}", file=sys.stderr)
    print(f"wrote {os.path.join(out, 'report.csv')}")
    return result.exit_code


def cmd_metrics(args) -> int:
    try:
        real = _read_samples(args.real)
        fake = _read_samples(args.fake)
    except (OSError, D.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    if args.kernel != "gaussian":
        raise ConfigError(f"unsupported kernel {args.kernel!r}; only 'gaussian' is available")
    bandwidth = None if args.bandwidth in (None, "median") else float(args.bandwidth)
    n = min(real.shape[0], fake.shape[0])
    out = {
        "rows_real": int(real.shape[0]),
        "rows_fake": int(fake.shape[0]),
        "mmd": M.mmd_squared(real, fake, bandwidth),
        "emd": M.emd(real[:n], fake[:n]),
    }
    kls, jsds = [], []
    for j in range(real.shape[1]):
        hp, hq = M.histograms(real[:, j], fake[:, j], args.bins)
        jsds.append(M.jsd(hp, hq))
        try:
            kls.append(M.kl_divergence(hp, hq))
        except ValueError:
            kls.append(float("inf"))
    kl = float(np.mean(kls))
    out["kl"] = kl if np.isfinite(kl) else None  # undefined when the fake histogram misses a real bin
    out["jsd"] = float(np.mean(jsds))
    if args.critic:
        out["critic_emd"] = M.critic_emd(real, fake, steps=args.critic_steps, seed=args.seed)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        header = zoo.read_checkpoint_header(args.checkpoint)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n = sum(int(np.prod(p["shape"])) for p in header["params"])
    header = dict(header, n_parameters=n)
    print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ganbench", description="Train and score GAN variants on numeric data.")
    p.add_argument("--version", action="version", version=f"ganbench {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="train and score a (dataset x variant) grid from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="score two sample files without training")
    m.add_argument("--real", required=True)
    m.add_argument("--fake", required=True)
    m.add_argument("--kernel", default="gaussian")
    m.add_argument("--bandwidth", default="median")
    m.add_argument("--bins", type=int, default=50)
    m.add_argument("--critic", action="store_true", help="also report the critic-based estimate")
    m.add_argument("--critic-steps", type=int, default=500)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_metrics)

    i = sub.add_parser("inspect", help="print a checkpoint header")
    i.add_argument("--checkpoint", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
