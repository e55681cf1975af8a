"""Command-line runner.

    psfedgan run CONFIG [--out DIR] [--threads N] [--dry-run]
    psfedgan replay LOG

Exit codes: 0 success, 2 unreadable or invalid configuration, 3 protocol
failure during a run, 4 replay mismatch (desync, corrupt or tampered log).
``PSFG_SEED`` in the environment overrides ``master_seed``.
"""

import argparse
import csv
import os
import sys

from .attacker import write_attack_csv
from .channel import bundled_cost_reports, cost_compare, write_cost_csv
from .classifier import classifier_layers
from .config import load
from .errors import ConfigurationError, DataError, ProtocolError, PSFedGANError
from .metrics import MetricsRecord
from .nnkernel import count_params
from .protocol import Federation, replay
from .wire import encoded_size

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_REPLAY = 4


def _fail(code, message):
    print(f"psfedgan: {message}", file=sys.stderr)
    return code


def _load_config(path):
    cfg = load(path)
    seed = os.environ.get("PSFG_SEED")
    if seed is not None and seed.strip():
        try:
            cfg = cfg.with_seed(int(seed, 0))
        except ValueError:
            raise ConfigurationError(f"PSFG_SEED={seed!r} is not an integer") from None
    return cfg


def write_metrics_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MetricsRecord.header())
        for rec in records:
            w.writerow(rec.row())


def _describe(fed):
    cgan, cfg = fed.cgan, fed.cfg
    n_g, n_d = count_params(cgan.gen_layers), count_params(cgan.disc_layers)
    n_c = count_params(classifier_layers(cgan.data_dim, cgan.num_classes, cfg.round.classifier_hidden))
    msg = encoded_size(len(cgan.disc_layers), n_d, cgan.batch_size, cgan.z_dim)
    lines = [
        f"master_seed          {cfg.master_seed}",
        f"users                {cfg.num_users}",
        f"rounds               {cfg.rounds}",
        f"generator params     {n_g}",
        f"discriminator params {n_d}",
        f"classifier params    {n_c}",
        f"message bytes        {msg}",
        f"steps per round      {[fed.steps_for(c) for c in fed.clients]}",
    ]
    return "\n".join(lines)


def cmd_run(args):
    try:
        cfg = _load_config(args.config)
    except FileNotFoundError:
        return _fail(EXIT_CONFIG, f"config file not found: {args.config}")
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot read {args.config}: {exc.strerror}")
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, f"{args.config}: {exc}")
    try:
        fed = Federation(cfg)
    except (ConfigurationError, DataError, OSError) as exc:
        return _fail(EXIT_CONFIG, f"{args.config}: {exc}")

    if args.dry_run:
        print(_describe(fed))
        return EXIT_OK

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.resolved.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    try:
        result = fed.run(replay_path=os.path.join(args.out, "replay.log"), threads=args.threads)
    except ProtocolError as exc:
        return _fail(EXIT_PROTOCOL, f"protocol failure: {exc}")
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), result.records)
    write_attack_csv(os.path.join(args.out, "attacks.csv"), result.attack_reports)
    own = cost_compare(fed.cgan.gen_layers, fed.cgan.disc_layers, fed.cgan.batch_size, fed.cgan.z_dim, "this_run")
    write_cost_csv(os.path.join(args.out, "cost.csv"), [own, *bundled_cost_reports()])
    last = result.records[-1] if result.records else None
    if last is not None:
        print(f"round {last.round}: classifier accuracy {last.cl_accuracy:.4f}")
    return EXIT_OK


def cmd_replay(args):
    if not os.path.exists(args.log):
        return _fail(EXIT_CONFIG, f"replay log not found: {args.log}")
    try:
        server = replay(args.log)
    except PSFedGANError as exc:
        return _fail(EXIT_REPLAY, f"replay failed: {exc}")
    for uid, digest in server.generator_digests().items():
        print(f"user {uid}: {server.users[uid].next_step} steps, generator {digest}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="psfedgan", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a federation from a config file")
    run.add_argument("config")
    run.add_argument("--out", default="out", help="output directory (default: ./out)")
    run.add_argument("--threads", type=int, default=1, help="users simulated in parallel")
    run.add_argument("--dry-run", action="store_true", help="validate and print sizes, write nothing")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("replay", help="rebuild the server generators from a replay log")
    rep.add_argument("log")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        return _fail(EXIT_CONFIG, "--threads must be at least 1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
