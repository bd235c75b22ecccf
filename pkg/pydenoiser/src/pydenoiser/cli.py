"""Command line: extract patches, train, and serve a checkpoint."""

from __future__ import annotations

import argparse
import sys
import time

from .data import extract_patches
from .train import Checkpoint, TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pydenoiser", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a directory of .gvox label volumes")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--scheme", choices=["isotropic", "random"], default="random")
    p_train.add_argument("--patches-per-volume", type=int, default=40)
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--batch-size", type=int, default=16)
    p_train.add_argument("--lr", type=float, default=2e-3)
    p_train.add_argument("--steps", type=int, default=250)
    p_train.add_argument("--beta-start", type=float, default=1e-4)
    p_train.add_argument("--beta-end", type=float, default=0.02)
    p_train.add_argument("--base-channels", type=int, default=8)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="checkpoint directory")

    p_serve = sub.add_parser("serve", help="serve a checkpoint over GPN1")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=0)
    p_serve.add_argument("--transport", choices=["tcp", "stdio"], default="tcp")

    args = parser.parse_args(argv)

    if args.command == "train":
        dataset = extract_patches(
            args.data, scheme=args.scheme, n_random=args.patches_per_volume,
            seed=args.seed,
        )
        config = TrainConfig(
            steps=args.steps,
            beta_start=args.beta_start,
            beta_end=args.beta_end,
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            base_channels=args.base_channels,
            seed=args.seed,
        )
        print(f"training on {len(dataset)} patches (max_id={dataset.max_id})",
              file=sys.stderr)
        ckpt = train(dataset, config, log=lambda msg: print(msg, file=sys.stderr))
        out = ckpt.save(args.out)
        print(f"saved checkpoint to {out}", file=sys.stderr)
        return 0

    if args.command == "serve":
        ckpt = Checkpoint.load(args.checkpoint)
        if args.transport == "stdio":
            from .serve import serve_stdio

            serve_stdio(ckpt, sys.stdin.buffer, sys.stdout.buffer)
            return 0
        from .serve import PredictorServer

        server = PredictorServer(ckpt, args.host, args.port)
        print(f"serving on {server.address[0]}:{server.address[1]}", file=sys.stderr, flush=True)
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            server.close()
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
