"""Command-line entry points: train, generate, eval, edit, serve.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from . import editing, metrics, training
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import CloudFormatError, LabeledCloud, load_clouds, synth_toyshapes, write_xyz
from .losses import LossWeights, default_omega_o
from .networks import DecodedShape
from .training import TrainConfig

TOY_CATEGORIES = ("toychair", "toytable", "toyplane")


def _decoded_to_cloud(decoded: DecodedShape, colored: bool) -> LabeledCloud:
    return LabeledCloud(
        cloud=decoded.points.detach().to(torch.float32),
        labels=decoded.part_index if colored else None,
    )


def _cmd_train(args) -> int:
    if args.toy:
        dataset = synth_toyshapes(args.toy, args.count, args.points or 256, args.seed)
        category = args.toy
    else:
        dataset = load_clouds(args.data, args.points or 2048)
        category = "custom"
    n_points = dataset[0].n_points
    omega = args.omega_o if args.omega_o is not None else default_omega_o(category, args.parts)
    dz = args.dz if args.dz is not None else (
        args.parts * 48 if args.no_global_map else 256
    )
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        n_parts=args.parts,
        global_dim=dz,
        weights=LossWeights(beta=args.beta, omega_o=omega),
        use_global_map=not args.no_global_map,
        seed=args.seed,
        points_per_cloud=n_points,
    )
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        def on_epoch(epoch, mean_total):
            print(f"epoch {epoch}: mean total loss {mean_total:.6f}")

        model, log = training.train(dataset, cfg, callbacks={"on_epoch": on_epoch})
        if log_fh:
            for record in log:
                log_fh.write(json.dumps(record) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    opt = training.build_optimizer(model, cfg)
    save_checkpoint(model, opt, cfg, args.out, log_tail=log[-50:], category=category)
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    shapes = editing.generate(ckpt.model, args.seed, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, decoded in enumerate(shapes):
        write_xyz(out / f"gen_{i:04d}.xyz", _decoded_to_cloud(decoded, args.colored))
    print(f"wrote {len(shapes)} clouds to {out}")
    return 0


def _metric_keys(raw: str) -> list[str]:
    mapping = {
        "jsd": "jsd",
        "mmd-cd": "mmd_cd",
        "mmd-emd": "mmd_emd",
        "cov-cd": "cov_cd",
        "cov-emd": "cov_emd",
    }
    keys = []
    for name in raw.split(","):
        name = name.strip()
        if name not in mapping:
            raise ValueError(f"unknown metric {name!r}; choose from {sorted(mapping)}")
        keys.append(mapping[name])
    return keys


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    # references resampled to the generated cloud size so the comparison is
    # density-consistent
    n_gen_points = ckpt.model.cfg.n_parts * ckpt.model.cfg.points_per_part
    ref = load_clouds(args.ref, n_gen_points)
    gen = [d.points for d in editing.generate(ckpt.model, args.seed, args.n)]
    which = _metric_keys(args.metrics)
    report = metrics.full_report(gen, [c.cloud for c in ref], which)
    for key, value in report.as_flat_dict().items():
        print(f"{key} {value:.6f}")
    if args.mcd:
        labeled = [c for c in ref if c.labels is not None]
        if not labeled:
            raise ValueError("--mcd requires reference clouds with labels")
        scores = []
        for cloud in labeled:
            pred, _ = editing.segment_cloud(ckpt.model, cloud.cloud)
            parts = [cloud.cloud[pred == m] for m in pred.unique()]
            gt = [cloud.cloud[cloud.labels == v] for v in cloud.labels.unique()]
            scores.append(metrics.mcd(parts, gt))
        print(f"mcd {sum(scores) / len(scores):.6f}")
    return 0


def _encode_file(model, path, n_points):
    cloud = load_clouds(path, n_points)[0]
    return editing.encode_shape(model, cloud.cloud, deterministic=True)


def _parse_parts(raw: str) -> list[int]:
    return [int(v) for v in raw.split(",") if v.strip() != ""]


def _cmd_edit(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.model
    n_points = ckpt.cfg.points_per_cloud
    if args.edit_command == "mix":
        target = _encode_file(model, args.target, n_points)
        reference = _encode_file(model, args.reference, n_points)
        decoded = editing.mix_parts(
            model, target, reference, _parse_parts(args.parts), args.transfer_primitive
        )
        write_xyz(args.out, _decoded_to_cloud(decoded, colored=True))
    elif args.edit_command == "resample":
        target = _encode_file(model, args.target, n_points)
        decoded = editing.resample_parts(model, target, _parse_parts(args.parts), args.seed)
        write_xyz(args.out, _decoded_to_cloud(decoded, colored=True))
    else:  # interp
        za = _encode_file(model, args.a, n_points).z
        zb = _encode_file(model, args.b, n_points).z
        weights = [float(w) for w in args.weights.split(",")]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, decoded in enumerate(editing.interpolate(model, za, zb, weights)):
            write_xyz(out / f"interp_{i:02d}.xyz", _decoded_to_cloud(decoded, colored=True))
    print("edit complete")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import app_from_checkpoint

    app = app_from_checkpoint(args.ckpt)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on files or toy data")
    source = p_train.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="directory of cloud files")
    source.add_argument("--toy", choices=TOY_CATEGORIES, help="synthetic toy category")
    p_train.add_argument("--parts", type=int, default=3)
    p_train.add_argument("--epochs", type=int, default=30)
    p_train.add_argument("--batch-size", type=int, default=30)
    p_train.add_argument("--count", type=int, default=200, help="toy dataset size")
    p_train.add_argument("--points", type=int, default=None, help="points per cloud")
    p_train.add_argument("--dz", type=int, default=None, help="global latent dim")
    p_train.add_argument("--lr", type=float, default=1e-4)
    p_train.add_argument("--beta", type=float, default=1e-3)
    p_train.add_argument("--omega-o", type=float, default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--no-global-map", action="store_true")
    p_train.add_argument("--log", help="write per-step JSONL records here")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.set_defaults(func=_cmd_train)

    p_gen = sub.add_parser("generate", help="decode prior samples to cloud files")
    p_gen.add_argument("--ckpt", required=True)
    p_gen.add_argument("--n", type=int, default=16)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--colored", action="store_true", help="write part labels")
    p_gen.set_defaults(func=_cmd_generate)

    p_eval = sub.add_parser("eval", help="generative metrics against reference clouds")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--ref", required=True, help="reference cloud directory")
    p_eval.add_argument("--metrics", default="jsd,mmd-cd,cov-cd")
    p_eval.add_argument("--n", type=int, default=64, help="generated sample count")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--mcd", action="store_true", help="score parts against labels")
    p_eval.set_defaults(func=_cmd_eval)

    p_edit = sub.add_parser("edit", help="part-level edits between cloud files")
    edit_sub = p_edit.add_subparsers(dest="edit_command", required=True)
    p_mix = edit_sub.add_parser("mix")
    p_mix.add_argument("--ckpt", required=True)
    p_mix.add_argument("--target", required=True)
    p_mix.add_argument("--reference", required=True)
    p_mix.add_argument("--parts", required=True, help="comma-separated part indices")
    p_mix.add_argument("--transfer-primitive", action="store_true")
    p_mix.add_argument("--out", required=True)
    p_mix.set_defaults(func=_cmd_edit)
    p_res = edit_sub.add_parser("resample")
    p_res.add_argument("--ckpt", required=True)
    p_res.add_argument("--target", required=True)
    p_res.add_argument("--parts", required=True)
    p_res.add_argument("--seed", type=int, default=0)
    p_res.add_argument("--out", required=True)
    p_res.set_defaults(func=_cmd_edit)
    p_int = edit_sub.add_parser("interp")
    p_int.add_argument("--ckpt", required=True)
    p_int.add_argument("--a", required=True)
    p_int.add_argument("--b", required=True)
    p_int.add_argument("--weights", default="0.2,0.5,0.8")
    p_int.add_argument("--out", required=True)
    p_int.set_defaults(func=_cmd_edit)

    p_serve = sub.add_parser("serve", help="run the HTTP JSON API")
    p_serve.add_argument("--ckpt", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CheckpointError, CloudFormatError, FileNotFoundError, ValueError,
            IndexError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
