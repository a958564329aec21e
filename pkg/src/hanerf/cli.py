"""
Command-line entry point.

Exit codes: 0 success, 1 internal failure, 2 I/O failure, 3 missing
artifact (checkpoint, dataset, image), 4 invalid input.
"""

import argparse
import hashlib
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, datagen, imageio
from .appearance import interpolate_appearance
from .cameras import CameraPose
from .errors import CheckpointError, ConfigError, HanerfError, InputError
from .checkpoint import load_checkpoint
from .evaluation import Model, evaluate
from .trainer import MODES, TrainConfig, train

log = logging.getLogger("hanerf")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_IO = 2
EXIT_MISSING = 3
EXIT_BAD_INPUT = 4


class MissingArtifact(HanerfError):
    pass


def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _hash_inputs(paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[str(p)] = _hash_file(p)
        elif p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    out[str(child)] = _hash_file(child)
    return out


def write_run_record(out_dir, command, config, inputs=()):
    """Write ``run.json``: the resolved config plus content hashes of every input."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hashes = _hash_inputs(inputs)
    body = {"command": command, "config": config, "inputs": hashes, "version": __version__}
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()
    body["content_hash"] = digest
    path = out_dir / "run.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def _require(path, what):
    if path is None:
        raise InputError(f"{what} not given")
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} not found: {p}")
    return p


def _load_model(path):
    return Model.load(_require(path, "checkpoint"))


def _load_image(path):
    return imageio.read_rgb(_require(path, "image"))


def parse_pose(text, manifest=None):
    """A pose is either 16 row-major camera-to-world reals or an integer frame id."""
    text = str(text).strip()
    if re.fullmatch(r"\d+", text):
        if manifest is None:
            raise InputError(f"pose {text!r} is a frame id but no --dataset was given")
        frame_id = int(text)
        for frame in manifest.frames:
            if frame.id == frame_id:
                return frame.pose
        raise InputError(f"no frame with id {frame_id} in the dataset")
    parts = [p for p in re.split(r"[,\s]+", text) if p]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise InputError(f"malformed pose {text!r}") from exc
    if len(values) != 16 or not np.all(np.isfinite(values)):
        raise InputError(f"pose needs 16 finite reals, got {len(values)} values")
    return CameraPose.from_matrix(values)


def _manifest(path):
    if path is None:
        return None
    p = _require(path, "dataset")
    if p.is_dir():
        p = p / "manifest.json"
    return datagen.load_manifest(_require(p, "manifest"))


def _intrinsics(manifest, size):
    if manifest is not None:
        return manifest.intrinsics
    if size is None:
        raise InputError("either --dataset or --size is needed to know the image size")
    return datagen.default_intrinsics(size, size)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    spec = datagen.PerturbationSpec(
        color=not args.no_color, occlusion=not args.no_occlusion, coverage=args.coverage
    )
    seed = args.scene_seed if args.seed is None else args.seed
    scene = datagen.random_scene(args.scene_seed)
    out = Path(args.out)
    manifest = datagen.generate_dataset(scene, args.n_train, args.n_test, args.size, args.size, spec, seed, out)
    config = {
        "scene_seed": args.scene_seed,
        "seed": seed,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "size": args.size,
        "perturbation": spec.to_dict(),
    }
    write_run_record(out, "synth", config)
    print(Path(manifest.root) / "manifest.json")
    return EXIT_OK


_TRAIN_FLAGS = (
    "mode",
    "iterations",
    "seed",
    "lr",
    "lr_final",
    "batch_rays",
    "n_samples",
    "grid_size",
    "lambda_v",
    "lambda_o",
    "visibility_warmup",
    "dtype",
    "max_grad_norm",
    "log_every",
    "checkpoint_every",
)


def resolve_train_config(args):
    """Merge the JSON config file (if any) with command-line overrides."""
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(_require(args.config, "config file").read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    dataset = args.dataset or file_cfg.pop("dataset", None)
    out = args.out or file_cfg.pop("out", None)
    file_cfg.pop("dataset", None)
    file_cfg.pop("out", None)
    config = TrainConfig.from_dict(file_cfg)
    config = config.with_overrides(**{k: getattr(args, k) for k in _TRAIN_FLAGS})
    if dataset is None or out is None:
        raise InputError("train needs a dataset and an output directory (flags or config file)")
    return config, dataset, out


def cmd_train(args):
    config, dataset, out = resolve_train_config(args)
    manifest = _manifest(dataset)
    out = Path(out)
    resume = load_checkpoint(_require(args.resume, "checkpoint")) if args.resume else None
    inputs = [Path(manifest.root)] + ([args.resume] if args.resume else [])
    record = dict(config.to_dict(), dataset=str(dataset), out=str(out))
    write_run_record(out, "train", record, inputs)
    train(manifest, config, out_dir=out, resume=resume)
    print(out / "checkpoint.ckpt")
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.ckpt)
    manifest = _manifest(args.dataset)
    out = Path(args.out)
    write_run_record(
        out,
        "eval",
        {"ckpt": str(args.ckpt), "dataset": str(args.dataset), "n_samples": args.n_samples},
        [args.ckpt, manifest.root],
    )
    report = evaluate(model, manifest, out, n_samples=args.n_samples)
    if args.visibility_maps and model.config.uses_visibility:
        intr = manifest.intrinsics
        for idx, frame in enumerate(manifest.split("train")):
            vis = model.visibility_map(idx, intr.height, intr.width)
            imageio.write_gray(out / f"visibility_{frame.id:03d}.png", vis)
    agg = report.aggregates()
    print(json.dumps(agg, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_render(args):
    model = _load_model(args.ckpt)
    manifest = _manifest(args.dataset)
    pose = parse_pose(args.pose, manifest)
    image = _load_image(args.appearance_image) if args.appearance_image else None
    intr = _intrinsics(manifest, args.size)
    out = Path(args.out)
    inputs = [args.ckpt] + ([args.appearance_image] if args.appearance_image else [])
    write_run_record(
        out.parent,
        "render",
        {"ckpt": str(args.ckpt), "pose": pose.to_list(), "appearance_image": args.appearance_image},
        inputs,
    )
    img = model.render(intr, pose, model.appearance(image), args.n_samples)
    imageio.write_rgb(out, img)
    print(out)
    return EXIT_OK


def cmd_transfer(args):
    model = _load_model(args.ckpt)
    manifest = _manifest(args.dataset)
    example = _load_image(args.example)
    poses = [parse_pose(p, manifest) for p in args.poses]
    intr = _intrinsics(manifest, args.size)
    out = Path(args.out)
    write_run_record(
        out,
        "transfer",
        {"ckpt": str(args.ckpt), "example": str(args.example), "poses": [p.to_list() for p in poses]},
        [args.ckpt, args.example],
    )
    app = model.appearance(example)
    for i, pose in enumerate(poses):
        path = imageio.write_rgb(out / f"transfer_{i:03d}.png", model.render(intr, pose, app, args.n_samples))
        print(path)
    return EXIT_OK


def cmd_interpolate(args):
    if args.steps < 2:
        raise InputError("--steps must be at least 2")
    model = _load_model(args.ckpt)
    manifest = _manifest(args.dataset)
    pose = parse_pose(args.pose, manifest)
    a = model.appearance(_load_image(args.a))
    b = model.appearance(_load_image(args.b))
    intr = _intrinsics(manifest, args.size)
    out = Path(args.out)
    write_run_record(
        out,
        "interpolate",
        {"ckpt": str(args.ckpt), "a": str(args.a), "b": str(args.b), "steps": args.steps, "pose": pose.to_list()},
        [args.ckpt, args.a, args.b],
    )
    for i, t in enumerate(np.linspace(0.0, 1.0, args.steps)):
        app = interpolate_appearance(a, b, float(t))
        path = imageio.write_rgb(out / f"interp_{i:03d}.png", model.render(intr, pose, app, args.n_samples))
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as an I/O failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="hanerf", description="Appearance-hallucinating radiance fields at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a perturbed synthetic dataset")
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=None, help="camera/perturbation seed (defaults to the scene seed)")
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--coverage", type=float, default=None, help="fixed occluder coverage fraction")
    p.add_argument("--no-color", action="store_true", help="skip the per-image color perturbation")
    p.add_argument("--no-occlusion", action="store_true", help="skip the occluders")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dataset", help="dataset directory or manifest.json")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-final", type=float)
    p.add_argument("--batch-rays", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--lambda-v", type=float)
    p.add_argument("--lambda-o", type=float)
    p.add_argument("--visibility-warmup", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--max-grad-norm", type=float)
    p.add_argument("--log-every", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="render and score the test views")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--visibility-maps", action="store_true", help="also export per-training-image visibility PNGs")
    p.set_defaults(func=cmd_eval)

    def view_args(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--dataset", help="needed for frame-id poses and image size")
        p.add_argument("--size", type=int, help="square image size when no dataset is given")
        p.add_argument("--n-samples", type=int)

    p = sub.add_parser("render", help="render one view")
    view_args(p)
    p.add_argument("--pose", required=True, help="16 comma-separated reals or a frame id")
    p.add_argument("--appearance-image", help="image whose appearance to use")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("transfer", help="render several views in the appearance of an example image")
    view_args(p)
    p.add_argument("--example", required=True)
    p.add_argument("--poses", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("interpolate", help="render a strip between two appearances")
    view_args(p)
    p.add_argument("--a", required=True, help="first appearance image")
    p.add_argument("--b", required=True, help="second appearance image")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--pose", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MissingArtifact, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (InputError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
