"""
Time the numba and numpy paths of every hot kernel on identical inputs.

    python benchmarks/bench_kernels.py [--rays 4096] [--samples 64] [--repeat 5]

The end-to-end column reruns one training step in a subprocess with
HANERF_NUMBA set to 1 and to 0, so it measures the flag exactly as users
set it.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from hanerf import _kernels as K

STEP_SCRIPT = """
import time
import numpy as np
from hanerf import _kernels, cameras, datagen, field as fld, appearance as am, occlusion as occ, trainer
scene = datagen.random_scene(0)
intr = datagen.default_intrinsics(32, 32)
poses = datagen.orbit_poses(4, np.random.default_rng(0))
images = [datagen.render_ground_truth(scene, intr, p) for p in poses]
data = trainer.TrainingData.from_arrays(intr, poses, images)
cfg = trainer.TrainConfig(mode="ha-nerf", iterations=6, batch_rays=512, n_samples=32, log_every=0,
    visibility_warmup=0, field=fld.FieldConfig(depth=4, width=64, skip_layer=2, color_width=32),
    encoder=am.EncoderConfig(channels=(8, 16, 32, 32, 32)),
    visibility=occ.VisibilityConfig(depth=3, width=64, embed_dim=16))
trainer.train(data, cfg.with_overrides(iterations=1))
t = time.perf_counter()
trainer.train(data, cfg)
print(_kernels.backend(), (time.perf_counter() - t) / cfg.iterations)
"""


def _inputs(rays, samples, seed=0):
    rng = np.random.default_rng(seed)
    sigma = rng.uniform(0.0, 5.0, (rays, samples))
    rgb = rng.uniform(0.0, 1.0, (rays, samples, 3))
    delta = rng.uniform(0.01, 0.1, (rays, samples))
    delta[:, -1] = 1e10
    grad = rng.normal(size=(rays, 3))
    return sigma, rgb, delta, grad


def _best(fn, repeat):
    fn()  # warm up / compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(rays, samples, repeat):
    sigma, rgb, delta, grad = _inputs(rays, samples)
    _, w, _ = K._composite_forward_np(sigma, rgb, delta)
    idx = np.random.default_rng(1).integers(0, 100, size=rays * 8)
    vals = np.random.default_rng(2).normal(size=(rays * 8, 48))
    scene_rng = np.random.default_rng(3)
    dirs = scene_rng.normal(size=(rays * 4, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = -3.0 * dirs + scene_rng.normal(scale=0.2, size=dirs.shape)
    centers = scene_rng.uniform(-0.5, 0.5, (7, 3))
    radii = np.full(7, 0.4)
    albedo = scene_rng.uniform(size=(7, 3))
    bg = np.ones(3)
    cases = {
        "composite_forward": (
            lambda: K._composite_forward_nb(sigma, rgb, delta),
            lambda: K._composite_forward_np(sigma, rgb, delta),
        ),
        "composite_backward": (
            lambda: K._composite_backward_nb(sigma, rgb, delta, w, grad),
            lambda: K._composite_backward_np(sigma, rgb, delta, w, grad),
        ),
        "scatter_add_rows": (
            lambda: K._scatter_add_rows_nb(idx, vals, 100),
            lambda: K._scatter_add_rows_np(idx, vals, 100),
        ),
        "trace_spheres": (
            lambda: K._trace_spheres_nb(origins, dirs, centers, radii, albedo, bg),
            lambda: K._trace_spheres_np(origins, dirs, centers, radii, albedo, bg),
        ),
    }
    results = {}
    for name, (nb, npf) in cases.items():
        t_nb = _best(nb, repeat) if K.NUMBA_AVAILABLE else float("nan")
        t_np = _best(npf, repeat)
        results[name] = {"numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb}
    return results


def bench_step():
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, HANERF_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", STEP_SCRIPT], env=env, capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()[-2:]
        out[name] = float(secs)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--rays", type=int, default=4096)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-step", action="store_true", help="skip the end-to-end training step timing")
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    results = {"kernels": bench(args.rays, args.samples, args.repeat)}
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, r in results["kernels"].items():
        print(f"{name:<22}{r['numba_s'] * 1e3:>12.2f}{r['numpy_s'] * 1e3:>12.2f}{r['speedup']:>9.1f}x")
    if not args.skip_step:
        results["train_step_s"] = bench_step()
        for name, secs in results["train_step_s"].items():
            print(f"train step ({name}): {secs * 1e3:.0f} ms")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
