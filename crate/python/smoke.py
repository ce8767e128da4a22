"""Smoke test for the `xsal` extension module.

Build and run:

    cargo build --release -p xsal-py
    cp target/release/libxsal.so python/xsal.so
    python3 python/smoke.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

import xsal  # noqa: E402


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok  {what}")


def main():
    bank = xsal.FilterBank(32, 32)
    check(len(bank) == 80, "default bank has 80 filters")
    check(bank.transfer(0)[0][0] == 0.0, "transfer grid is zero at DC")
    flat = [[0.5] * 32 for _ in range(32)]
    check(max(max(abs(v) for v in row) for row in bank.respond(flat)[7]) < 1e-12, "flat image gives no response")

    rng = np.random.default_rng(3)
    act = rng.random((24, 32))
    pool = [rng.random((24, 32)) * g for g in (0.2, 1.0, 3.0)] + [act]
    matches = xsal.match_topk(act.tolist(), [p.tolist() for p in pool], k=2)
    check(matches[0][0] == 3 and matches[0][2] > 0.999, "exact pool entry dominates the match")
    check(abs(sum(w for _, _, w in matches) - 1.0) < 1e-12, "match weights sum to 1")

    fused = np.asarray(xsal.fuse_scales([(1.0, [[3.0] * 4] * 4), (2.0, [[4.0] * 8] * 8)], (4, 4)))
    check(np.all(fused == 5.0), "3-4-5 fusion")

    cfg = xsal.PipelineConfig(k_filters=3, k_keep=2, scales=[0.5, 1.0])
    kept = xsal.reconstruct_layer([act.tolist(), (act * 0.5).tolist()], [p.tolist() for p in pool], cfg)
    check(len(kept) == 2 and kept[0]["recon_mae"] <= kept[1]["recon_mae"], "reconstruct_layer keeps sorted maps")

    g = rng.random((16, 16))
    check(xsal.sim(g.tolist(), g.tolist()) == 1.0, "SIM(g, g) = 1")
    check(abs(xsal.cc(g.tolist(), (2 * g + 1).tolist()) - 1.0) < 1e-12, "CC of an affine copy is 1")
    check(xsal.auc_judd([[0.3] * 16] * 16, [(1, 2), (5, 5)]) == 0.5, "constant map AUC-Judd = 0.5")
    check(xsal.cmr_loss(g.tolist(), g.tolist()) == 0.0, "loss(p, p) = 0")
    try:
        xsal.cc([[1.0] * 4] * 4, g[:4, :4].tolist())
        check(False, "constant map CC raises")
    except ValueError:
        check(True, "constant map CC raises ValueError")

    with tempfile.TemporaryDirectory() as tmp:
        yy, xx = np.mgrid[0:48, 0:64]
        img = (120 + 80 * np.sin(xx / 5.0) * np.cos(yy / 7.0)).astype(np.uint8)
        path = os.path.join(tmp, "img.png")
        Image.fromarray(img).save(path)

        manifest = xsal.synth(path, os.path.join(tmp, "syn"), seed=7)
        layers = json.load(open(manifest))["layers"]
        check(len(layers) >= 5, f"synth dumped {len(layers)} layers")
        shape, data = xsal.load_npy(os.path.join(tmp, "syn", layers[0]["file"]))
        check(list(shape) == layers[0]["shape"] and len(data) == math.prod(shape), "layer file matches manifest")

        sal, trace = xsal.explain(manifest, config=xsal.PipelineConfig(k_filters=4, k_keep=3))
        sal = np.asarray(sal)
        check(sal.shape == (48, 64), "saliency has image dims")
        check(np.isfinite(sal).all() and sal.min() == 0.0 and sal.max() == 1.0, "saliency normalized to [0, 1]")
        check(len(json.loads(trace)["layers"]) == len(layers), "trace covers every layer")

        out = os.path.join(tmp, "sal.npy")
        xsal.save_npy(out, list(sal.shape), sal.ravel().tolist())
        check(np.array_equal(np.load(out), sal), "save_npy round-trips through numpy")

    print("smoke: all checks passed")


if __name__ == "__main__":
    main()
