"""Pretrain on the source world and measure how badly it transfers.

The source domain has damped motions from three classes and one observation
nuisance; the target has all six classes, full amplitude, a shifted nuisance
and occluded detections. The regressor never sees target data here.

    python demos/01_domain_gap.py
"""
import time

import numpy as np

from stta import experiments as ex
from stta import neuralnet as nn
from stta import synthworld as sw
from stta.eval import aggregate, evaluate_video

t0 = time.perf_counter()
world = ex.build_world(seed=0)
bench = world.benchmark
print(f"world built in {time.perf_counter() - t0:.0f}s "
      f"({len(world.source)} source videos, {len(bench.videos)} target videos)")

loss = [c[1] for c in world.pretrain_curve]
print(f"pretraining loss {loss[0]:.4f} -> {loss[-1]:.4f} over {len(loss) - 1} epochs")


def score(videos):
    return aggregate([evaluate_video(v, nn.predict_arrays(bench.checkpoint, v.obs).j3d) for v in videos])


src, tgt = score(world.held_out), score(bench.videos)
print(f"held-out source MPJPE {src['mpjpe']:6.1f} mm   PA-MPJPE {src['pa_mpjpe']:6.1f} mm")
print(f"target benchmark MPJPE {tgt['mpjpe']:6.1f} mm   PA-MPJPE {tgt['pa_mpjpe']:6.1f} mm")
print(f"gap: target error is {tgt['mpjpe'] / src['mpjpe']:.2f}x the source error")

# where the error comes from: per occlusion pattern
for pattern in ("none", "random_block", "lower_body_truncation"):
    vids = [v for v in bench.videos if v.meta["pattern"] == pattern]
    print(f"  {pattern:22s} {score(vids)['mpjpe']:6.1f} mm")

# classes the source never showed
seen = {sw.CLASS_NAMES[i] for i in np.flatnonzero(sw.SOURCE_DOMAIN.class_mixture)}
print("classes absent from the source:", ", ".join(c for c in sw.CLASS_NAMES if c not in seen))
