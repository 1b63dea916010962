"""Adapt the pretrained regressor on one lower-body-truncated target video.

Prints the per-epoch log (losses, mean motion-text similarity, filled
keypoints) and compares the four ablation variants on this single video.

    python demos/02_adapt_one_video.py
"""
import numpy as np

from stta import adapt as ad
from stta import experiments as ex
from stta import neuralnet as nn
from stta.eval import evaluate_video

world = ex.build_world(seed=0)
bench = world.benchmark
video = next(v for v in bench.videos if v.meta["pattern"] == "lower_body_truncation")
pre = evaluate_video(video, nn.predict_arrays(bench.checkpoint, video.obs).j3d)
print(f"video {video.video_id}: {len(video)} frames, {int((~video.visibility).sum())} missing keypoints")
print(f"before adaptation: MPJPE {pre.mpjpe:.1f} mm, occluded joints {pre.occluded_mpjpe:.1f} mm")

res = ad.adapt_video(bench.checkpoint, video, bench.space, ad.AdaptConfig(), seed=0)
print("epoch   loss     L2d     align   smooth   sim    filled")
for r in res.log:
    print(f"{r['epoch']:5d} {r['mean_loss']:8.4f} {r['mean_l2d']:7.4f} {r['mean_align']:7.4f} "
          f"{r['mean_smooth']:7.4f} {r['mean_similarity']:6.3f} {r['filled_count']:7d}")

print("\nvariant      MPJPE   occluded   visible")
for name in ex.ABLATION_ORDER:
    out = ad.adapt_video(bench.checkpoint, video, bench.space, ad.ablation_config(name), seed=0)
    m = evaluate_video(video, out.prediction.j3d, out.bank)
    vis = m.visible_sum / m.visible_count
    print(f"{name:10s} {m.mpjpe:7.1f} {m.occluded_mpjpe:9.1f} {vis:9.1f}")

sims = np.round(res.similarities, 3)
print("\nfinal segment similarities:", sims.tolist())
