"""What the similarity gate admits, and how good the admitted keypoints are.

Adapts one random-block video for a single epoch, then replays the end-of-epoch
bank update at several thresholds on that fixed state. Each row gives the
number of filled keypoints and their PCK against the ground-truth 2D.

    python demos/03_fill_gate.py
"""
import numpy as np

from stta import adapt as ad
from stta import experiments as ex
from stta import neuralnet as nn
from stta.eval import pck

world = ex.build_world(seed=0)
bench = world.benchmark
video = next(v for v in bench.videos if v.meta["pattern"] == "random_block")

init = nn.predict_arrays(bench.checkpoint, video.obs)
segs = ad.segment_video(video.labels, video_id=video.video_id)
print("similarity before adaptation:", np.round(ad.segment_similarities(init.theta6d, segs, bench.space), 3).tolist())

res = ad.adapt_video(bench.checkpoint, video, bench.space, ad.AdaptConfig(epochs=1), seed=0)
print("similarity after one epoch:  ", np.round(res.similarities, 3).tolist())

bank = ad.PoseBank.from_detections(video.det_j2d, video.visibility)
print("\nsigma   filled   PCK of filled")
for sigma in (0.0, 0.55, 0.65, 0.75, 0.85, 0.95):
    out = ad.update_pose_bank(bank, res.prediction.j2d, res.segments, res.similarities,
                              ad.AdaptConfig(sigma=sigma))
    hit = pck(out.j2d, video.gt_j2d, out.filled) if out.filled.any() else float("nan")
    print(f"{sigma:5.2f} {out.filled_count:8d} {hit:10.3f}")
