"""Acceptance criteria 1-10.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
quantities, then asserts. Criteria 4-9 share one world (seed 0) and one
memoized harness over ten adaptation seeds, so a configuration that appears
in several tables is adapted once. Runtime budgets are checked against the
wall time each criterion adds on top of runs it shares with earlier ones.
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import bank_oracle as bo
import fd_oracle as fo
from stta import adapt as ad
from stta import eval as ev
from stta import experiments as ex
from stta import geometry as geo
from test_geometry import quat_matrix, random_rotations

SEEDS = list(range(10))


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    assert ok, detail


@pytest.fixture(scope="module")
def world():
    start = time.perf_counter()
    w = ex.build_world(0)
    return w, time.perf_counter() - start


@pytest.fixture(scope="module")
def harness(world):
    return ex.Harness(world[0].benchmark)


def _medians(h, name):
    return ex._stat(h.runs(ad.ablation_config(name), SEEDS, name), "mpjpe")


# --------------------------------------------------------------------------- 1-3: oracles

def test_criterion_01_gradient_oracle(space, capsys):
    start = time.perf_counter()
    worst, bad = 0.0, 0
    for seed in range(20):
        params, inst = fo.make_instance(1000 + seed, space, t=3)
        g = fo.analytic_gradients(params, inst)
        num = fo.central_differences(fo.flatten(params), inst)
        for k in range(len(fo.PARTS)):
            bad += len(fo.mismatch(g[k], num[k]))
            scale = np.maximum(np.abs(num[k]), 1e-8)
            worst = max(worst, float(np.max(np.abs(g[k] - num[k]) / scale)))
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, bad == 0 and elapsed < 60,
            f"gradient oracle: 20 instances x 4 losses, {bad} mismatches, worst rel {worst:.1e}, {elapsed:.1f}s")


def test_criterion_02_bank_oracle(capsys):
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    bad = sum(not bo.check_case(rng) for _ in range(10**4))
    elapsed = time.perf_counter() - start
    verdict(capsys, 2, bad == 0 and elapsed < 10,
            f"bank update vs brute force: 10^4 cases, {bad} differ, {elapsed:.1f}s")


def test_criterion_03_geometry(capsys):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    m = random_rotations(rng, 1000)
    six_err = float(np.max(np.abs(geo.sixd_to_matrix(geo.matrix_to_6d(m)) - m)))
    r = rng.normal(size=(1000, 3)) * rng.uniform(0.0, 3.0, size=(1000, 1))
    rod_err = float(np.max(np.abs(geo.aa_to_matrix(r) - np.stack([quat_matrix(x) for x in r]))))
    pro_err = 0.0
    for _ in range(200):
        gt = rng.normal(size=(24, 3))
        rot = random_rotations(rng, 1)[0]
        s, t = rng.uniform(0.5, 2.0), rng.normal(size=3)
        pred = (gt - t) @ rot / s
        pro_err = max(pro_err, float(np.max(np.abs(geo.apply_similarity(pred, *geo.procrustes_align(pred, gt)) - gt))))
    a, b = rng.normal(0, 0.3, size=(2, 1000, 24, 3))
    pa_ok = bool(np.all(ev.pa_joint_errors(a, b).mean(1) <= ev.joint_errors(a, b).mean(1) + 1e-9))
    elapsed = time.perf_counter() - start
    ok = six_err < 1e-12 and rod_err < 1e-12 and pro_err < 1e-9 and pa_ok and elapsed < 30
    verdict(capsys, 3, ok, f"6D round trip {six_err:.1e}, Rodrigues vs quaternion {rod_err:.1e}, "
                           f"Procrustes residual {pro_err:.1e}, PA<=MPJPE on 10^3 pairs {pa_ok}, {elapsed:.1f}s")


# --------------------------------------------------------------------------- 4-9: world-level trends

def test_criterion_04_domain_gap(world, harness, capsys):
    w, build_time = world
    ckp = w.benchmark.checkpoint
    src = ev.aggregate([ev.evaluate_video(v, ex.nn.predict_arrays(ckp, v.obs).j3d) for v in w.held_out])["mpjpe"]
    tgt = ex.aggregate(harness.no_adapt())["mpjpe"]
    verdict(capsys, 4, tgt >= 2 * src and build_time < 300,
            f"source {src:.1f} mm, target {tgt:.1f} mm, ratio {tgt / src:.2f} (need >= 2), "
            f"world with pretraining {build_time:.0f}s")


def test_criterion_05_adaptation_effect(harness, capsys):
    start = time.perf_counter()
    runs = harness.runs(ad.AdaptConfig(), SEEDS, "full")
    pre = harness.no_adapt()
    base = ex.aggregate(pre)["mpjpe"]
    full = ex._stat(runs, "mpjpe")
    improved = np.mean([m.mpjpe < p.mpjpe for r in runs for m, p in zip(r.metrics, pre)])
    elapsed = time.perf_counter() - start
    ok = full <= 0.7 * base and improved >= 0.9 and elapsed < 900
    verdict(capsys, 5, ok, f"no adaptation {base:.1f} mm, full median {full:.1f} mm "
                           f"({100 * (1 - full / base):.1f}% lower, need >= 30%), "
                           f"videos improved {100 * improved:.1f}% (need >= 90%), {elapsed:.0f}s")


def test_criterion_06_ablation_order(harness, capsys):
    start = time.perf_counter()
    rows = {r["variant"]: r["mpjpe_median"] for r in ex.run_ablation(harness, SEEDS)}
    elapsed = time.perf_counter() - start
    slack = 0.02 * rows["baseline"]
    chain = [rows[k] for k in ("full", "align_ema", "align", "baseline")]
    ok = all(a <= b + slack for a, b in zip(chain, chain[1:])) and elapsed < 2700
    verdict(capsys, 6, ok, "medians full {:.2f} <= align+ema {:.2f} <= align {:.2f} <= baseline {:.2f} mm, "
                           "slack {:.2f}, {:.0f}s".format(*chain, slack, elapsed))


def test_criterion_07_fill_trend(harness, capsys):
    start = time.perf_counter()
    rows = ex.run_threshold_sweep(harness, SEEDS)
    elapsed = time.perf_counter() - start
    counts = [r["filled_count"] for r in rows]
    pck = [r["pck_filled"] for r in rows]
    monotone = all(a >= b for a, b in zip(counts, counts[1:]))
    strict = sum(a > b for a, b in zip(counts, counts[1:]))
    inversions = sum(b < a for a, b in zip(pck, pck[1:]))
    ok = monotone and strict >= 2 and inversions <= 1 and elapsed < 2700
    verdict(capsys, 7, ok, f"filled counts {counts} (strict drops {strict}, need >= 2), "
                           f"filled PCK {[round(p, 4) for p in pck]} (inversions {inversions}, max 1), {elapsed:.0f}s")


def test_criterion_08_occlusion_benefit(harness, capsys):
    trunc = [i for i, v in enumerate(harness.bench.videos) if v.meta["pattern"] == "lower_body_truncation"]

    def occluded(name):
        runs = harness.runs(ad.ablation_config(name), SEEDS, name)
        return float(np.median([ex.aggregate([r.metrics[i] for i in trunc])["occluded_mpjpe"] for r in runs]))

    with_fill, without = occluded("full"), occluded("align_ema")
    verdict(capsys, 8, with_fill < without,
            f"truncated videos, occluded-joint median: fill-in {with_fill:.2f} mm vs without {without:.2f} mm")


def test_criterion_09_label_noise(harness, capsys):
    start = time.perf_counter()
    row = ex.run_label_noise(harness, SEEDS, rates=(0.25,))[0]
    elapsed = time.perf_counter() - start
    bad, good, none = row["mpjpe_corrupted_median"], row["mpjpe_correct_median"], row["mpjpe_no_adapt"]
    ok = bad < none and good <= bad and elapsed < 1200
    verdict(capsys, 9, ok, f"25% corrupted labels {bad:.2f} mm < no adaptation {none:.2f} mm, "
                           f"correct labels {good:.2f} mm <= corrupted, {elapsed:.0f}s")


# --------------------------------------------------------------------------- 10: determinism

COMMANDS = ("gen", "pretrain", "adapt", "eval", "ablate", "sweep threshold", "sweep ema", "sweep labels")
SMALL = ["--n_source", "2", "--source_frames", "120", "--n_target", "2", "--target_frames", "120",
         "--pretrain_epochs", "2", "--epochs", "1", "--seeds", "2", "--seed", "5"]


def _execute(root: Path):
    for cmd in COMMANDS:
        args = [sys.executable, "-m", "stta", *cmd.split(), "--data_dir", str(root / "data"),
                "--out_dir", str(root / "out"), *SMALL]
        subprocess.run(args, check=True, capture_output=True)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path, capsys):
    first, second = _execute(tmp_path / "a"), _execute(tmp_path / "b")
    differ = sorted(k for k in set(first) | set(second) if first.get(k) != second.get(k))
    verdict(capsys, 10, not differ and len(first) > 0,
            f"{len(COMMANDS)} commands run twice in fresh processes: {len(first)} files, {len(differ)} differ")
