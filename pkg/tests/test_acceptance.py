"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and timings.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

import skelpose.autodiff as ad
from skelpose.dataio import synth_dataset
from skelpose.geometry import crop_window, project_pose
from skelpose.hypotheses import Hypothesis, HypothesisSet, config_grid, match_to_2d, oracle_select
from skelpose.metrics import mpjpe, pckh
from skelpose.networks import (NetworkSpec, TrainConfig, area_downsample, build_generator,
                               build_regressor, infer_pose, train_regressor)
from skelpose.render import (MapConfig, SkeletonMapPair, render_pair,
                             render_pair_reference, render_photo_standin)
from skelpose.skeleton import ROOT_INDEX, standard_model

from conftest import (CROSS_CAMERA, CROSS_WINDOW, H_BONE, V_BONE, crossing_pose,
                      finite_difference_check)


def report(name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. renderer oracle equivalence
# ---------------------------------------------------------------------------

def test_renderer_oracle_equivalence():
    start = time.monotonic()
    model = standard_model()
    ds = synth_dataset(1000, seed=2024)
    rng = np.random.default_rng(555)
    mismatches = 0
    for s in ds.samples:
        size = int(rng.integers(16, 33))
        width = float(rng.uniform(5.0, 15.0))
        crop = float(rng.choice([1.0, 1.25, 1.5]))
        cfg = MapConfig(crop, width, size)
        w = crop_window(s.center, s.person_scale, crop, size)
        a = render_pair(model, s.joints3d, s.camera, w, cfg)
        b = render_pair_reference(model, s.joints3d, s.camera, w, cfg)
        if not (np.array_equal(a.fore, b.fore) and np.array_equal(a.back, b.back)):
            mismatches += 1
    elapsed = time.monotonic() - start
    report("renderer oracle equivalence (1000 scenes)",
           mismatches == 0 and elapsed < 60.0,
           f"mismatches={mismatches}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. occlusion semantics, exhaustive on a 32x32 canvas
# ---------------------------------------------------------------------------

def _coverage_mask(model, pose, bone):
    """Independent capsule-coverage test for one bone over the 32x32 canvas."""
    p, c = model.bones[bone]
    pts = project_pose(CROSS_CAMERA, pose)
    half = CROSS_WINDOW.side / 2.0
    scale = CROSS_WINDOW.out_size / CROSS_WINDOW.side
    a = (pts[p] - (np.asarray(CROSS_WINDOW.center) - half)) * scale
    b = (pts[c] - (np.asarray(CROSS_WINDOW.center) - half)) * scale
    mask = np.zeros((32, 32), dtype=bool)
    for row in range(32):
        for col in range(32):
            q = np.array([col + 0.5, row + 0.5])
            e = b - a
            ee = float(e @ e)
            t = min(1.0, max(0.0, float((q - a) @ e) / ee)) if ee > 0 else 0.0
            mask[row, col] = np.hypot(*(q - (a + t * e))) <= 3.5  # l=7 sticks
    return mask


def test_occlusion_semantics_exhaustive():
    model = standard_model()
    cfg = MapConfig(1.0, 7.0, 32)
    near_color = np.asarray(model.bone_colors[H_BONE])
    far_color = np.asarray(model.bone_colors[V_BONE])

    p1 = crossing_pose(depth_h=900.0, depth_v=1100.0)
    p2 = crossing_pose(depth_h=1100.0, depth_v=900.0)
    a = render_pair(model, p1, CROSS_CAMERA, CROSS_WINDOW, cfg)
    b = render_pair(model, p2, CROSS_CAMERA, CROSS_WINDOW, cfg)

    mask_h = _coverage_mask(model, p1, H_BONE)
    mask_v = _coverage_mask(model, p1, V_BONE)
    overlap = mask_h & mask_v
    ok = overlap.sum() > 0
    checked = 0
    for row in range(32):
        for col in range(32):
            fa, ba = a.fore[row, col], a.back[row, col]
            fb, bb = b.fore[row, col], b.back[row, col]
            if overlap[row, col]:
                ok &= np.array_equal(fa, near_color) and np.array_equal(ba, far_color)
                ok &= np.array_equal(fb, far_color) and np.array_equal(bb, near_color)
                checked += 1
            elif mask_h[row, col]:
                ok &= np.array_equal(fa, near_color) and np.array_equal(ba, near_color)
                ok &= np.array_equal(fb, near_color) and np.array_equal(bb, near_color)
            elif mask_v[row, col]:
                ok &= np.array_equal(fa, far_color) and np.array_equal(ba, far_color)
                ok &= np.array_equal(fb, far_color) and np.array_equal(bb, far_color)
            else:
                ok &= not fa.any() and not ba.any() and not fb.any() and not bb.any()
    # swapping depths flips fore/back at exactly the overlap pixels
    swapped = (a.fore != b.fore).any(axis=2)
    ok &= np.array_equal(swapped, overlap)
    report("occlusion semantics (crossing bones, exhaustive 32x32)", bool(ok),
           f"overlap pixels={checked}")


# ---------------------------------------------------------------------------
# 3. gradient suite: every op and both toy networks, 20 seeds each
# ---------------------------------------------------------------------------

def _op_cases(rng):
    def t(*shape, scale=1.0):
        return ad.Tensor(rng.normal(size=shape) * scale, requires_grad=True)

    cases = {}
    x, w, b = t(1, 2, 4, 4), t(2, 2, 3, 3, scale=0.5), t(2, scale=0.1)
    tgt = rng.normal(size=(1, 2, 4, 4))
    cases["conv2d"] = ([x, w, b],
                       lambda: ad.euclidean_loss(ad.conv2d(x, w, b, 1, 1), tgt))
    x2, w2, b2 = t(1, 2, 3, 3), t(2, 2, 4, 4, scale=0.4), t(2, scale=0.1)
    tgt2 = rng.normal(size=(1, 2, 6, 6))
    cases["transposed_conv2d"] = ([x2, w2, b2],
                                  lambda: ad.euclidean_loss(
                                      ad.transposed_conv2d(x2, w2, b2, 2, 1), tgt2))
    a3, b3 = t(1, 2, 3, 3), t(1, 2, 3, 3)
    tgt3 = rng.normal(size=(1, 18))
    cases["residual_add"] = ([a3, b3],
                             lambda: ad.euclidean_loss(
                                 ad.reshape(ad.residual_add(a3, b3), (1, -1)), tgt3))
    data = rng.normal(size=(1, 2, 3, 3))
    data[np.abs(data) < 0.15] = 0.6  # keep clear of the relu kink
    x4 = ad.Tensor(data, requires_grad=True)
    cases["relu"] = ([x4],
                     lambda: ad.euclidean_loss(ad.reshape(ad.relu(x4), (1, -1)),
                                               np.zeros((1, 18))))
    x5, w5, b5 = t(2, 4), t(4, 3), t(3)
    tgt5 = rng.normal(size=(2, 3))
    cases["linear"] = ([x5, w5, b5], lambda: ad.euclidean_loss(ad.linear(x5, w5, b5), tgt5))
    x6 = t(1, 2, 4, 4)
    cases["max_pool"] = ([x6],
                         lambda: ad.euclidean_loss(
                             ad.reshape(ad.max_pool(x6, 2, 2), (1, -1)), np.zeros((1, 8))))
    x7 = t(1, 2, 3, 3)
    cases["upsample_nearest"] = ([x7],
                                 lambda: ad.euclidean_loss(
                                     ad.reshape(ad.upsample_nearest(x7, 2), (1, -1)),
                                     np.zeros((1, 72))))
    a8, b8 = t(1, 2, 3, 3), t(1, 1, 3, 3)
    cases["concat_channels"] = ([a8, b8],
                                lambda: ad.euclidean_loss(
                                    ad.reshape(ad.concat_channels(a8, b8), (1, -1)),
                                    np.zeros((1, 27))))
    z9 = t(2, 4)
    t9 = rng.uniform(0.05, 0.95, (2, 4))
    cases["sigmoid_cross_entropy"] = ([z9], lambda: ad.sigmoid_cross_entropy(z9, t9))
    p10 = t(2, 5)
    t10 = rng.normal(size=(2, 5))
    cases["euclidean_loss"] = ([p10], lambda: ad.euclidean_loss(p10, t10))
    x11 = t(1, 2, 3, 3)
    cases["reshape"] = ([x11],
                        lambda: ad.euclidean_loss(ad.reshape(x11, (1, -1)),
                                                  np.zeros((1, 18))))
    x12 = t(1, 2, 3, 3)
    t12 = rng.normal(size=(1, 18))
    cases["center_spatial"] = ([x12],
                               lambda: ad.euclidean_loss(
                                   ad.reshape(ad.center_spatial(x12), (1, -1)), t12))
    return cases


def test_gradient_suite():
    start = time.monotonic()
    worst = {}
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        for name, (tensors, loss) in _op_cases(rng).items():
            def make():
                for t in tensors:
                    t.zero_grad()
                return loss()

            err = finite_difference_check(make, tensors)
            worst[name] = max(worst.get(name, 0.0), err)
    # end-to-end toy networks, under 500 parameters each
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        gen = build_generator(NetworkSpec(kind="generator", input_size=8, widths=(2, 3)), seed)
        img = rng.uniform(0, 1, (1, 3, 8, 8))
        gtgt = rng.uniform(0, 1, (1, 6, 8, 8))
        gparams = list(gen.params.values())

        def gloss():
            for t in gparams:
                t.zero_grad()
            total = None
            for h in gen.forward(ad.Tensor(img)):
                term = ad.sigmoid_cross_entropy(h, area_downsample(gtgt, 8 // h.shape[2]))
                total = term if total is None else ad.residual_add(total, term)
            return total

        worst["generator-e2e"] = max(worst.get("generator-e2e", 0.0),
                                     finite_difference_check(gloss, gparams,
                                                             skip_nonsmooth=True))
        reg = build_regressor(NetworkSpec(kind="regressor", input_size=4, widths=(2, 1)), seed)
        x = rng.uniform(0, 1, (1, 6, 4, 4))
        rtgt = rng.normal(size=(1, 48))
        rparams = list(reg.params.values())

        def rloss():
            for t in rparams:
                t.zero_grad()
            return ad.euclidean_loss(reg.forward(ad.Tensor(x)), rtgt)

        worst["regressor-e2e"] = max(worst.get("regressor-e2e", 0.0),
                                     finite_difference_check(rloss, rparams,
                                                             skip_nonsmooth=True))
    elapsed = time.monotonic() - start
    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    report("gradient suite (all ops + both toy networks, 20 seeds)",
           not bad and elapsed < 120.0,
           f"worst={max(worst.values()):.2e}, {elapsed:.1f}s" + (f", bad={bad}" if bad else ""))


# ---------------------------------------------------------------------------
# 4. skeleton map beats the raw-image stand-in (held-in, 3 seeds)
# ---------------------------------------------------------------------------

OVERFIT_CANVAS = 32
OVERFIT_SPEC = NetworkSpec(kind="regressor", input_size=OVERFIT_CANVAS, widths=(8, 16, 32))
OVERFIT_BUDGET = dict(base_lr=0.01, batch_size=32, max_iterations=600)


def _overfit_datasets(n=64, seed=100):
    # a single background texture for every sample: the raw-image lane then
    # carries only silhouette information, with no per-sample texture keys
    # that a memorizing network could shortcut through
    model = standard_model()
    ds = synth_dataset(n, seed=seed)
    cfg = MapConfig(1.0, 10.0, OVERFIT_CANVAS)
    map_data, rgb_data = [], []
    for s in ds.samples:
        w = crop_window(s.center, s.person_scale, 1.0, OVERFIT_CANVAS)
        pair = render_pair(model, s.joints3d, s.camera, w, cfg)
        img = render_photo_standin(model, s.joints3d, s.camera, w, OVERFIT_CANVAS, 7)
        rel = np.asarray(s.joints3d) - np.asarray(s.joints3d)[ROOT_INDEX]
        map_data.append((pair, rel))
        # the image fills both 3-channel slots so the two networks are identical
        rgb_data.append((SkeletonMapPair(fore=img, back=img, config=cfg), rel))
    return map_data, rgb_data


def _train_and_score(data, seed):
    reg = build_regressor(OVERFIT_SPEC, seed)
    train_regressor(reg, data, TrainConfig(seed=seed, **OVERFIT_BUDGET))
    return float(np.mean([mpjpe(infer_pose(reg, p), t) for p, t in data]))


@pytest.mark.slow
def test_map_regression_beats_rgb_standin():
    map_data, rgb_data = _overfit_datasets()
    wins = []
    details = []
    for seed in (0, 1, 2):
        m = _train_and_score(map_data, seed)
        r = _train_and_score(rgb_data, seed)
        wins.append(m < r)
        details.append(f"seed {seed}: maps {m:.1f} vs rgb {r:.1f} mm")
    report("skeleton-map regressor beats raw-image stand-in (3 seeds)",
           all(wins), "; ".join(details))


# ---------------------------------------------------------------------------
# 5. multi-hypothesis ordering on a 64-sample eval set
# ---------------------------------------------------------------------------

HYP_CANVAS = 32
HYP_ITERS = 300


@pytest.mark.slow
def test_multi_hypothesis_ordering():
    model = standard_model()
    ds = synth_dataset(64, seed=300)
    configs = config_grid("h36m", canvas_size=HYP_CANVAS)
    spec = NetworkSpec(kind="regressor", input_size=HYP_CANVAS, widths=(8, 16, 32))
    # one regressor per configuration, trained on that configuration's maps
    per_config_pairs = []
    rels = []
    for s in ds.samples:
        rels.append(np.asarray(s.joints3d) - np.asarray(s.joints3d)[ROOT_INDEX])
    for cfg in configs:
        pairs = []
        for s in ds.samples:
            w = crop_window(s.center, s.person_scale, cfg.crop_scale, HYP_CANVAS)
            pairs.append(render_pair(model, s.joints3d, s.camera, w, cfg))
        per_config_pairs.append(pairs)
    models = []
    for i, cfg in enumerate(configs):
        reg = build_regressor(spec, 40 + i)
        train_regressor(reg, list(zip(per_config_pairs[i], rels)),
                        TrainConfig(base_lr=0.01, batch_size=16,
                                    max_iterations=HYP_ITERS, seed=40 + i))
        models.append(reg)
    oracle_errs, match_errs = [], []
    single_errs = np.zeros((len(configs), len(ds.samples)))
    for j, s in enumerate(ds.samples):
        entries = []
        for i, cfg in enumerate(configs):
            pose = infer_pose(models[i], per_config_pairs[i][j])
            entries.append(Hypothesis(config=cfg, pose=pose, source=f"reg{i}"))
            single_errs[i, j] = mpjpe(pose, rels[j])
        hs = HypothesisSet(entries=tuple(entries))
        _, oerr = oracle_select(hs, rels[j])
        oracle_errs.append(oerr)
        depth = float(np.asarray(s.joints3d)[ROOT_INDEX, 2])
        _, sel = match_to_2d(hs, np.asarray(s.joints2d), s.camera, depth)
        match_errs.append(mpjpe(sel, np.asarray(s.joints3d)))
    oracle_mean = float(np.mean(oracle_errs))
    match_mean = float(np.mean(match_errs))
    single_means = single_errs.mean(axis=1)
    ok = (oracle_mean <= match_mean + 1e-9
          and match_mean <= float(single_means.mean()) + 1e-9
          and match_mean < float(single_means.max()))
    report("multi-hypothesis ordering (oracle <= match <= mean single, beats worst)",
           ok,
           f"oracle {oracle_mean:.1f} <= match {match_mean:.1f} <= "
           f"mean-single {single_means.mean():.1f}, worst {single_means.max():.1f} mm")


# ---------------------------------------------------------------------------
# 6. metrics unit suite
# ---------------------------------------------------------------------------

def test_metrics_exact_cases():
    rng = np.random.default_rng(0)
    gt = np.column_stack([rng.uniform(-500, 500, 16),
                          rng.uniform(-500, 500, 16),
                          rng.uniform(1000, 3000, 16)])
    ok = mpjpe(gt + np.array([123.0, -45.0, 67.0]), gt) < 1e-9
    pred = gt.copy()
    pred[0] += np.array([3.0, 4.0, 0.0])
    ok &= mpjpe(pred, gt) == 0.3125
    gt2 = np.zeros((16, 2))
    p2 = np.zeros((16, 2))
    p2[4, 0] = 31.0
    ok &= not pckh(p2, gt2, 60.0, 0.5)[4]
    p2[4, 0] = 29.0
    ok &= bool(pckh(p2, gt2, 60.0, 0.5)[4])
    p2[4, 0] = 30.0
    ok &= bool(pckh(p2, gt2, 60.0, 0.5)[4])  # closed threshold
    prev = -1
    mono = True
    p3 = gt2 + rng.normal(0, 15, (16, 2))
    for tau in (0.1, 0.3, 0.5, 0.8, 1.3):
        hits = int(pckh(p3, gt2, 60.0, tau).sum())
        mono &= hits >= prev
        prev = hits
    ok &= mono
    report("metrics unit suite (translation invariance, 0.3125, PCKh boundaries)", bool(ok))


# ---------------------------------------------------------------------------
# 7. CLI pipeline determinism
# ---------------------------------------------------------------------------

PIPELINE_IGNORE = ("_manifest.json",)


def _run_pipeline(base):
    base.mkdir()
    ds = base / "ds.json"
    maps = base / "maps"
    ckpt = base / "ckpt"
    sel = base / "sel"
    ev = base / "eval"
    cli = [sys.executable, "-m", "skelpose.cli"]
    steps = [
        ["synth", "--out", str(ds), "--n", "12", "--seed", "5"],
        ["render", "--dataset", str(ds), "--out", str(maps),
         "--widths", "5,10,15", "--canvas", "24", "--png"],
        ["train", "--kind", "regressor", "--dataset", str(ds), "--maps", str(maps),
         "--out", str(ckpt), "--widths", "5,10,15", "--canvas", "24",
         "--iters", "500", "--batch", "8", "--net-widths", "4,8,16", "--seed", "9"],
        ["infer", "--dataset", str(ds), "--maps", str(maps),
         "--checkpoints", str(ckpt), "--out", str(base / "hyps.json")],
        ["match", "--dataset", str(ds), "--hyps", str(base / "hyps.json"),
         "--out", str(sel)],
        ["eval", "--dataset", str(ds), "--pred", str(sel / "selected_poses.json"),
         "--out", str(ev)],
    ]
    for step in steps:
        proc = subprocess.run(cli + step, capture_output=True, text=True)
        assert proc.returncode == 0, f"{step[0]} failed: {proc.stderr}"


def _tree_bytes(base):
    out = {}
    for p in sorted(base.rglob("*")):
        if p.is_file() and not any(p.name.endswith(sfx) for sfx in PIPELINE_IGNORE):
            out[str(p.relative_to(base))] = p.read_bytes()
    return out


@pytest.mark.slow
def test_pipeline_determinism(tmp_path):
    start = time.monotonic()
    _run_pipeline(tmp_path / "run1")
    _run_pipeline(tmp_path / "run2")
    t1 = _tree_bytes(tmp_path / "run1")
    t2 = _tree_bytes(tmp_path / "run2")
    elapsed = time.monotonic() - start
    same_names = set(t1) == set(t2)
    diffs = [k for k in t1 if same_names and t1[k] != t2[k]]
    report("pipeline determinism (synth->render->train->infer->match->eval, x2)",
           same_names and not diffs and elapsed < 600.0,
           f"files={len(t1)}, diffs={diffs[:4]}, {elapsed:.0f}s")
