"""Command-line pipeline: synth -> render -> train -> infer -> match -> eval,
plus the annotation service. Every command is deterministic given its inputs
and seed; a run manifest is written next to the outputs on success or failure
(manifests are the only outputs that may differ between identical runs, and
only in their timing fields).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import zlib

import numpy as np

from . import __version__
from .dataio import (atomic_write_text, load_dataset, load_detections,
                     map_filename, photo_filename, save_dataset, synth_dataset)
from .figures import save_eval_figure, save_loss_curve, save_selection_figure
from .geometry import crop_window, project_pose
from .hypotheses import (Hypothesis, HypothesisSet, config_grid, load_hypotheses,
                         match_to_2d, save_hypotheses, save_selection_csv)
from .metrics import aggregate, mpjpe, pckh, per_joint_error, save_report_csv, save_report_json
from .networks import (NetworkSpec, TrainConfig, build_generator, build_regressor,
                       infer_pose, load_model, predict_maps, save_model,
                       train_generator, train_regressor)
from .render import (MapConfig, load_map_pair, load_raw_tensor, render_pair,
                     render_photo_standin, save_map_pair, save_map_png, save_raw_tensor)

DATA_DIR_ENV = "SKELPOSE_DATA_DIR"


def _resolve(path):
    if path is None or os.path.isabs(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    return os.path.join(base, path) if base else path


def _texture_seed(sample_id: str) -> int:
    return zlib.crc32(sample_id.encode())


def _parse_grid(args, canvas):
    """Config list from --config mode, optionally overridden by --widths/--crops."""
    if args.widths or args.crops:
        widths = [float(w) for w in (args.widths or "10").split(",")]
        crops = [float(c) for c in (args.crops or "1.0").split(",")]
        return [MapConfig(c, l, canvas) for c in crops for l in widths]
    return config_grid(args.config, canvas)


def _write_manifest(out_dir, command, args, status, started, error=None):
    doc = {
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "status": status,
        "started_unix": started,
        "wall_clock_s": time.time() - started,
    }
    if error:
        doc["error"] = error
    path = os.path.join(out_dir, f"{command}_manifest.json")
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    out = _resolve(args.out)
    ds = synth_dataset(args.n, args.seed, split=args.split)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_dataset(ds, out)
    print(f"wrote {len(ds.samples)} samples to {out}")
    return os.path.dirname(os.path.abspath(out))


def cmd_render(args):
    ds = load_dataset(_resolve(args.dataset))
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    configs = _parse_grid(args, args.canvas)
    n_pairs = 0
    for s in ds.samples:
        if s.joints3d is None:
            raise ValueError(f"sample {s.id} has no 3D pose to render")
        for cfg in configs:
            window = crop_window(s.center, s.person_scale, cfg.crop_scale, cfg.canvas_size)
            pair = render_pair(ds.skeleton, s.joints3d, s.camera, window, cfg)
            save_map_pair(os.path.join(out_dir, map_filename(s.id, cfg)), pair)
            if args.png:
                stem = map_filename(s.id, cfg)[:-5]
                save_map_png(os.path.join(out_dir, stem + "_fore.png"), pair.fore)
                save_map_png(os.path.join(out_dir, stem + "_back.png"), pair.back)
            n_pairs += 1
        if args.photos:
            window = crop_window(s.center, s.person_scale, 1.0, args.canvas)
            img = render_photo_standin(ds.skeleton, s.joints3d, s.camera, window,
                                       args.canvas, _texture_seed(s.id))
            save_raw_tensor(os.path.join(out_dir, photo_filename(s.id)), img)
    print(f"rendered {n_pairs} map pairs ({len(configs)} configs x {len(ds.samples)} samples)")
    return out_dir


def _net_widths(args):
    return tuple(int(w) for w in args.net_widths.split(","))


def cmd_train(args):
    ds = load_dataset(_resolve(args.dataset))
    maps_dir = _resolve(args.maps)
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    configs = _parse_grid(args, args.canvas)
    root = ds.skeleton.root_index
    for i, cfg in enumerate(configs):
        seed = args.seed + i
        tcfg = TrainConfig(base_lr=args.lr, batch_size=args.batch,
                           max_iterations=args.iters, seed=seed)
        stem = f"{args.kind[:3]}_{i:02d}_{cfg.tag()}"
        if args.kind == "regressor":
            spec = NetworkSpec(kind="regressor", input_size=args.canvas, widths=_net_widths(args))
            model = build_regressor(spec, seed)
            data = []
            for s in ds.samples:
                pair = load_map_pair(os.path.join(maps_dir, map_filename(s.id, cfg)), cfg)
                data.append((pair, s.joints3d - s.joints3d[root]))
            result = train_regressor(model, data, tcfg)
        else:
            spec = NetworkSpec(kind="generator", input_size=args.canvas, widths=_net_widths(args))
            model = build_generator(spec, seed)
            data = []
            for s in ds.samples:
                img = load_raw_tensor(os.path.join(maps_dir, photo_filename(s.id)))
                pair = load_map_pair(os.path.join(maps_dir, map_filename(s.id, cfg)), cfg)
                data.append((img, pair))
            result = train_generator(model, data, tcfg)
        save_model(os.path.join(out_dir, stem + ".json"), model,
                   meta={"config": {"crop_scale": cfg.crop_scale,
                                    "stick_width": cfg.stick_width,
                                    "canvas_size": cfg.canvas_size},
                         "iterations": args.iters, "source": stem})
        with open(os.path.join(out_dir, stem + "_loss.csv"), "w") as f:
            f.write("iteration,loss,lr\n")
            for it, (loss, lr) in enumerate(zip(result.losses, result.lrs), start=1):
                f.write(f"{it},{loss!r},{lr!r}\n")
        save_loss_curve(result.losses, result.lrs,
                        os.path.join(out_dir, stem + "_loss.png"), title=stem)
        print(f"{stem}: loss {result.losses[0]:.5g} -> {result.losses[-1]:.5g}")
    return out_dir


def cmd_infer(args):
    ds = load_dataset(_resolve(args.dataset))
    maps_dir = _resolve(args.maps)
    ckpt_dir = _resolve(args.checkpoints)
    out = _resolve(args.out)
    regs = []
    for name in sorted(os.listdir(ckpt_dir)):
        if name.startswith("reg_") and name.endswith(".json"):
            model, manifest = load_model(os.path.join(ckpt_dir, name))
            c = manifest["config"]
            cfg = MapConfig(c["crop_scale"], c["stick_width"], c["canvas_size"])
            regs.append((model, cfg, manifest.get("source", name)))
    if not regs:
        raise ValueError(f"no regressor checkpoints (reg_*.json) in {ckpt_dir}")
    gens = {}
    if args.generators:
        gen_dir = _resolve(args.generators)
        for name in sorted(os.listdir(gen_dir)):
            if name.startswith("gen_") and name.endswith(".json"):
                model, manifest = load_model(os.path.join(gen_dir, name))
                c = manifest["config"]
                gens[(c["crop_scale"], c["stick_width"])] = model
    sets = {}
    for s in ds.samples:
        entries = []
        for model, cfg, source in regs:
            key = (cfg.crop_scale, cfg.stick_width)
            if gens:
                if key not in gens:
                    raise ValueError(f"no generator checkpoint for config {cfg.tag()}")
                img = load_raw_tensor(os.path.join(maps_dir, photo_filename(s.id)))
                pair = predict_maps(gens[key], img, cfg)
            else:
                pair = load_map_pair(os.path.join(maps_dir, map_filename(s.id, cfg)), cfg)
            pose = infer_pose(model, pair, ds.skeleton.root_index)
            entries.append(Hypothesis(config=cfg, pose=pose, source=source))
        sets[s.id] = HypothesisSet(entries=tuple(entries))
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_hypotheses(sets, out, ds.skeleton.root_index)
    print(f"wrote {len(regs)} hypotheses for {len(sets)} samples to {out}")
    return os.path.dirname(os.path.abspath(out))


def cmd_match(args):
    ds = load_dataset(_resolve(args.dataset))
    sets, root = load_hypotheses(_resolve(args.hyps))
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    dets = load_detections(_resolve(args.detections)) if args.detections else None
    rows = []
    selected = {}
    for s in ds.samples:
        if s.id not in sets:
            raise ValueError(f"no hypotheses for sample {s.id}")
        detection = dets[s.id] if dets else np.asarray(s.joints2d)
        if args.root_depth == "gt":
            if s.joints3d is None:
                raise ValueError(f"sample {s.id}: --root-depth gt needs 3D ground truth")
            depth = float(np.asarray(s.joints3d)[root, 2])
        else:
            depth = float(args.root_depth)
        idx, pose_abs = match_to_2d(sets[s.id], detection, s.camera, depth, root)
        err = float(((project_pose(s.camera, pose_abs) - detection) ** 2).sum())
        mm = None
        if s.joints3d is not None:
            mm = mpjpe(pose_abs, s.joints3d, root)
        rows.append((s.id, idx, err, mm))
        selected[s.id] = {
            "index": idx,
            "source": sets[s.id].entries[idx].source,
            "pose": (pose_abs - pose_abs[root]).tolist(),
        }
    save_selection_csv(rows, os.path.join(out_dir, "selection.csv"))
    atomic_write_text(os.path.join(out_dir, "selected_poses.json"),
                      json.dumps(selected, indent=1, sort_keys=True) + "\n")
    save_selection_figure([r[2] for r in rows], [r[3] for r in rows],
                          os.path.join(out_dir, "selection.png"))
    picked = sum(1 for r in rows if r[1] >= 0)
    print(f"matched {picked} samples; reports in {out_dir}")
    return out_dir


def cmd_eval(args):
    ds = load_dataset(_resolve(args.dataset))
    out_dir = _resolve(args.out)
    os.makedirs(out_dir, exist_ok=True)
    with open(_resolve(args.pred)) as f:
        preds = json.load(f)
    root = ds.skeleton.root_index
    mp_rows, pk_rows = [], []
    for s in ds.samples:
        if s.id not in preds:
            raise ValueError(f"no prediction for sample {s.id}")
        pose_rel = np.asarray(preds[s.id]["pose"], dtype=np.float64)
        if s.joints3d is None:
            raise ValueError(f"sample {s.id} has no 3D ground truth")
        gt = np.asarray(s.joints3d)
        mp_rows.append((s.id, per_joint_error(pose_rel, gt, root)))
        pose_abs = pose_rel + gt[root]
        pred2d = project_pose(s.camera, pose_abs)
        pk_rows.append((s.id, pckh(pred2d, s.joints2d, s.head_size, args.tau).astype(float)))
    mp_report = aggregate(mp_rows, "mpjpe")
    pk_report = aggregate(pk_rows, "pckh")
    save_report_csv(mp_report, os.path.join(out_dir, "mpjpe.csv"))
    save_report_json(mp_report, os.path.join(out_dir, "mpjpe.json"))
    save_report_csv(pk_report, os.path.join(out_dir, "pckh.csv"))
    save_report_json(pk_report, os.path.join(out_dir, "pckh.json"))
    save_eval_figure(mp_report, pk_report, os.path.join(out_dir, "eval_report.png"))
    print(f"MPJPE {mp_report.mean:.3f} mm  PCKh@{args.tau:g} {pk_report.mean:.2f} %")
    return out_dir


def cmd_annotate(args):
    from .service import serve

    ui = _resolve(args.ui) if args.ui else None
    serve(_resolve(args.dataset), host=args.host, port=args.port, ui_dir=ui)
    return None


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_grid_flags(p):
    p.add_argument("--config", default="single",
                   choices=["single", "h36m", "mpii", "ensemble"],
                   help="configuration grid (crop scale x stick width)")
    p.add_argument("--widths", default=None, help="override: comma-separated stick widths")
    p.add_argument("--crops", default=None, help="override: comma-separated crop scales")
    p.add_argument("--canvas", type=int, default=56, help="map canvas size in px")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="skelpose",
        description="Stick-figure map pipeline: synthesize, render, train, "
                    "infer, match, evaluate, annotate.")
    ap.add_argument("--version", action="version", version=f"skelpose {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="rasterize ground-truth map pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.add_argument("--png", action="store_true", help="also export 8-bit PNGs")
    p.add_argument("--photos", action="store_true", help="also export raw-image stand-ins")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="train map generators or pose regressors")
    p.add_argument("--kind", required=True, choices=["generator", "regressor"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--maps", required=True, help="directory of rendered map files")
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=None,
                   help="base learning rate (default 0.01 regressor, 1e-5 generator)")
    p.add_argument("--net-widths", default="8,16,32")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="produce hypothesis sets from checkpoints")
    p.add_argument("--dataset", required=True)
    p.add_argument("--maps", required=True)
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--generators", default=None,
                   help="generator checkpoint dir; when set, maps are predicted "
                        "from photo stand-ins instead of loaded from files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("match", help="select hypotheses by reprojection error")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detections", default=None,
                   help="2D detections JSON; defaults to dataset ground truth")
    p.add_argument("--root-depth", default="gt",
                   help="'gt' or a fixed depth in mm for root placement")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="MPJPE and PCKh reports with figures")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred", required=True, help="selected_poses.json from match")
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("annotate", help="serve the annotation API and UI")
    p.add_argument("--dataset", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui", default=None, help="static UI bundle directory")
    p.set_defaults(func=cmd_annotate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "train" and args.lr is None:
        args.lr = 0.01 if args.kind == "regressor" else 1e-5
    started = time.time()
    manifest_dir = None
    try:
        manifest_dir = args.func(args)
        if manifest_dir:
            _write_manifest(manifest_dir, args.command, args, "ok", started)
        return 0
    except KeyboardInterrupt:
        raise
    except Exception as e:
        if manifest_dir is None:
            out = getattr(args, "out", None)
            if out:
                out = _resolve(out)
                manifest_dir = out if os.path.isdir(out) or not os.path.splitext(out)[1] \
                    else os.path.dirname(os.path.abspath(out))
        if manifest_dir:
            try:
                _write_manifest(manifest_dir, args.command, args, "error", started, error=str(e))
            except OSError:
                pass
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
