"""Toy-scale map-generation and 3D-regression networks with training loops.

The generator is a conv encoder with stride-2 stages, mirrored by a decoder
of bilinear-initialized transposed convs, skip connections, and a 6-channel
(fore RGB + back RGB) head at every decoder resolution for intermediate
supervision. The regressor downsamples a 6-channel map pair and maps the
flattened features to 48 outputs, read as 16 root-relative (X, Y, Z) joint
offsets in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .render import SkeletonMapPair
from .skeleton import ROOT_INDEX


@dataclass(frozen=True)
class NetworkSpec:
    kind: str                       # "generator" | "regressor"
    input_size: int = 32
    widths: tuple = (8, 16, 32)
    in_channels: int = 0            # 0 = default for kind (3 gen / 6 reg)
    output_dim: int = 48            # regressor only
    output_scale: float = 300.0     # regressor: millimeters per network unit
    num_heads: int = 0              # generator: 0 = one head per stage

    def __post_init__(self):
        if self.kind not in ("generator", "regressor"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.num_stages < 2:
            raise ValueError("need at least 2 stages")
        if self.kind == "regressor" and self.output_dim != 48:
            raise ValueError("regressors output 48 values (16 joints x 3)")
        if self.input_size % (2 ** (self.num_stages - 1)) != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by 2^{self.num_stages - 1}")

    @property
    def num_stages(self):
        return len(self.widths)

    @property
    def channels_in(self):
        if self.in_channels:
            return self.in_channels
        return 3 if self.kind == "generator" else 6

    @property
    def head_count(self):
        return self.num_heads or self.num_stages


@dataclass
class TrainConfig:
    base_lr: float
    batch_size: int
    max_iterations: int
    lr_drop_factor: float = 10.0
    seed: int = 0
    plateau_window: int = 100
    plateau_min_improve: float = 0.01
    max_lr_drops: int = 2
    momentum: float = 0.9
    weight_decay: float = 0.0002

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)


def _conv_init(rng, out_c, in_c, k):
    fan_in = in_c * k * k
    fan_out = out_c * k * k
    w = ad.Tensor(ad.glorot_uniform(rng, (out_c, in_c, k, k), fan_in, fan_out), requires_grad=True)
    b = ad.Tensor(np.zeros(out_c), requires_grad=True)
    return w, b


class Generator:
    """Image (3, S, S) -> list of 6-channel map logits, coarse to fine."""

    def __init__(self, spec: NetworkSpec, seed: int, bilinear_init=True):
        if spec.kind != "generator":
            raise ValueError("spec.kind must be 'generator'")
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        w = spec.widths
        n = spec.num_stages
        p = {}
        p["stem.w"], p["stem.b"] = _conv_init(rng, w[0], spec.channels_in, 3)
        for j in range(1, n):
            p[f"enc{j}.w"], p[f"enc{j}.b"] = _conv_init(rng, w[j], w[j - 1], 3)
        for j in range(n - 2, -1, -1):
            if bilinear_init:
                p[f"up{j}.w"] = ad.Tensor(ad.bilinear_kernel(w[j + 1], w[j], 4), requires_grad=True)
            else:
                p[f"up{j}.w"] = _conv_init(rng, w[j + 1], w[j], 4)[0]
            p[f"up{j}.b"] = ad.Tensor(np.zeros(w[j]), requires_grad=True)
            p[f"refine{j}.w"], p[f"refine{j}.b"] = _conv_init(rng, w[j], w[j], 3)
        for j in range(n):
            p[f"head{j}.w"], p[f"head{j}.b"] = _conv_init(rng, 6, w[j], 1)
        self.params = p

    def forward(self, x):
        """x: Tensor (N, 3, S, S) in [0, 1]. Returns head logits, finest last."""
        p = self.params
        n = self.spec.num_stages
        # remove the DC component so the stem sees zero-mean inputs; raw
        # [0, 1] textures otherwise push training into limit cycles
        x = ad.center_spatial(x)
        feats = [ad.relu(ad.conv2d(x, p["stem.w"], p["stem.b"], stride=1, pad=1))]
        for j in range(1, n):
            feats.append(ad.relu(ad.conv2d(feats[-1], p[f"enc{j}.w"], p[f"enc{j}.b"], stride=2, pad=1)))
        heads = [ad.conv2d(feats[-1], p[f"head{n - 1}.w"], p[f"head{n - 1}.b"])]
        d = feats[-1]
        for j in range(n - 2, -1, -1):
            u = ad.transposed_conv2d(d, p[f"up{j}.w"], p[f"up{j}.b"], stride=2, pad=1)
            s = ad.residual_add(u, feats[j])
            d = ad.residual_add(ad.relu(ad.conv2d(s, p[f"refine{j}.w"], p[f"refine{j}.b"], pad=1)), s)
            heads.append(ad.conv2d(d, p[f"head{j}.w"], p[f"head{j}.b"]))
        return heads[-self.spec.head_count:]


class Regressor:
    """Map pair (6, S, S) -> 48-vector of root-relative joint offsets."""

    def __init__(self, spec: NetworkSpec, seed: int):
        if spec.kind != "regressor":
            raise ValueError("spec.kind must be 'regressor'")
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        w = spec.widths
        n = spec.num_stages
        p = {}
        p["stem.w"], p["stem.b"] = _conv_init(rng, w[0], spec.channels_in, 3)
        for j in range(1, n):
            p[f"enc{j}.w"], p[f"enc{j}.b"] = _conv_init(rng, w[j], w[j - 1], 3)
        feat = w[-1] * (spec.input_size // 2 ** (n - 1)) ** 2
        p["fc.w"] = ad.Tensor(ad.glorot_uniform(rng, (feat, spec.output_dim), feat, spec.output_dim),
                              requires_grad=True)
        p["fc.b"] = ad.Tensor(np.zeros(spec.output_dim), requires_grad=True)
        self.params = p

    def forward(self, x):
        p = self.params
        x = ad.center_spatial(x)  # zero-mean inputs, see Generator.forward
        f = ad.relu(ad.conv2d(x, p["stem.w"], p["stem.b"], stride=1, pad=1))
        for j in range(1, self.spec.num_stages):
            f = ad.relu(ad.conv2d(f, p[f"enc{j}.w"], p[f"enc{j}.b"], stride=2, pad=1))
        flat = ad.reshape(f, (f.shape[0], -1))
        return ad.linear(flat, p["fc.w"], p["fc.b"])


def build_generator(spec: NetworkSpec, seed: int) -> Generator:
    return Generator(spec, seed)


def build_regressor(spec: NetworkSpec, seed: int) -> Regressor:
    return Regressor(spec, seed)


def pair_to_input(pair: SkeletonMapPair) -> np.ndarray:
    """Stack fore and back maps as a (6, S, S) array."""
    return np.concatenate([pair.fore.transpose(2, 0, 1), pair.back.transpose(2, 0, 1)])


def image_to_input(img) -> np.ndarray:
    """HWC [0,1] image to (C, S, S)."""
    return np.asarray(img, dtype=np.float64).transpose(2, 0, 1)


def area_downsample(x, factor):
    """(N, C, H, W) -> block mean with integer factor."""
    if factor == 1:
        return x
    n, c, h, w = x.shape
    return x.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def _zero_grads(params):
    for p in params.values():
        p.grad = None


def _run_training(model, cfg, num_items, step_fn):
    rng = np.random.default_rng(cfg.seed)
    state = ad.SgdState(learning_rate=cfg.base_lr, momentum=cfg.momentum,
                        weight_decay=cfg.weight_decay)
    result = TrainResult()
    lr = cfg.base_lr
    best = None
    drops = 0
    for it in range(cfg.max_iterations):
        idx = rng.integers(0, num_items, size=cfg.batch_size)
        _zero_grads(model.params)
        loss = step_fn(idx)
        loss.backward()
        state.learning_rate = lr
        ad.sgd_step(state, model.params)
        result.losses.append(float(loss.data))
        result.lrs.append(lr)
        # plateau rule: when the trailing-window mean stops improving by at
        # least plateau_min_improve (relative), drop the learning rate; at
        # most max_lr_drops times, further drops would just freeze training
        if (it + 1) % cfg.plateau_window == 0:
            m = float(np.mean(result.losses[-cfg.plateau_window:]))
            if best is None or m < (1.0 - cfg.plateau_min_improve) * best:
                best = m
            elif drops < cfg.max_lr_drops:
                lr /= cfg.lr_drop_factor
                drops += 1
                best = m
    return result


def generator_loss(model: Generator, images, targets):
    """Sum over heads of sigmoid cross entropy against area-downsampled maps."""
    x = ad.Tensor(images)
    heads = model.forward(x)
    total = None
    for head in heads:
        s = head.shape[2]
        t = area_downsample(targets, targets.shape[2] // s)
        term = ad.sigmoid_cross_entropy(head, t)
        total = term if total is None else ad.residual_add(total, term)
    return total


def train_generator(model: Generator, dataset, cfg: TrainConfig) -> TrainResult:
    """dataset: list of (image HWC [0,1], SkeletonMapPair with the model's canvas)."""
    if not dataset:
        raise ValueError("dataset is empty")
    s = model.spec.input_size
    for i, (_, pair) in enumerate(dataset):
        if pair.fore.shape[0] != s:
            raise ValueError(f"sample {i}: map canvas {pair.fore.shape[0]} != model input {s}")
        if pair.config != dataset[0][1].config:
            raise ValueError(f"sample {i}: all ground-truth maps must share one config")
    images = np.stack([image_to_input(img) for img, _ in dataset])
    targets = np.stack([pair_to_input(pair) for _, pair in dataset])

    def step(idx):
        return generator_loss(model, images[idx], targets[idx])

    return _run_training(model, cfg, len(dataset), step)


def train_regressor(model: Regressor, dataset, cfg: TrainConfig) -> TrainResult:
    """dataset: list of (SkeletonMapPair, root-relative (16, 3) pose in mm)."""
    if not dataset:
        raise ValueError("dataset is empty")
    root = ROOT_INDEX
    for i, (_, pose) in enumerate(dataset):
        pose = np.asarray(pose)
        if np.linalg.norm(pose[root]) > 1e-6:
            raise ValueError(f"sample {i}: target pose is not root-relative "
                             f"(root norm {np.linalg.norm(pose[root]):.3g} mm)")
    inputs = np.stack([pair_to_input(pair) for pair, _ in dataset])
    targets = np.stack([np.asarray(pose).reshape(48) / model.spec.output_scale
                        for _, pose in dataset])
    # warm-start the output bias at the mean target: otherwise SGD spends its
    # early budget fitting the dataset mean before it looks at the input
    model.params["fc.b"].data = targets.mean(axis=0).copy()

    def step(idx):
        out = model.forward(ad.Tensor(inputs[idx]))
        return ad.euclidean_loss(out, targets[idx])

    return _run_training(model, cfg, len(dataset), step)


def predict_maps(model: Generator, image, config) -> SkeletonMapPair:
    """Run the generator on one HWC image and split the finest head into a
    fore/back pair (sigmoid squashes logits into [0, 1])."""
    x = ad.Tensor(image_to_input(image)[None])
    head = model.forward(x)[-1].data[0]
    probs = 0.5 * (1.0 + np.tanh(0.5 * head))
    return SkeletonMapPair(fore=probs[:3].transpose(1, 2, 0),
                           back=probs[3:].transpose(1, 2, 0), config=config)


def infer_pose(model: Regressor, pair: SkeletonMapPair, root_index: int = ROOT_INDEX) -> np.ndarray:
    """Root-relative (16, 3) prediction in mm; the root row is exactly zero."""
    x = ad.Tensor(pair_to_input(pair)[None])
    out = model.forward(x)
    pose = out.data.reshape(16, 3) * model.spec.output_scale
    pose = pose - pose[root_index]
    return pose


# ---------------------------------------------------------------------------
# checkpoint round trip
# ---------------------------------------------------------------------------

def save_model(path, model, meta=None):
    doc = {"kind": model.spec.kind, "spec": asdict(model.spec), "seed": model.seed}
    doc.update(meta or {})
    ad.save_checkpoint(path, model.params, doc)


def load_model(path):
    """Rebuild a Generator or Regressor from a checkpoint manifest."""
    params, manifest = ad.load_checkpoint(path)
    spec_doc = dict(manifest["spec"])
    spec_doc["widths"] = tuple(spec_doc["widths"])
    spec = NetworkSpec(**spec_doc)
    model = Generator(spec, manifest["seed"]) if spec.kind == "generator" \
        else Regressor(spec, manifest["seed"])
    for name, p in model.params.items():
        if name not in params:
            raise ValueError(f"checkpoint missing parameter {name}")
        if params[name].shape != p.shape:
            raise ValueError(f"checkpoint parameter {name} has shape {params[name].shape}, "
                             f"expected {p.shape}")
        p.data = params[name].data
    return model, manifest
