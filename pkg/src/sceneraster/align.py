"""Feature-space alignment between rendered and real-style views, at desk
scale: a tiny analytically-differentiated encoder, the paired spatial MSE
loss, the adversarial global loss behind a gradient reversal layer, the
smooth reversal-strength annealing schedule, and a self-contained training
demo on two-palette synthetic data.

All gradients are closed-form (no autodiff framework), which keeps the
finite-difference oracle in the test suite meaningful.  The encoder stands
in for a frozen large backbone plus learnable projector: an 8x8 patch
average followed by a two-layer tanh projector, small enough for full
central-difference sweeps over every parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LOGIT_CLAMP = 30.0  # keeps the cross-entropy finite


@dataclass(frozen=True)
class FeatureMap:
    """An N x d' grid of projected features (N spatial locations)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"feature map must be (N>=1, d>=1), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature map entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class LossWeights:
    """Strengths of the two alignment terms in the combined objective."""

    lambda_s: float = 0.002
    lambda_g: float = 0.1

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_g < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class AnnealState:
    """Progress-driven schedule for the gradient-reversal strength."""

    progress: float
    gamma: float = 10.0
    scale: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.progress <= 1.0):
            raise ValueError("progress must lie in [0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def anneal_lambda(state: AnnealState) -> float:
    """scale * (2 / (1 + exp(-gamma * p)) - 1): 0 at p=0, saturating at scale."""
    return state.scale * (2.0 / (1.0 + math.exp(-state.gamma * state.progress)) - 1.0)


def spatial_loss(f_real: FeatureMap, f_raster: FeatureMap) -> float:
    """Mean squared row distance (1/N) sum_j ||F_r[j] - F_s[j]||^2.

    The raster side is a detached target: see ``spatial_loss_grads``.
    """
    if f_real.shape != f_raster.shape:
        raise ValueError(f"shape mismatch {f_real.shape} vs {f_raster.shape}")
    diff = f_real.values - f_raster.values
    return float(np.sum(diff * diff) / f_real.shape[0])


def spatial_loss_grads(f_real: FeatureMap, f_raster: FeatureMap):
    """(loss, dL/dF_real, dL/dF_raster); the raster gradient is exactly zero."""
    loss = spatial_loss(f_real, f_raster)
    n = f_real.shape[0]
    d_real = 2.0 / n * (f_real.values - f_raster.values)
    return loss, d_real, np.zeros_like(f_raster.values)


def global_pool(f: FeatureMap) -> np.ndarray:
    """Column mean over the N spatial locations."""
    return f.values.mean(axis=0)


def global_pool_backward(f: FeatureMap, d_pooled: np.ndarray) -> np.ndarray:
    return np.tile(d_pooled / f.shape[0], (f.shape[0], 1))


def grl_backward(upstream_grad: np.ndarray, lam: float) -> np.ndarray:
    """Backward rule of the gradient reversal layer: exactly -lam * upstream.

    The forward pass is the identity.
    """
    return -lam * np.asarray(upstream_grad)


def total_loss(task_loss: float, spatial: float, global_: float,
               weights: LossWeights) -> float:
    """task + lambda_s * spatial + lambda_g * global."""
    return task_loss + weights.lambda_s * spatial + weights.lambda_g * global_


def _init_params(rng: np.random.Generator, n: int, scale=0.2) -> np.ndarray:
    return rng.normal(0.0, scale, size=n)


class TinyEncoder:
    """Patch-average + two-layer tanh projector with closed-form backward.

    Images are (H, W, 3) floats; each 8x8 patch averages to a 3-vector, and
    the shared projector maps it to a d'-dimensional feature, giving an
    (N, d') feature map with N = (H//8) * (W//8).
    """

    def __init__(self, hidden: int = 16, out_dim: int = 8, patch: int = 8,
                 seed: int = 0):
        self.in_dim = 3
        self.hidden = hidden
        self.out_dim = out_dim
        self.patch = patch
        rng = np.random.default_rng(seed)
        self.theta = _init_params(rng, self.n_params())
        if self.n_params() > 5000:
            raise ValueError("encoder too large for finite-difference sweeps")

    def n_params(self) -> int:
        return (self.hidden * self.in_dim + self.hidden
                + self.out_dim * self.hidden + self.out_dim)

    def _views(self, theta=None):
        t = self.theta if theta is None else theta
        h, i, o = self.hidden, self.in_dim, self.out_dim
        ofs = 0
        w1 = t[ofs:ofs + h * i].reshape(h, i); ofs += h * i
        b1 = t[ofs:ofs + h]; ofs += h
        w2 = t[ofs:ofs + o * h].reshape(o, h); ofs += o * h
        b2 = t[ofs:ofs + o]
        return w1, b1, w2, b2

    def patch_average(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError("expected an (H, W, 3) image")
        p = self.patch
        gh, gw = img.shape[0] // p, img.shape[1] // p
        if gh < 1 or gw < 1:
            raise ValueError("image smaller than one patch")
        img = img[: gh * p, : gw * p]
        return img.reshape(gh, p, gw, p, 3).mean(axis=(1, 3)).reshape(-1, 3)

    def forward(self, image: np.ndarray):
        """Returns (FeatureMap, cache) for one image."""
        x = self.patch_average(image)
        w1, b1, w2, b2 = self._views()
        h = np.tanh(x @ w1.T + b1)
        f = np.tanh(h @ w2.T + b2)
        return FeatureMap(f), (x, h, f)

    def backward(self, cache, d_features: np.ndarray) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. the flat parameter vector."""
        x, h, f = cache
        da2 = d_features * (1.0 - f * f)
        w1, b1, w2, b2 = self._views()
        dw2 = da2.T @ h
        db2 = da2.sum(axis=0)
        dh = da2 @ w2
        da1 = dh * (1.0 - h * h)
        dw1 = da1.T @ x
        db1 = da1.sum(axis=0)
        return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])


class DomainClassifier:
    """Two-layer tanh MLP to a single clamped-sigmoid probability."""

    def __init__(self, in_dim: int = 8, hidden: int = 16, seed: int = 1):
        self.in_dim = in_dim
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        self.theta = _init_params(rng, self.n_params())

    def n_params(self) -> int:
        return self.hidden * self.in_dim + self.hidden + self.hidden + 1

    def _views(self, theta=None):
        t = self.theta if theta is None else theta
        h, i = self.hidden, self.in_dim
        ofs = 0
        v1 = t[ofs:ofs + h * i].reshape(h, i); ofs += h * i
        c1 = t[ofs:ofs + h]; ofs += h
        v2 = t[ofs:ofs + h]; ofs += h
        c2 = t[ofs]
        return v1, c1, v2, c2

    def forward(self, g: np.ndarray):
        """Returns (probability in (0, 1), cache) for one pooled vector."""
        g = np.asarray(g, dtype=np.float64)
        v1, c1, v2, c2 = self._views()
        z = np.tanh(v1 @ g + c1)
        logit = float(v2 @ z + c2)
        clamped = min(max(logit, -LOGIT_CLAMP), LOGIT_CLAMP)
        p = 1.0 / (1.0 + math.exp(-clamped))
        return p, (g, z, logit, p)

    def backward(self, cache, d_logit: float):
        """(flat parameter gradient, gradient w.r.t. the input g)."""
        g, z, logit, p = cache
        if abs(logit) >= LOGIT_CLAMP:
            d_logit = 0.0  # the clamp is flat outside the window
        v1, c1, v2, c2 = self._views()
        dv2 = d_logit * z
        dc2 = d_logit
        dz = d_logit * v2
        da1 = dz * (1.0 - z * z)
        dv1 = np.outer(da1, g)
        dc1 = da1
        dg = v1.T @ da1
        return np.concatenate([dv1.ravel(), dc1, dv2, [dc2]]), dg


def global_loss(g: np.ndarray, y: int, clf: DomainClassifier) -> float:
    """Binary cross-entropy -[y log D(g) + (1-y) log(1-D(g))]."""
    p, _ = clf.forward(g)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def global_loss_grads(g: np.ndarray, y: int, clf: DomainClassifier,
                      grl_lambda: Optional[float] = None):
    """(loss, classifier gradient, gradient w.r.t. g).

    With ``grl_lambda`` set, the g-side gradient passes through the reversal
    layer (multiplied by -lambda) on its way to the encoder; the classifier
    gradient is never reversed.
    """
    p, cache = clf.forward(g)
    loss = -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
    d_clf, dg = clf.backward(cache, p - float(y))
    if grl_lambda is not None:
        dg = grl_backward(dg, grl_lambda)
    return loss, d_clf, dg


# ---------------------------------------------------------------------------
# Desk-scale demo


@dataclass
class DemoData:
    """Two-domain synthetic set: images plus a shared regression target."""

    real_images: list
    raster_images: list
    targets: np.ndarray  # one per scene, shared by the domains


def _demo_palettes():
    from .scene import PALETTE, SemanticClass

    raster = dict(PALETTE)
    real = dict(PALETTE)
    real[SemanticClass.VEHICLE] = (210, 60, 30)
    real[SemanticClass.ROAD_SURFACE] = (35, 80, 45)
    real[SemanticClass.LANE_LINE] = (220, 220, 230)
    return real, raster


def make_demo_data(n_scenes: int, seed: int, size: int = 48) -> DemoData:
    """Render paired two-palette views of random box scenes.

    The regression target is the fraction of the raster view covered by
    vehicle boxes; the "real" domain re-renders the same scene with a
    different palette and adds pixel noise.
    """
    from .geometry import CameraIntrinsics, CameraRig, SE3Pose
    from .raster import RenderConfig, render_frame
    from .scene import Cuboid, Polyline, SceneFrame, SemanticClass

    rng = np.random.default_rng(seed)
    real_palette, raster_palette = _demo_palettes()
    cfg_real = RenderConfig(depth_decay=False, palette=real_palette)
    cfg_raster = RenderConfig(depth_decay=False, palette=raster_palette)

    rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    pose = SE3Pose(rot, rot @ -np.array([0.0, 0.0, 1.6]))
    rig = CameraRig(CameraIntrinsics(size / 1.2, size / 1.2, size / 2, size / 2),
                    pose, size, size)
    road = Polyline(np.array([
        [1.0, -8.0, 0.0], [40.0, -8.0, 0.0], [40.0, 8.0, 0.0], [1.0, 8.0, 0.0],
    ]), SemanticClass.ROAD_SURFACE, closed=True)

    real_images, raster_images, targets = [], [], []
    vehicle_rgb = np.array(raster_palette[SemanticClass.VEHICLE], dtype=np.uint8)
    for _ in range(n_scenes):
        k = int(rng.integers(0, 9))
        actors = tuple(
            Cuboid(rng.uniform(2.5, 5.0), rng.uniform(1.5, 2.2),
                   rng.uniform(1.2, 2.0),
                   SE3Pose.from_yaw(rng.uniform(0, 2 * np.pi),
                                    (rng.uniform(4.0, 25.0),
                                     rng.uniform(-7.0, 7.0), 0.0)))
            for _ in range(k)
        )
        frame = SceneFrame(0.0, (road,), actors, (), (rig,))
        fb_raster = render_frame(frame, 0, cfg_raster)
        fb_real = render_frame(frame, 0, cfg_real)
        coverage = float(np.mean(np.all(fb_raster.color == vehicle_rgb, axis=2)))
        raster_images.append(fb_raster.color.astype(np.float64) / 255.0)
        noisy = fb_real.color.astype(np.float64) / 255.0
        noisy = np.clip(noisy + rng.normal(0.0, 0.02, size=noisy.shape), 0.0, 1.0)
        real_images.append(noisy)
        targets.append(coverage)
    return DemoData(real_images, raster_images, np.array(targets))


def align_demo(real_set: Sequence, raster_set: Sequence,
               paired_subset: Sequence, steps: int, seed: int,
               weights: LossWeights = LossWeights(),
               use_grl: bool = True,
               lr: float = 0.05,
               batch: int = 16,
               holdout: Optional[dict] = None) -> dict:
    """Train encoder + domain classifier + task head with the combined loss.

    real_set / raster_set: sequences of (image, target) pairs; paired_subset:
    (real_image, raster_image) pairs of the same scene.  Plain gradient
    descent, deterministic per seed.  Returns a JSON-able report with
    per-step losses, the reversal-strength trace, final domain-classifier
    accuracy, and a linear-probe error on real-domain features.
    """
    if not real_set or not raster_set:
        raise ValueError("align_demo needs non-empty real and raster sets")
    rng = np.random.default_rng(seed)
    enc = TinyEncoder(seed=seed)
    clf = DomainClassifier(in_dim=enc.out_dim, seed=seed + 1)
    head_w = np.zeros(enc.out_dim)
    head_b = 0.0

    def encode_pool(image):
        feat, cache = enc.forward(image)
        return feat, cache, global_pool(feat)

    trace = {"task": [], "spatial": [], "global": [], "lambda": [],
             "total": []}
    for step in range(steps):
        progress = step / max(steps - 1, 1)
        lam = anneal_lambda(AnnealState(progress)) if use_grl else 0.0
        d_enc = np.zeros_like(enc.theta)
        d_clf = np.zeros_like(clf.theta)
        d_head_w = np.zeros_like(head_w)
        d_head_b = 0.0

        # task supervision on the abundant raster domain
        idx = rng.integers(0, len(raster_set), size=min(batch, len(raster_set)))
        task_loss = 0.0
        for i in idx:
            img, target = raster_set[i]
            feat, cache, g = encode_pool(img)
            pred = float(head_w @ g + head_b)
            err = pred - target
            task_loss += err * err
            d_pred = 2.0 * err / len(idx)
            d_head_w += d_pred * g
            d_head_b += d_pred
            d_enc += enc.backward(cache, global_pool_backward(feat, d_pred * head_w))
        task_loss /= len(idx)

        # paired spatial alignment; raster features are a detached target
        sp_loss = 0.0
        if paired_subset and weights.lambda_s > 0:
            pidx = rng.integers(0, len(paired_subset),
                                size=min(batch, len(paired_subset)))
            for i in pidx:
                real_img, raster_img = paired_subset[i]
                f_real, cache_r, _ = encode_pool(real_img)
                f_raster, _ = enc.forward(raster_img)
                loss, d_real, _ = spatial_loss_grads(f_real, f_raster)
                sp_loss += loss
                d_enc += enc.backward(
                    cache_r, weights.lambda_s * d_real / len(pidx))
            sp_loss /= len(pidx)

        # adversarial global alignment over both domains
        gl_loss = 0.0
        half = max(batch // 2, 1)
        ridx = rng.integers(0, len(real_set), size=half)
        sidx = rng.integers(0, len(raster_set), size=half)
        samples = [(real_set[i][0], 1) for i in ridx]
        samples += [(raster_set[i][0], 0) for i in sidx]
        for img, label in samples:
            feat, cache, g = encode_pool(img)
            loss, dc, dg = global_loss_grads(g, label, clf, grl_lambda=None)
            gl_loss += loss
            d_clf += weights.lambda_g * dc / len(samples)
            if use_grl:
                dg_enc = grl_backward(dg, lam) * weights.lambda_g / len(samples)
                d_enc += enc.backward(cache, global_pool_backward(feat, dg_enc))
        gl_loss /= len(samples)

        enc.theta -= lr * d_enc
        clf.theta -= lr * d_clf
        head_w -= lr * d_head_w
        head_b -= lr * d_head_b

        trace["task"].append(task_loss)
        trace["spatial"].append(sp_loss)
        trace["global"].append(gl_loss)
        trace["lambda"].append(lam)
        trace["total"].append(total_loss(task_loss, sp_loss, gl_loss, weights))

    report = {
        "seed": seed,
        "steps": steps,
        "use_grl": use_grl,
        "weights": {"lambda_s": weights.lambda_s, "lambda_g": weights.lambda_g},
        "trace": trace,
        "task_note": "synthetic regression target stands in for the planning loss",
    }

    if holdout is not None:
        correct = 0
        total = 0
        for img, label in holdout["domain"]:
            _, _, g = encode_pool(img)
            p, _ = clf.forward(g)
            correct += int((p > 0.5) == bool(label))
            total += 1
        report["domain_accuracy"] = correct / total

        feats = np.stack([encode_pool(img)[2] for img, _ in holdout["probe_train"]])
        ys = np.array([t for _, t in holdout["probe_train"]])
        ridge = 1e-6 * np.eye(feats.shape[1] + 1)
        a = np.hstack([feats, np.ones((len(feats), 1))])
        coef = np.linalg.solve(a.T @ a + ridge, a.T @ ys)
        test_feats = np.stack([encode_pool(img)[2] for img, _ in holdout["probe_test"]])
        test_ys = np.array([t for _, t in holdout["probe_test"]])
        pred = np.hstack([test_feats, np.ones((len(test_feats), 1))]) @ coef
        report["probe_mse"] = float(np.mean((pred - test_ys) ** 2))
    return report


def run_demo_with_data(steps: int, seed: int, n_scenes: int = 160,
                       use_grl: bool = True,
                       weights: LossWeights = LossWeights()) -> dict:
    """Generate two-palette data, train, and evaluate on held-out scenes."""
    data = make_demo_data(n_scenes, derive_data_seed(seed))
    n_train = int(0.75 * n_scenes)
    real_train = [(img, t) for img, t in zip(data.real_images[:n_train],
                                             data.targets[:n_train])]
    raster_train = [(img, t) for img, t in zip(data.raster_images[:n_train],
                                               data.targets[:n_train])]
    paired = list(zip(data.real_images[:n_train], data.raster_images[:n_train]))
    domain_holdout = [(img, 1) for img in data.real_images[n_train:]]
    domain_holdout += [(img, 0) for img in data.raster_images[n_train:]]
    holdout = {
        "domain": domain_holdout,
        "probe_train": real_train,
        "probe_test": [(img, t) for img, t in zip(data.real_images[n_train:],
                                                  data.targets[n_train:])],
    }
    return align_demo(real_train, raster_train, paired, steps, seed,
                      weights=weights, use_grl=use_grl, holdout=holdout)


def derive_data_seed(seed: int) -> int:
    from .augment import derive_seed

    return derive_seed(seed, "align-demo-data")
