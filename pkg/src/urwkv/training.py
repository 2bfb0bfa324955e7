"""Training loop: composite loss, Adam, cosine schedule, augmentation.

The loss is w_l1 * mean|pred - gt| + w_ssim * (1 - SSIM) + w_perc * feature
distance under a frozen random conv encoder. The SSIM term is built from
autodiff ops but follows the metrics implementation literally (same window,
same constants, same valid-mode filtering), so the logged loss component and
the reference metric agree to float precision.

Logs are CSV with fixed columns ``step,lr,loss,l1,ssim_term,psnr``; runs
with the same seed and data produce byte-identical logs. Non-finite losses
abort immediately (exit code 3 at the CLI) rather than training through NaN.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .autodiff import Tensor, conv2d, crop_tl, narrow, no_grad
from .checkpoint import save_checkpoint
from .config import UrwkvConfig
from .errors import NumericsError
from .model import RestorationModel
from .nn import Module

__all__ = [
    "ssim_loss_term",
    "PerceptualEncoder",
    "composite_loss",
    "cosine_lr",
    "Adam",
    "random_crop",
    "augment_pair",
    "train_model",
    "evaluate_pairs",
    "TrainResult",
    "LOG_COLUMNS",
]

LOG_COLUMNS = ("step", "lr", "loss", "l1", "ssim_term", "psnr")


# ----------------------------------------------------------------------
# loss terms


def _filter_valid_graph(plane: Tensor, taps_col: Tensor, taps_row: Tensor) -> Tensor:
    rows = conv2d(plane, taps_col)
    return conv2d(rows, taps_row)


def ssim_loss_term(pred: Tensor, target: Tensor) -> Tensor:
    """1 - SSIM as a graph scalar; mirrors metrics.ssim exactly."""
    c, h, w = pred.data.shape
    if h < metrics.SSIM_WINDOW or w < metrics.SSIM_WINDOW:
        raise ValueError(f"image smaller than the {metrics.SSIM_WINDOW}x{metrics.SSIM_WINDOW} window")
    taps = metrics.gaussian_window()
    k = taps.size
    taps_col = Tensor(taps.reshape(1, 1, k, 1))
    taps_row = Tensor(taps.reshape(1, 1, 1, k))
    c1 = metrics.SSIM_K1 * metrics.SSIM_K1
    c2 = metrics.SSIM_K2 * metrics.SSIM_K2
    scores = []
    for ch in range(c):
        x = narrow(pred, 0, ch, 1)
        y = narrow(target, 0, ch, 1)
        mx = _filter_valid_graph(x, taps_col, taps_row)
        my = _filter_valid_graph(y, taps_col, taps_row)
        mxx = _filter_valid_graph(x * x, taps_col, taps_row)
        myy = _filter_valid_graph(y * y, taps_col, taps_row)
        mxy = _filter_valid_graph(x * y, taps_col, taps_row)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        score = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        scores.append(score.mean())
    mean_score = scores[0]
    for s in scores[1:]:
        mean_score = mean_score + s
    return 1.0 - mean_score * (1.0 / c)


class PerceptualEncoder(Module):
    """Frozen random conv stack for feature-space loss.

    Random features are a serviceable perceptual proxy when no pretrained
    network is available; the weights are fixed (not parameters) so the term
    only shapes the restoration model's gradients.
    """

    def __init__(self, seed: int = 1234):
        rng = np.random.default_rng(seed)
        # 4x4 stride-2 downsampling stays integral for every even extent
        self.convs = [
            _frozen_conv(rng, 3, 8, 4),
            _frozen_conv(rng, 8, 16, 4),
            _frozen_conv(rng, 16, 16, 3),
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for w in self.convs[:-1]:
            c, h, wd = x.data.shape
            if h % 2 or wd % 2:
                x = crop_tl(x, h - h % 2, wd - wd % 2)
            x = conv2d(x, w, stride=2, padding=1).relu()
        return conv2d(x, self.convs[-1], padding=1)

    def distance(self, pred: Tensor, target: Tensor) -> Tensor:
        diff = self(pred) - self(target)
        return (diff * diff).mean()


def _frozen_conv(rng, c_in, c_out, k):
    return Tensor(rng.normal(0.0, (c_in * k * k) ** -0.5, size=(c_out, c_in, k, k)), requires_grad=False)


def composite_loss(
    pred: Tensor,
    target: Tensor,
    weights,
    perceptual: PerceptualEncoder | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the loss terms plus a float breakdown for logging."""
    l1 = (pred - target).abs().mean()
    loss = weights.w_l1 * l1
    parts = {"l1": float(l1.data)}
    if weights.w_ssim > 0:
        ssim_term = ssim_loss_term(pred, target)
        loss = loss + weights.w_ssim * ssim_term
        parts["ssim_term"] = float(ssim_term.data)
    else:
        parts["ssim_term"] = 0.0
    if weights.w_perceptual > 0:
        if perceptual is None:
            raise ValueError("perceptual weight is positive but no encoder was supplied")
        perc = perceptual.distance(pred, target)
        loss = loss + weights.w_perceptual * perc
        parts["perceptual"] = float(perc.data)
    return loss, parts


# ----------------------------------------------------------------------
# optimization


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Half-cosine decay from lr_max (step 0) to lr_min (step total)."""
    if total_steps <= 0:
        return lr_min
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * frac))


class Adam:
    """Adam with bias correction; moments keyed by parameter name."""

    def __init__(self, named_params: list[tuple[str, Tensor]], beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.named_params = named_params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in named_params}

    def step(self, lr: float) -> None:
        for name, p in self.named_params:
            if p.grad is None:
                raise RuntimeError(f"optimizer step before backward: no gradient for {name}")
        self.step_count += 1
        t = self.step_count
        for name, p in self.named_params:
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * (g * g)
            m_hat = self.m[name] / (1 - self.beta1**t)
            v_hat = self.v[name] / (1 - self.beta2**t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.zero_grad()

    def state_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, _ in self.named_params:
            out.append((f"adam.m.{name}", self.m[name]))
            out.append((f"adam.v.{name}", self.v[name]))
        return out

    def load_state(self, tensors: dict[str, np.ndarray], step_count: int) -> None:
        for name, p in self.named_params:
            self.m[name] = tensors[f"adam.m.{name}"].astype(np.float64).reshape(p.data.shape)
            self.v[name] = tensors[f"adam.v.{name}"].astype(np.float64).reshape(p.data.shape)
        self.step_count = step_count


# ----------------------------------------------------------------------
# data handling


def random_crop(low: np.ndarray, gt: np.ndarray, size: int, rng: np.random.Generator):
    """Identical random window from both images; size is capped at the extent."""
    h, w = low.shape[1], low.shape[2]
    ch, cw = min(size, h), min(size, w)
    y = int(rng.integers(0, h - ch + 1))
    x = int(rng.integers(0, w - cw + 1))
    return low[:, y : y + ch, x : x + cw], gt[:, y : y + ch, x : x + cw]


def augment_pair(low: np.ndarray, gt: np.ndarray, rng: np.random.Generator):
    """Random dihedral transform applied identically to both images."""
    if rng.integers(0, 2):
        low, gt = low[:, :, ::-1], gt[:, :, ::-1]
    if rng.integers(0, 2):
        low, gt = low[:, ::-1, :], gt[:, ::-1, :]
    quarter = int(rng.integers(0, 4))
    if quarter:
        low = np.rot90(low, quarter, axes=(1, 2))
        gt = np.rot90(gt, quarter, axes=(1, 2))
    return np.ascontiguousarray(low), np.ascontiguousarray(gt)


# ----------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    history: list[dict]
    best_psnr: float
    best_step: int
    log_text: str
    best_path: Path | None
    last_path: Path | None


def _format_row(values) -> list[str]:
    return [v if isinstance(v, str) else repr(v) for v in values]


def train_model(
    config: UrwkvConfig,
    pairs,
    out_dir: str | Path | None = None,
    model: RestorationModel | None = None,
    resume_optimizer: Adam | None = None,
) -> TrainResult:
    """Optimize a model on ImagePair samples per the config's train block.

    Writes train_log.csv plus best/last checkpoints under out_dir when given.
    Raises NumericsError (with the offending pair id) on a non-finite loss.
    """
    config.validate()
    if model is None:
        model = RestorationModel(config)
    named = model.named_parameters()
    opt = resume_optimizer or Adam(named)
    perceptual = PerceptualEncoder() if config.loss.w_perceptual > 0 else None
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    log_buffer = io.StringIO()
    writer = csv.writer(log_buffer, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)

    history: list[dict] = []
    best_psnr = -np.inf
    best_step = -1
    best_path = out_path / "best.ckpt" if out_path else None
    last_path = out_path / "last.ckpt" if out_path else None

    def snapshot(path: Path, step: int, psnr_value: float):
        tensors = [(name, p.data) for name, p in named] + opt.state_tensors()
        meta = {
            "config": config.to_dict(),
            "step": step,
            "adam_step": opt.step_count,
            "best_psnr": psnr_value,
        }
        save_checkpoint(path, tensors, meta)

    total = config.train.steps
    for step in range(total):
        lr = float(cosine_lr(step, total, config.train.lr_max, config.train.lr_min))
        pair = pairs[int(rng.integers(0, len(pairs)))]
        low, gt = random_crop(pair.low, pair.gt, config.train.crop_size, rng)
        if config.train.augment:
            low, gt = augment_pair(low, gt, rng)

        pred = model.forward(Tensor(low))
        loss, parts = composite_loss(pred, Tensor(gt), config.loss, perceptual)
        loss_value = float(loss.data)
        if not np.isfinite(loss_value):
            raise NumericsError(f"non-finite loss {loss_value} at step {step} on pair {pair.pair_id}")

        opt.zero_grad()
        loss.backward()
        opt.step(lr)

        psnr_value = metrics.psnr(pred.data, gt)
        row = {
            "step": step,
            "lr": lr,
            "loss": loss_value,
            "l1": parts["l1"],
            "ssim_term": parts["ssim_term"],
            "psnr": psnr_value,
        }
        history.append(row)
        if step % config.train.log_every == 0:
            writer.writerow(_format_row([row[c] for c in LOG_COLUMNS]))
        if psnr_value > best_psnr:
            best_psnr = psnr_value
            best_step = step
            if best_path is not None:
                snapshot(best_path, step, psnr_value)
        if out_path is not None and config.train.ckpt_every and (step + 1) % config.train.ckpt_every == 0:
            snapshot(last_path, step, best_psnr)

    if last_path is not None:
        snapshot(last_path, total - 1, best_psnr)
    log_text = log_buffer.getvalue()
    if out_path is not None:
        (out_path / "train_log.csv").write_text(log_text)
    return TrainResult(history, float(best_psnr), best_step, log_text, best_path, last_path)


def evaluate_pairs(model: RestorationModel, pairs) -> list[dict]:
    """Full-image metrics for each pair plus the degraded-input baseline."""
    rows = []
    for pair in pairs:
        with no_grad():
            pred = model.forward(Tensor(pair.low))
        rows.append(
            {
                "id": pair.pair_id,
                "psnr": metrics.psnr(pred.data, pair.gt),
                "ssim": metrics.ssim(pred.data, pair.gt),
                "input_psnr": metrics.psnr(pair.low, pair.gt),
                "input_ssim": metrics.ssim(pair.low, pair.gt),
            }
        )
    return rows
