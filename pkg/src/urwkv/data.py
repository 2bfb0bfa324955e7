"""Synthetic paired corpus: procedural references and low-light degradation.

References are procedural RGB scenes (smooth cosine fields, a gradient, a
few random rectangles and discs, light texture noise) so the corpus is fully
reproducible from a seed. Degradation composes gamma compression, gain
attenuation, linear motion blur, and additive Gaussian noise, in that order,
clamped to [0, 1]:

    degraded = clamp(blur(gain * ref ** gamma) + noise)

Images travel as binary PPM (P6, maxval 255); encoding quantizes to uint8
and decoding is bit-exact against what was written.

Corpus layout: ``<root>/low/<id>.ppm``, ``<root>/gt/<id>.ppm`` plus a
``manifest.json`` recording ids and degradation recipes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "write_ppm",
    "read_ppm",
    "DegradationRecipe",
    "random_recipe",
    "motion_kernel",
    "synth_reference",
    "degrade",
    "generate_corpus",
    "load_corpus",
    "ImagePair",
]

GAMMA_RANGE = (1.5, 3.5)
GAIN_RANGE = (0.2, 0.6)
NOISE_RANGE = (0.01, 0.06)
BLUR_LEN_RANGE = (0, 15)


# ----------------------------------------------------------------------
# PPM P6


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Write a CHW float image in [0, 1] as binary PPM (maxval 255)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"expected a 3xHxW image, got {image.shape}")
    q = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape[1], q.shape[2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(q.transpose(1, 2, 0).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    """Read a binary PPM into a CHW float64 image in [0, 1]."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"image file not found: {path}") from None
    if not raw.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM (P6) file")
    # header: magic, width, height, maxval; whitespace separated, # comments
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PPM header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    expected = w * h * 3
    if len(raw) - pos < expected:
        raise DataError(f"{path}: payload smaller than {w}x{h} pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=pos)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0


# ----------------------------------------------------------------------
# reference synthesis


def synth_reference(size: int, rng: np.random.Generator) -> np.ndarray:
    """Procedural RGB reference image, (3, size, size) float64 in [0, 1]."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    img = np.empty((3, size, size))
    for ch in range(3):
        field = rng.uniform(0.35, 0.65) + (rng.uniform(-0.25, 0.25) * xx + rng.uniform(-0.25, 0.25) * yy)
        for _ in range(4):
            fx, fy = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            field += rng.uniform(0.04, 0.12) * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
        img[ch] = field
    for _ in range(3):  # rectangles
        y0, x0 = rng.integers(0, size - 4, size=2)
        y1 = rng.integers(y0 + 2, min(y0 + max(3, size // 2), size))
        x1 = rng.integers(x0 + 2, min(x0 + max(3, size // 2), size))
        color = rng.uniform(0.15, 0.85, size=3)
        blend = rng.uniform(0.5, 0.9)
        img[:, y0:y1, x0:x1] = (1 - blend) * img[:, y0:y1, x0:x1] + blend * color[:, None, None]
    for _ in range(2):  # discs
        cy, cx = rng.uniform(0.15, 0.85, size=2) * size
        radius = rng.uniform(0.08, 0.25) * size
        mask = (yy * size - cy) ** 2 + (xx * size - cx) ** 2 <= radius**2
        color = rng.uniform(0.15, 0.85, size=3)
        blend = rng.uniform(0.5, 0.9)
        img[:, mask] = (1 - blend) * img[:, mask] + blend * color[:, None]
    img += rng.normal(0.0, 0.015, size=img.shape)
    return np.clip(img, 0.0, 1.0)


# ----------------------------------------------------------------------
# degradation


@dataclass
class DegradationRecipe:
    gamma: float
    gain: float
    noise_sigma: float
    blur_len: int
    blur_angle: float


def random_recipe(rng: np.random.Generator) -> DegradationRecipe:
    return DegradationRecipe(
        gamma=float(rng.uniform(*GAMMA_RANGE)),
        gain=float(rng.uniform(*GAIN_RANGE)),
        noise_sigma=float(rng.uniform(*NOISE_RANGE)),
        blur_len=int(rng.integers(BLUR_LEN_RANGE[0], BLUR_LEN_RANGE[1] + 1)),
        blur_angle=float(rng.uniform(0.0, np.pi)),
    )


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Linear motion PSF: a rasterized segment of the given pixel length.

    Sub-pixel samples along the segment are splatted bilinearly onto an
    odd-sized grid and normalized to sum 1. Length <= 1 is the identity.
    """
    if length <= 1:
        return np.ones((1, 1))
    half = (length - 1) / 2.0
    size = int(np.ceil(half)) * 2 + 1
    kernel = np.zeros((size, size))
    center = size // 2
    n_samples = max(length * 8, 16)
    offsets = np.linspace(-half, half, n_samples)
    dy, dx = np.sin(angle), np.cos(angle)
    for o in offsets:
        y = center + o * dy
        x = center + o * dx
        # clamp so the +1 splat target stays in the grid (endpoints can land
        # exactly on the last row/column)
        y0 = min(int(np.floor(y)), size - 2)
        x0 = min(int(np.floor(x)), size - 2)
        fy, fx = y - y0, x - x0
        kernel[y0, x0] += (1 - fy) * (1 - fx)
        kernel[y0, x0 + 1] += (1 - fy) * fx
        kernel[y0 + 1, x0] += fy * (1 - fx)
        kernel[y0 + 1, x0 + 1] += fy * fx
    return kernel / kernel.sum()


def _convolve_reflect(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Channelwise 2-D correlation with reflect padding (size preserving)."""
    kh, kw = kernel.shape
    if kh == 1 and kw == 1:
        return image * kernel[0, 0]
    ph, pw = kh // 2, kw // 2
    padded = np.pad(image, ((0, 0), (ph, ph), (pw, pw)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    return np.einsum("chwij,ij->chw", windows, kernel)


def degrade(reference: np.ndarray, recipe: DegradationRecipe, rng: np.random.Generator) -> np.ndarray:
    dark = recipe.gain * np.power(reference, recipe.gamma)
    blurred = _convolve_reflect(dark, motion_kernel(recipe.blur_len, recipe.blur_angle))
    noisy = blurred + rng.normal(0.0, recipe.noise_sigma, size=reference.shape)
    return np.clip(noisy, 0.0, 1.0)


# ----------------------------------------------------------------------
# corpus


@dataclass
class ImagePair:
    pair_id: str
    low: np.ndarray
    gt: np.ndarray


def generate_corpus(root: str | Path, count: int, size: int, seed: int) -> list[str]:
    """Write a paired corpus under root; returns the pair ids."""
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(count)
    ids = []
    manifest = {"size": size, "seed": seed, "pairs": []}
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        pair_id = f"pair_{i:04d}"
        ref = synth_reference(size, rng)
        recipe = random_recipe(rng)
        low = degrade(ref, recipe, rng)
        write_ppm(root / "gt" / f"{pair_id}.ppm", ref)
        write_ppm(root / "low" / f"{pair_id}.ppm", low)
        manifest["pairs"].append({"id": pair_id, "recipe": asdict(recipe)})
        ids.append(pair_id)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return ids


def load_corpus(root: str | Path) -> list[ImagePair]:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    pairs = []
    for entry in manifest["pairs"]:
        pair_id = entry["id"]
        low_path = root / "low" / f"{pair_id}.ppm"
        gt_path = root / "gt" / f"{pair_id}.ppm"
        if not low_path.exists() or not gt_path.exists():
            raise DataError(f"corpus pair {pair_id} has missing files under {root}")
        pairs.append(ImagePair(pair_id, read_ppm(low_path), read_ppm(gt_path)))
    if not pairs:
        raise DataError(f"corpus under {root} is empty")
    return pairs
