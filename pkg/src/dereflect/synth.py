"""Synthetic reflection-image generation.

A corrupted observation is built from a clean transmission image T and a
reflection image R as

    I = alpha * T + (1 - alpha) * (K (*) (S . R'))

where R' is R with its saturation reduced by a factor f, S is a saliency
map weighting the reflection per pixel, K is a blending kernel ((*) is
zero-padded same-size convolution), and alpha in (0.3, 0.5) controls the
mix. Three kernel families model the common reflection regimes: a one-pulse
kernel (reflection in focus), an isotropic Gaussian (defocused reflection),
and a two-pulse "ghosting" kernel (double image from refraction in thick
glass). The degenerate configuration S == 1, f == 1, one-pulse kernel
reproduces the plain linear blend alpha*T + (1-alpha)*R bit-for-bit.

All outputs are fully determined by (T, R, recipe); sampling a recipe from
a seed is deterministic as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .validation import check_image, check_image_pair

__all__ = [
    "ONE_PULSE",
    "GAUSSIAN",
    "GHOSTING",
    "KERNEL_KINDS",
    "SALIENCY_MODES",
    "BlendKernel",
    "SynthRecipe",
    "SampleRanges",
    "make_one_pulse",
    "make_gaussian",
    "make_ghosting",
    "saliency",
    "desaturate",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "convolve_same",
    "linear_blend",
    "synthesize",
    "sample_recipe",
    "format_recipe_sidecar",
    "parse_recipe_sidecar",
    "center_crop",
    "resize_bilinear",
    "match_dims",
]

ONE_PULSE = "one_pulse"
GAUSSIAN = "gaussian"
GHOSTING = "ghosting"
KERNEL_KINDS = (ONE_PULSE, GAUSSIAN, GHOSTING)

SALIENCY_ONES = "ones"
SALIENCY_CONTRAST = "contrast_prior"
SALIENCY_MODES = (SALIENCY_ONES, SALIENCY_CONTRAST)


@dataclass(frozen=True)
class BlendKernel:
    """A normalized 2-D blending kernel with provenance of how it was built."""

    kind: str
    taps: np.ndarray
    sigma: float | None = None
    shift: tuple[int, int] | None = None
    a2: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2:
            raise ValueError(f"kernel taps must be 2-D, got shape {taps.shape}")
        if np.any(taps < 0):
            raise ValueError("kernel taps must be non-negative")
        total = float(taps.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"kernel taps must sum to 1, got {total!r}")
        object.__setattr__(self, "taps", taps)

    def __eq__(self, other):
        if not isinstance(other, BlendKernel):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.sigma == other.sigma
            and self.shift == other.shift
            and self.a2 == other.a2
            and self.taps.shape == other.taps.shape
            and np.array_equal(self.taps, other.taps)
        )


def make_one_pulse() -> BlendKernel:
    """Single unit tap: convolution with it is the identity."""
    return BlendKernel(ONE_PULSE, np.ones((1, 1), dtype=np.float64))


def make_gaussian(sigma: float) -> BlendKernel:
    """Isotropic Gaussian kernel; side length 2*ceil(2*sigma)+1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = math.ceil(2.0 * sigma)
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    taps = np.outer(g1, g1)
    taps /= taps.sum()
    return BlendKernel(GAUSSIAN, taps, sigma=float(sigma))


def make_ghosting(shift: tuple[int, int], a2: float) -> BlendKernel:
    """Two-pulse kernel: unit tap at the origin plus a2 at the given offset.

    Both taps are normalized to sum 1, i.e. 1/(1+a2) and a2/(1+a2).
    """
    dy, dx = int(shift[0]), int(shift[1])
    if dy == 0 and dx == 0:
        raise ValueError("ghosting shift must be nonzero")
    if not 0.0 < a2 < 1.0:
        raise ValueError(f"secondary amplitude must be in (0, 1), got {a2}")
    taps = np.zeros((2 * abs(dy) + 1, 2 * abs(dx) + 1), dtype=np.float64)
    cy, cx = abs(dy), abs(dx)
    taps[cy, cx] = 1.0 / (1.0 + a2)
    taps[cy + dy, cx + dx] = a2 / (1.0 + a2)
    return BlendKernel(GHOSTING, taps, shift=(dy, dx), a2=float(a2))


def convolve_same(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-padded same-size convolution of an (H, W, C) image.

    out(y, x) = sum_t a_t * img(y - t_dy, x - t_dx), with tap offsets
    measured from the kernel center; an impulse input reproduces the taps
    at their offsets. Computed as a direct sum over nonzero taps so the
    one-pulse kernel is an exact identity.
    """
    img = np.asarray(img)
    taps = np.asarray(taps, dtype=np.float64)
    h, w = img.shape[:2]
    cy, cx = taps.shape[0] // 2, taps.shape[1] // 2
    out = np.zeros_like(img)
    for iy, ix in zip(*np.nonzero(taps)):
        a = img.dtype.type(taps[iy, ix])
        dy, dx = iy - cy, ix - cx
        # out[y, x] += a * img[y - dy, x - dx] on the overlapping region
        ys_out = slice(max(dy, 0), h + min(dy, 0))
        xs_out = slice(max(dx, 0), w + min(dx, 0))
        ys_in = slice(max(-dy, 0), h + min(-dy, 0))
        xs_in = slice(max(-dx, 0), w + min(-dx, 0))
        out[ys_out, xs_out] += a * img[ys_in, xs_in]
    return out


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized hexcone RGB -> HSV on an (..., 3) float array in [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    v = maxc
    c = maxc - minc
    s = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        maxc == r,
        np.mod((g - b) / safe_c, 6.0),
        np.where(maxc == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized hexcone HSV -> RGB; inverse of rgb_to_hsv."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = np.mod(h, 1.0) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def desaturate(image: np.ndarray, f: float) -> np.ndarray:
    """Scale the HSV saturation channel by f in (0, 1].

    f == 1 short-circuits to an exact identity so the degenerate synthesis
    configuration stays bit-identical to the plain linear blend.
    """
    image = check_image(image, "image")
    if not 0.0 < f <= 1.0:
        raise ValueError(f"desaturation factor must be in (0, 1], got {f}")
    if f == 1.0:
        return image.copy()
    hsv = rgb_to_hsv(image)
    hsv[..., 1] *= f
    rgb = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return rgb.astype(np.float32)


def saliency(image: np.ndarray, mode: str = SALIENCY_CONTRAST) -> np.ndarray:
    """Per-pixel weight in [0, 1] emphasizing the dominant reflected object.

    "ones" returns a flat map (no reweighting). "contrast_prior" scores each
    pixel by its color distance from the image mean, multiplied by a
    centered Gaussian spatial prior, then min-max normalizes; constant-color
    images fall back to all-ones.
    """
    image = check_image(image, "image")
    h, w = image.shape[:2]
    if mode == SALIENCY_ONES:
        return np.ones((h, w), dtype=np.float32)
    if mode != SALIENCY_CONTRAST:
        raise ValueError(f"unknown saliency mode {mode!r}")
    img64 = image.astype(np.float64)
    dist = np.sqrt(((img64 - img64.mean(axis=(0, 1))) ** 2).sum(axis=-1))
    # Gaussian center prior over normalized [-1, 1] pixel-center coordinates
    v = (2.0 * np.arange(h) + 1.0) / h - 1.0
    u = (2.0 * np.arange(w) + 1.0) / w - 1.0
    prior = np.exp(-(v[:, None] ** 2 + u[None, :] ** 2) / (2.0 * 0.5**2))
    raw = dist * prior
    lo, hi = raw.min(), raw.max()
    if hi - lo <= 0.0:
        return np.ones((h, w), dtype=np.float32)
    return ((raw - lo) / (hi - lo)).astype(np.float32)


@dataclass(frozen=True)
class SynthRecipe:
    """Everything needed to re-create one synthesized observation.

    Sampled recipes keep alpha in (0.3, 0.5) and desat_factor in [0.5, 0.8];
    directly constructed recipes may use any mathematically valid values
    (e.g. desat_factor 1.0 for the exact-linear degenerate configuration).
    """

    alpha: float
    kernel: BlendKernel
    saliency_mode: str = SALIENCY_CONTRAST
    desat_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.desat_factor <= 1.0:
            raise ValueError(
                f"desat_factor must be in (0, 1], got {self.desat_factor}"
            )
        if self.saliency_mode not in SALIENCY_MODES:
            raise ValueError(f"unknown saliency mode {self.saliency_mode!r}")


@dataclass(frozen=True)
class SampleRanges:
    """Sampling windows for recipe parameters (defaults are the full windows)."""

    alpha: tuple[float, float] = (0.3, 0.5)
    desat: tuple[float, float] = (0.5, 0.8)
    sigma: tuple[float, float] = (1.0, 5.0)
    ghost_shift: tuple[int, int] = (5, 15)
    ghost_amp: tuple[float, float] = (0.2, 0.5)

    def __post_init__(self):
        def within(name, window, bounds):
            lo, hi = window
            if not (bounds[0] <= lo < hi <= bounds[1]):
                raise ValueError(
                    f"{name} window {window} must satisfy "
                    f"{bounds[0]} <= min < max <= {bounds[1]}"
                )

        within("alpha", self.alpha, (0.3, 0.5))
        within("desat", self.desat, (0.5, 0.8))
        within("sigma", self.sigma, (0.25, 16.0))
        within("ghost_amp", self.ghost_amp, (0.0, 1.0))
        lo, hi = self.ghost_shift
        if not (1 <= lo <= hi):
            raise ValueError(f"ghost_shift window {self.ghost_shift} is invalid")


def sample_recipe(
    seed: int,
    ranges: SampleRanges = SampleRanges(),
    saliency_mode: str = SALIENCY_CONTRAST,
) -> SynthRecipe:
    """Draw one recipe, fully determined by the seed.

    alpha ~ U(0.3, 0.5) (open), kernel kind uniform over the three types,
    sigma ~ U(1, 5) for Gaussian, ghosting shift magnitude ~ U{5..15} px at
    a uniform random direction with a2 ~ U(0.2, 0.5), f ~ U(0.5, 0.8).
    """
    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(*ranges.alpha))
    while not ranges.alpha[0] < alpha < ranges.alpha[1]:
        alpha = float(rng.uniform(*ranges.alpha))
    kind = KERNEL_KINDS[int(rng.integers(3))]
    if kind == ONE_PULSE:
        kernel = make_one_pulse()
    elif kind == GAUSSIAN:
        kernel = make_gaussian(float(rng.uniform(*ranges.sigma)))
    else:
        magnitude = int(rng.integers(ranges.ghost_shift[0], ranges.ghost_shift[1] + 1))
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        dy = int(round(magnitude * math.sin(angle)))
        dx = int(round(magnitude * math.cos(angle)))
        if dy == 0 and dx == 0:  # unreachable for magnitude >= 1, kept as a guard
            dx = magnitude
        kernel = make_ghosting((dy, dx), float(rng.uniform(*ranges.ghost_amp)))
    f = float(rng.uniform(*ranges.desat))
    return SynthRecipe(alpha, kernel, saliency_mode, f, int(seed))


def linear_blend(t_img: np.ndarray, r_img: np.ndarray, alpha: float) -> np.ndarray:
    """Plain linear mix alpha*T + (1-alpha)*R in float32."""
    a = np.float32(alpha)
    return a * t_img + (np.float32(1.0) - a) * r_img


def synthesize(
    t_img: np.ndarray, r_img: np.ndarray, recipe: SynthRecipe
) -> np.ndarray:
    """Build the corrupted observation for a (transmission, reflection) pair.

    Order of operations: desaturate R by f, weight by the saliency of the
    desaturated layer, convolve with the blending kernel, mix with T, clip
    to [0, 1]. The result is a pure function of (T, R, recipe).
    """
    t_img, r_img = check_image_pair(t_img, r_img, ("transmission", "reflection"))
    r_desat = desaturate(r_img, recipe.desat_factor)
    s_map = saliency(r_desat, recipe.saliency_mode)
    weighted = r_desat * s_map[:, :, None]
    blurred = convolve_same(weighted, recipe.kernel.taps)
    blended = linear_blend(t_img, blurred, recipe.alpha)
    return np.clip(blended, 0.0, 1.0)


def format_recipe_sidecar(recipe: SynthRecipe, extra: dict | None = None) -> str:
    """Human-readable key-value record; parse_recipe_sidecar is exact inverse."""
    lines = [
        f"alpha = {recipe.alpha!r}",
        f"kernel = {recipe.kernel.kind}",
    ]
    if recipe.kernel.kind == GAUSSIAN:
        lines.append(f"sigma = {recipe.kernel.sigma!r}")
    elif recipe.kernel.kind == GHOSTING:
        dy, dx = recipe.kernel.shift
        lines.append(f"shift_dy = {dy}")
        lines.append(f"shift_dx = {dx}")
        lines.append(f"ghost_amp = {recipe.kernel.a2!r}")
    lines.append(f"saliency = {recipe.saliency_mode}")
    lines.append(f"desat_factor = {recipe.desat_factor!r}")
    lines.append(f"seed = {recipe.seed}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_recipe_sidecar(text: str) -> tuple[SynthRecipe, dict]:
    """Parse a sidecar back into (recipe, extra key-value entries)."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"sidecar line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        kind = values.pop("kernel")
        if kind == ONE_PULSE:
            kernel = make_one_pulse()
        elif kind == GAUSSIAN:
            kernel = make_gaussian(float(values.pop("sigma")))
        elif kind == GHOSTING:
            kernel = make_ghosting(
                (int(values.pop("shift_dy")), int(values.pop("shift_dx"))),
                float(values.pop("ghost_amp")),
            )
        else:
            raise DataError(f"sidecar names unknown kernel {kind!r}")
        recipe = SynthRecipe(
            alpha=float(values.pop("alpha")),
            kernel=kernel,
            saliency_mode=values.pop("saliency"),
            desat_factor=float(values.pop("desat_factor")),
            seed=int(values.pop("seed")),
        )
    except KeyError as exc:
        raise DataError(f"sidecar is missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise DataError(f"sidecar has an invalid value: {exc}") from exc
    return recipe, values


def center_crop(img: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h < height or w < width:
        raise ValueError(f"cannot center-crop {h}x{w} to {height}x{width}")
    y0 = (h - height) // 2
    x0 = (w - width) // 2
    return img[y0 : y0 + height, x0 : x0 + width]


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Separable bilinear resize with edge clamping (align-corners=False)."""
    img64 = np.asarray(img, dtype=np.float64)
    h, w = img64.shape[:2]

    def axis_coords(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (pos - lo)

    y0, y1, fy = axis_coords(height, h)
    x0, x1, fx = axis_coords(width, w)
    top = img64[y0][:, x0] * (1 - fx)[None, :, None] + img64[y0][:, x1] * fx[None, :, None]
    bot = img64[y1][:, x0] * (1 - fx)[None, :, None] + img64[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def match_dims(img: np.ndarray, height: int, width: int) -> tuple[np.ndarray, str]:
    """Fit img to (height, width): center-crop when large enough, else resize.

    Returns the adjusted image and a note ("as_is", "center_crop", "resize").
    """
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img, "as_is"
    if h >= height and w >= width:
        return center_crop(img, height, width), "center_crop"
    return resize_bilinear(img, height, width), "resize"
