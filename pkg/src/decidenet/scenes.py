"""Scene persistence and the synthetic crowd-scene generator.

A scene is an 8-bit RGB grid plus ground-truth head points and
(optionally) detections.  Generated scenes render heads as shaded discs
over a textured background; the "gradient" layout concentrates heads
toward one side so a single scene spans sparse and congested regions.

On disk a scene is a directory: image.ppm (binary P6), points.txt
(lines "x y"), optional detections.txt, optional density.dmap cache.
All text files are ASCII with '#' comments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ppm
from .density import (DensityMap, DetectionSet, GaussianKernelSpec, as_points,
                      bilinear_resize, gt_density, save_density, load_density,
                      validate_points)
from .detector import DetectorProfile, save_detections, load_detections, simulate_detections

PATCH_ROWS = 3
PATCH_COLS = 4

LAYOUTS = ("uniform", "gradient", "clustered")


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene."""

    height: int = 96
    width: int = 128
    count_min: int = 0
    count_max: int = 60
    layout: str = "gradient"
    head_radius: float = 3.0
    texture_seed: int = 0

    def __post_init__(self):
        if self.count_min < 0 or self.count_max < self.count_min:
            raise ValueError(f"bad count range [{self.count_min}, {self.count_max}]")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout {self.layout!r} not one of {LAYOUTS}")
        if self.height % PATCH_ROWS or self.width % PATCH_COLS:
            raise ValueError(f"scene {self.height}x{self.width} not divisible by the "
                             f"{PATCH_COLS}x{PATCH_ROWS} patch grid")
        if self.head_radius <= 0:
            raise ValueError("head_radius must be positive")


@dataclass
class Scene:
    """Image grid, ground-truth head points, optional detections."""

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    points: np.ndarray  # (n, 2) float64 (x, y)
    detections: DetectionSet | None = None

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"scene pixels must be (H, W, 3), got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if h % PATCH_ROWS or w % PATCH_COLS:
            raise ValueError(f"scene {h}x{w} not divisible by the patch grid")
        self.points = as_points(self.points)
        validate_points(self.points, (h, w))
        if self.detections:
            for i, d in enumerate(self.detections):
                if (d.cx + d.width / 2 < 0 or d.cx - d.width / 2 > w - 1
                        or d.cy + d.height / 2 < 0 or d.cy - d.height / 2 > h - 1):
                    raise ValueError(f"detection {i} box does not intersect the image")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


def _layout_points(rng: np.random.Generator, spec: SceneSpec, n: int) -> np.ndarray:
    h, w = spec.height, spec.width
    if n == 0:
        return np.zeros((0, 2))
    ys = rng.uniform(1.0, h - 2.0, size=n)
    if spec.layout == "uniform":
        xs = rng.uniform(1.0, w - 2.0, size=n)
    elif spec.layout == "gradient":
        # density grows linearly along +x, with a thin uniform floor so
        # the sparse side is not empty
        u = rng.uniform(0.0, 1.0, size=n)
        xs = np.where(rng.uniform(size=n) < 0.15,
                      rng.uniform(1.0, w - 2.0, size=n),
                      1.0 + (w - 3.0) * np.sqrt(u))
    else:  # clustered
        k = max(1, n // 8)
        centers = np.column_stack([rng.uniform(1.0, w - 2.0, size=k),
                                   rng.uniform(1.0, h - 2.0, size=k)])
        pick = rng.integers(0, k, size=n)
        spread = min(h, w) / 10.0
        xs = np.clip(centers[pick, 0] + rng.normal(0, spread, size=n), 1.0, w - 2.0)
        ys = np.clip(centers[pick, 1] + rng.normal(0, spread, size=n), 1.0, h - 2.0)
    return np.column_stack([xs, ys])


def _render(rng: np.random.Generator, spec: SceneSpec, points: np.ndarray,
            texture_rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    # textured background: smooth low-frequency field + fine grain
    coarse = texture_rng.uniform(-1.0, 1.0, size=(h // 8 + 2, w // 8 + 2))
    gray = 168.0 + 14.0 * bilinear_resize(coarse, (h, w))
    gray += texture_rng.normal(0.0, 3.0, size=(h, w))
    # heads: dark shaded discs, slight per-head variation
    yy, xx = np.mgrid[0:h, 0:w]
    for x, y in points:
        r = spec.head_radius * rng.uniform(0.85, 1.15)
        base = rng.uniform(35.0, 80.0)
        x0, x1 = max(0, int(x - r - 1)), min(w, int(x + r + 2))
        y0, y1 = max(0, int(y - r - 1)), min(h, int(y + r + 2))
        if x0 >= x1 or y0 >= y1:
            continue
        d2 = (xx[y0:y1, x0:x1] - x) ** 2 + (yy[y0:y1, x0:x1] - y) ** 2
        mask = d2 <= r * r
        shade = base + 45.0 * np.sqrt(np.maximum(d2, 0.0)) / max(r, 1e-9)
        region = gray[y0:y1, x0:x1]
        region[mask] = shade[mask]
    img = np.clip(gray, 0, 255).astype(np.uint8)
    return np.repeat(img[:, :, None], 3, axis=2)


def generate_scene(spec: SceneSpec, seed: int, scene_id: str | None = None) -> Scene:
    """Deterministic synthetic scene; head count uniform in the spec range."""
    rng = np.random.default_rng([seed])
    texture_rng = np.random.default_rng([seed, spec.texture_seed, 0x7e57])
    n = int(rng.integers(spec.count_min, spec.count_max + 1))
    points = _layout_points(rng, spec, n)
    pixels = _render(rng, spec, points, texture_rng)
    return Scene(scene_id or f"scene{seed}", pixels, points)


# ---------------------------------------------------------------------------
# persistence


def save_points(path: str | Path, points: np.ndarray) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("# x y\n")
        for x, y in as_points(points):
            fh.write(f"{float(x)!r} {float(y)!r}\n")


def load_points(path: str | Path) -> np.ndarray:
    path = Path(path)
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric coordinate") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def save_scene(scene: Scene, dirpath: str | Path) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    ppm.write_ppm(d / "image.ppm", scene.pixels)
    save_points(d / "points.txt", scene.points)
    if scene.detections is not None:
        save_detections(d / "detections.txt", scene.detections)


def load_scene(dirpath: str | Path) -> Scene:
    d = Path(dirpath)
    img_path = d / "image.ppm"
    if not img_path.exists():
        raise FileNotFoundError(f"{img_path}: missing scene image")
    pixels = ppm.read_ppm(img_path)
    points = load_points(d / "points.txt")
    dets = None
    det_path = d / "detections.txt"
    if det_path.exists():
        dets = load_detections(det_path)
    return Scene(d.name, pixels, points, dets)


def cached_gt_density(scene: Scene, dirpath: str | Path,
                      kernel: GaussianKernelSpec) -> DensityMap:
    """Scene ground-truth map, using the density.dmap cache when present."""
    cache = Path(dirpath) / "density.dmap"
    if cache.exists():
        return load_density(cache)
    m = gt_density(scene.points, scene.shape, kernel)
    save_density(cache, m)
    return m


# ---------------------------------------------------------------------------
# dataset synthesis

SPLITS = ("train", "val", "test")


def synthesize_dataset(out_dir: str | Path, spec: SceneSpec, profile: DetectorProfile,
                       kernel: GaussianKernelSpec, sizes: dict[str, int],
                       seed: int) -> list[tuple[str, str, int, int]]:
    """Generate split scene directories plus a manifest.

    Every scene gets simulated detections derived from its ground-truth
    density.  Returns the manifest rows (split, scene_id, n_points,
    n_detections); the same seed reproduces the dataset byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for split_idx, split in enumerate(SPLITS):
        n_scenes = sizes.get(split, 0)
        for i in range(n_scenes):
            scene_id = f"{split}_{i:04d}"
            scene = _generate_split_scene(spec, seed, split_idx, i, scene_id)
            gt = gt_density(scene.points, scene.shape, kernel)
            det_rng = np.random.default_rng([seed, split_idx, i, 0xde7])
            scene.detections = simulate_detections(scene.points, gt, profile, det_rng)
            save_scene(scene, out / split / scene_id)
            rows.append((split, scene_id, len(scene.points), len(scene.detections)))
    with open(out / "manifest.txt", "w", encoding="ascii") as fh:
        fh.write("# split scene_id n_points n_detections\n")
        for row in rows:
            fh.write(" ".join(str(v) for v in row) + "\n")
    return rows


def _generate_split_scene(spec: SceneSpec, seed: int, split_idx: int, i: int,
                          scene_id: str) -> Scene:
    rng = np.random.default_rng([seed, split_idx, i])
    texture_rng = np.random.default_rng([seed, split_idx, i, spec.texture_seed, 0x7e57])
    n = int(rng.integers(spec.count_min, spec.count_max + 1))
    points = _layout_points(rng, spec, n)
    pixels = _render(rng, spec, points, texture_rng)
    return Scene(scene_id, pixels, points)


def load_manifest(data_dir: str | Path) -> list[tuple[str, str, int, int]]:
    path = Path(data_dir) / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"{path}: missing dataset manifest")
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields")
            rows.append((parts[0], parts[1], int(parts[2]), int(parts[3])))
    return rows


def load_split(data_dir: str | Path, split: str) -> list[Scene]:
    """Load every scene of one split, in manifest order."""
    rows = load_manifest(data_dir)
    scenes = []
    for sp, scene_id, _, _ in rows:
        if sp == split:
            scenes.append(load_scene(Path(data_dir) / sp / scene_id))
    return scenes
