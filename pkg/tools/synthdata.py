# tools/synthdata.py — OneDF v1
"""
Synthetic occluded-landmark videos.

A template point set (face-like for N=68, seven clusters otherwise) moves by
a bounded random translation, a small rotation and per-landmark jitter.
Each landmark is drawn as a Gaussian blob (σ = blob_sigma px) on a black
S×S frame. Occlusion events paste uniform-noise rectangles for a few frames;
a landmark is occluded exactly when its center lies inside an active patch.

Coordinates are pixel positions with pixel i covering [i, i+1).

Public API:
  SyntheticSequence, generate_sequence(cfg), displacement_bound(cfg)
  make_heatmap_label(coord, S, D, sigma_h), make_confidence_label(occluded, f)
  make_static_sequence(seq, frame, T)
  save_sequence(path, seq), load_sequence(path)
  SequenceHeader, read_header(path), iter_frames(path)
  generate_dataset(run_cfg, out_dir), split_paths(data_dir, split), load_split(data_dir, split)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from former.errors import ConfigError, FormatError
from former.logger import log
from former.numerics import seeded_rng
from former.structural import GROUP_NAMES, default_partition
from runtime.config import RunConfig, SyntheticConfig

SYNQ_MAGIC = b"SYNQ"
SYNQ_VERSION = 1
CONFIDENCE_FLOOR = 0.1
TEMPLATE_SCALE = 0.28        # template radius 1 ↦ 0.28·S px
SCALE_SPREAD = 0.1           # per-sequence scale in [0.9, 1.1]
SPLIT_SEED_OFFSET = {"train": 0, "val": 10_000, "test": 20_000}


@dataclass
class SyntheticSequence:
    frames:            np.ndarray   # [T, S, S] float32 in [0, 1]
    coords:            np.ndarray   # [T, N, 2] float32 px, (x, y)
    heatmap_labels:    np.ndarray   # [T, N, 2, D] float32
    confidence_labels: np.ndarray   # [T, N, 2] float32
    occlusion_masks:   np.ndarray   # [T, N] bool
    clamp_count:       int = 0

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def image_size(self) -> int:
        return self.frames.shape[1]

    @property
    def num_landmarks(self) -> int:
        return self.coords.shape[1]

    @property
    def heatmap_dim(self) -> int:
        return self.heatmap_labels.shape[-1]


# ─────────────────────────────────────────────────────────────────────────────
# Labels
# ─────────────────────────────────────────────────────────────────────────────

def make_heatmap_label(coord: float, image_size: int, heatmap_dim: int, sigma_h: float) -> np.ndarray:
    """Peak-normalised Gaussian over bin centers; the peak bin holds exactly 1."""
    mu = float(coord) * heatmap_dim / image_size
    centers = np.arange(heatmap_dim, dtype=np.float64) + 0.5
    h = np.exp(-((centers - mu) ** 2) / (2.0 * sigma_h ** 2))
    return (h / h.max()).astype(np.float32)


def make_confidence_label(occluded: bool, partial_fraction: float) -> float:
    if not occluded:
        return 1.0
    return max(CONFIDENCE_FLOOR, 1.0 - float(partial_fraction))


def _covered_fraction(center: float, half: float, lo: float, hi: float, extent: float) -> float:
    """Share of [center-half, center+half] ∩ frame that falls inside [lo, hi)."""
    a, b = max(0.0, center - half), min(extent, center + half)
    if b <= a:
        return 0.0
    return max(0.0, min(b, hi) - max(a, lo)) / (b - a)


# ─────────────────────────────────────────────────────────────────────────────
# Templates
# ─────────────────────────────────────────────────────────────────────────────

def _ellipse(cx: float, cy: float, rx: float, ry: float, n: int, phase: float = math.pi) -> np.ndarray:
    a = phase + np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.stack([cx + rx * np.cos(a), cy + ry * np.sin(a)], axis=1)


def _template_68() -> np.ndarray:
    contour_a = np.linspace(math.pi, 0.0, 17)
    contour = np.stack([0.9 * np.cos(contour_a), 0.1 + 0.85 * np.sin(contour_a)], axis=1)
    brow_x = np.linspace(-0.7, -0.2, 5)
    arch = -0.08 * np.sin(np.linspace(0.0, math.pi, 5))
    left_brow = np.stack([brow_x, -0.45 + arch], axis=1)
    right_brow = np.stack([-brow_x[::-1], -0.45 + arch[::-1]], axis=1)
    bridge = np.stack([np.zeros(4), np.linspace(-0.3, 0.1, 4)], axis=1)
    nostrils = np.stack([np.linspace(-0.2, 0.2, 5), np.full(5, 0.25)], axis=1)
    left_eye = _ellipse(-0.4, -0.2, 0.15, 0.06, 6)
    right_eye = _ellipse(0.4, -0.2, 0.15, 0.06, 6)
    mouth_outer = _ellipse(0.0, 0.55, 0.35, 0.12, 12)
    mouth_inner = _ellipse(0.0, 0.55, 0.22, 0.05, 8)
    return np.concatenate([contour, left_brow, right_brow, bridge, nostrils,
                           left_eye, right_eye, mouth_outer, mouth_inner], axis=0)


_CLUSTER_CENTERS = {
    "left_eyebrow":  (-0.45, -0.5),
    "right_eyebrow": (0.45, -0.5),
    "left_eye":      (-0.4, -0.2),
    "right_eye":     (0.4, -0.2),
    "nose":          (0.0, 0.1),
    "mouth":         (0.0, 0.5),
}


def _template_generic(n: int) -> np.ndarray:
    """Seven clusters in partition order; N < 7 falls back to a single ring."""
    if n < len(GROUP_NAMES):
        return _ellipse(0.0, 0.0, 0.7, 0.7, n)
    out = np.zeros((n, 2))
    for name, group in zip(GROUP_NAMES, default_partition(n).groups):
        idx = list(group)
        if name == "contour":
            a = np.linspace(math.pi * 0.9, math.pi * 0.1, len(idx)) if len(idx) > 1 else np.array([math.pi / 2])
            out[idx] = np.stack([0.9 * np.cos(a), 0.1 + 0.85 * np.sin(a)], axis=1)
        elif len(idx) == 1:
            out[idx] = _CLUSTER_CENTERS[name]
        else:
            out[idx] = _ellipse(*_CLUSTER_CENTERS[name], 0.12, 0.07, len(idx))
    return out


def template(n: int) -> np.ndarray:
    """[N, 2] layout in unit face coordinates (y grows downward)."""
    return _template_68() if n == 68 else _template_generic(n)


def displacement_bound(cfg: SyntheticConfig) -> float:
    """Upper bound on any landmark's per-frame displacement, in px."""
    radius = float(np.linalg.norm(template(cfg.num_landmarks), axis=1).max())
    radius *= TEMPLATE_SCALE * cfg.image_size * (1.0 + SCALE_SPREAD)
    return math.sqrt(2.0) * (cfg.translation_amp + cfg.jitter_sigma) + cfg.rotation_amp * radius


# ─────────────────────────────────────────────────────────────────────────────
# Generation
# ─────────────────────────────────────────────────────────────────────────────

def _render(points: np.ndarray, size: int, sigma: float) -> np.ndarray:
    centers = np.arange(size, dtype=np.float64) + 0.5
    gx = np.exp(-((centers[None, :] - points[:, 0:1]) ** 2) / (2.0 * sigma ** 2))   # [N, S] columns
    gy = np.exp(-((centers[None, :] - points[:, 1:2]) ** 2) / (2.0 * sigma ** 2))   # [N, S] rows
    return np.clip(np.einsum("nr,nc->rc", gy, gx), 0.0, 1.0)


def generate_sequence(cfg: SyntheticConfig) -> SyntheticSequence:
    """Pure function of cfg (seed included): equal configs give bit-identical sequences."""
    cfg.validate()
    rng = seeded_rng(cfg.seed)
    n, s, T, d = cfg.num_landmarks, cfg.image_size, cfg.sequence_length, cfg.heatmap_dim
    upper = s - 1e-3

    shape = template(n) * TEMPLATE_SCALE * s * rng.uniform(1.0 - SCALE_SPREAD, 1.0 + SCALE_SPREAD)
    center = s / 2.0 + rng.uniform(-0.1 * s, 0.1 * s, size=2)
    offset = np.zeros(2)
    angle = rng.uniform(-0.2, 0.2)
    jitter = np.zeros((n, 2))
    jitter_clip = 3.0 * cfg.jitter_sigma

    frames = np.zeros((T, s, s), dtype=np.float32)
    coords = np.zeros((T, n, 2), dtype=np.float32)
    masks = np.zeros((T, n), dtype=bool)
    conf = np.ones((T, n, 2), dtype=np.float32)
    labels = np.zeros((T, n, 2, d), dtype=np.float32)
    events: List[List[int]] = []   # [x0, y0, w, h, frames_left]
    clamps = 0
    half = 2.0 * cfg.blob_sigma

    for t in range(T):
        if t > 0:
            pull = rng.uniform(-1.0, 1.0, size=2) - offset / (0.25 * s)
            offset = offset + cfg.translation_amp * np.clip(pull, -1.0, 1.0)
            angle += cfg.rotation_amp * rng.uniform(-1.0, 1.0)
            jitter = np.clip(jitter + cfg.jitter_sigma * rng.uniform(-1.0, 1.0, size=(n, 2)),
                             -jitter_clip, jitter_clip)
        c, sn = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -sn], [sn, c]])
        pts = center + offset + shape @ rot.T + jitter
        clamped = np.clip(pts, 0.0, upper)
        clamps += int(np.count_nonzero(clamped != pts))
        pts = clamped
        coords[t] = pts

        image = _render(pts, s, cfg.blob_sigma)

        if cfg.occlusion_rate > 0 and rng.uniform() < cfg.occlusion_rate:
            w = int(rng.integers(cfg.patch_min, min(cfg.patch_max, s) + 1))
            h = int(rng.integers(cfg.patch_min, min(cfg.patch_max, s) + 1))
            x0 = int(rng.integers(0, s - min(w, s) + 1))
            y0 = int(rng.integers(0, s - min(h, s) + 1))
            events.append([x0, y0, min(w, s), min(h, s),
                           int(rng.integers(cfg.duration_min, cfg.duration_max + 1))])
        for x0, y0, w, h, _ in events:
            image[y0:y0 + h, x0:x0 + w] = rng.uniform(0.0, 1.0, size=(h, w))
            inside = ((pts[:, 0] >= x0) & (pts[:, 0] < x0 + w) & (pts[:, 1] >= y0) & (pts[:, 1] < y0 + h))
            for i in np.flatnonzero(inside):
                fx = _covered_fraction(pts[i, 0], half, x0, x0 + w, s)
                fy = _covered_fraction(pts[i, 1], half, y0, y0 + h, s)
                conf[t, i, 0] = min(conf[t, i, 0], make_confidence_label(True, fx))
                conf[t, i, 1] = min(conf[t, i, 1], make_confidence_label(True, fy))
            masks[t] |= inside
        for e in events:
            e[4] -= 1
        events = [e for e in events if e[4] > 0]
        frames[t] = image

        for i in range(n):
            labels[t, i, 0] = make_heatmap_label(pts[i, 0], s, d, cfg.sigma_h)
            labels[t, i, 1] = make_heatmap_label(pts[i, 1], s, d, cfg.sigma_h)

    return SyntheticSequence(frames, coords, labels, conf, masks, clamps)


def make_static_sequence(seq: SyntheticSequence, frame: int, length: int) -> SyntheticSequence:
    """A still video: one frame of seq and its labels repeated length times."""
    if not 0 <= frame < seq.length:
        raise ConfigError(f"frame {frame} outside 0..{seq.length - 1}", "frame")

    def rep(a: np.ndarray) -> np.ndarray:
        return np.repeat(a[frame:frame + 1], length, axis=0)

    return SyntheticSequence(rep(seq.frames), rep(seq.coords), rep(seq.heatmap_labels),
                             rep(seq.confidence_labels), rep(seq.occlusion_masks), 0)


# ─────────────────────────────────────────────────────────────────────────────
# SYNQ files
# ─────────────────────────────────────────────────────────────────────────────

_HEADER = struct.Struct("<4sI4I")


def save_sequence(path: Union[str, Path], seq: SyntheticSequence) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(SYNQ_MAGIC, SYNQ_VERSION, seq.num_landmarks, seq.image_size, seq.length, seq.heatmap_dim)
    with open(p, "wb") as f:
        f.write(header)
        for arr in (seq.frames, seq.coords, seq.heatmap_labels, seq.confidence_labels):
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(seq.occlusion_masks, dtype=np.uint8).tobytes())
        f.write(struct.pack("<I", seq.clamp_count))


@dataclass
class SequenceHeader:
    num_landmarks: int
    image_size:    int
    length:        int
    heatmap_dim:   int

    def sections(self) -> List[Tuple[str, Tuple[int, ...], str]]:
        n, s, T, d = self.num_landmarks, self.image_size, self.length, self.heatmap_dim
        return [
            ("frames", (T, s, s), "<f4"),
            ("coords", (T, n, 2), "<f4"),
            ("heatmap_labels", (T, n, 2, d), "<f4"),
            ("confidence_labels", (T, n, 2), "<f4"),
            ("occlusion_masks", (T, n), "u1"),
        ]

    @property
    def file_size(self) -> int:
        payload = sum(int(np.prod(shp)) * np.dtype(dt).itemsize for _, shp, dt in self.sections())
        return _HEADER.size + payload + 4


def _parse_header(name: str, head: bytes, total: int) -> SequenceHeader:
    """head: the leading bytes of the file; total: its full size."""
    if head[:4] != SYNQ_MAGIC:
        raise FormatError(f"{name}: bad magic {head[:4]!r}, expected {SYNQ_MAGIC!r}", 0)
    if total < _HEADER.size:
        raise FormatError(f"{name}: truncated header, expected {_HEADER.size} bytes, got {total}", total)
    _, version, n, s, T, d = _HEADER.unpack_from(head, 0)
    if version != SYNQ_VERSION:
        raise FormatError(f"{name}: unsupported version {version}", 4)
    if min(n, s, T, d) == 0:
        raise FormatError(f"{name}: zero extent in header (N={n}, S={s}, T={T}, D={d})", 8)
    header = SequenceHeader(n, s, T, d)
    expected = header.file_size
    if total != expected:
        kind = "truncated payload" if total < expected else "trailing bytes after payload"
        raise FormatError(f"{name}: {kind}, expected {expected} bytes, got {total}", min(total, expected))
    return header


def _existing(path: Union[str, Path]) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"sequence file not found: {p}", "sequence")
    return p


def read_header(path: Union[str, Path]) -> SequenceHeader:
    """Validate a SYNQ file from its header and size without reading the payload."""
    p = _existing(path)
    with open(p, "rb") as f:
        head = f.read(_HEADER.size)
    return _parse_header(p.name, head, p.stat().st_size)


def iter_frames(path: Union[str, Path]) -> Iterator[np.ndarray]:
    """Yield the [S, S] frames of a SYNQ file one at a time; frame t+1 is read only when asked for."""
    header = read_header(path)
    s = header.image_size
    frame_bytes = s * s * 4
    with open(path, "rb", buffering=0) as f:
        f.seek(_HEADER.size)
        for t in range(header.length):
            raw = f.read(frame_bytes)
            if len(raw) != frame_bytes:
                raise FormatError(f"{Path(path).name}: truncated frame {t}", _HEADER.size + t * frame_bytes + len(raw))
            yield np.frombuffer(raw, dtype="<f4").reshape(s, s).astype(np.float32)


def load_sequence(path: Union[str, Path]) -> SyntheticSequence:
    p = _existing(path)
    with open(p, "rb") as f:
        magic = f.read(4)
        if magic != SYNQ_MAGIC:
            raise FormatError(f"{p.name}: bad magic {magic!r}, expected {SYNQ_MAGIC!r}", 0)
        data = magic + f.read()
    header = _parse_header(p.name, data, len(data))

    out: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    for name, shp, dt in header.sections():
        count = int(np.prod(shp))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(shp)
        out[name] = arr.astype(np.float32) if dt == "<f4" else arr.astype(bool)
        offset += count * np.dtype(dt).itemsize
    (clamps,) = struct.unpack_from("<I", data, offset)
    return SyntheticSequence(clamp_count=clamps, **out)


# ─────────────────────────────────────────────────────────────────────────────
# Datasets
# ─────────────────────────────────────────────────────────────────────────────

def split_seed(base: int, split: str, index: int) -> int:
    return base + SPLIT_SEED_OFFSET[split] + index


def generate_dataset(cfg: RunConfig, out_dir: Union[str, Path]) -> Dict[str, List[Path]]:
    """Write out_dir/{train,val,test}/seq_XXXX.synq with disjoint seeds."""
    root = Path(out_dir)
    written: Dict[str, List[Path]] = {}
    for split in ("train", "val", "test"):
        count = getattr(cfg.split, split)
        paths = []
        for i in range(count):
            seq = generate_sequence(cfg.synthetic.with_seed(split_seed(cfg.synthetic.seed, split, i)))
            path = root / split / f"seq_{i:04d}.synq"
            save_sequence(path, seq)
            paths.append(path)
            if seq.clamp_count:
                log.debug(f"{path.name}: {seq.clamp_count} coordinate clamps")
        written[split] = paths
        log.info(f"[green]{split}: {count} sequences → {root / split}[/green]")
    return written


def split_paths(data_dir: Union[str, Path], split: str) -> List[Path]:
    folder = Path(data_dir) / split
    paths = sorted(folder.glob("*.synq"))
    if not paths:
        raise ConfigError(f"no .synq files in {folder}", "--data")
    return paths


def load_split(data_dir: Union[str, Path], split: str) -> List[SyntheticSequence]:
    return [load_sequence(p) for p in split_paths(data_dir, split)]
