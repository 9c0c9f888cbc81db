import hashlib

import numpy as np
import pytest
from PIL import Image

from seedkit.compositor import Sprite


def ellipse_mask(a, b, angle_deg=0.0, pad=1):
    """Rasterised filled ellipse with semi-axes a, b (pixels), rotated."""
    r = int(np.ceil(max(a, b))) + pad
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1].astype(float)
    t = np.radians(angle_deg)
    u = xx * np.cos(t) + yy * np.sin(t)
    v = -xx * np.sin(t) + yy * np.cos(t)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def disk_mask(radius, size=None):
    size = size or 2 * int(np.ceil(radius)) + 3
    c = (size - 1) / 2
    yy, xx = np.mgrid[:size, :size]
    return (xx - c) ** 2 + (yy - c) ** 2 <= radius ** 2


def sprite_from_mask(mask, color=(200, 150, 80), label="soy", source_id="s"):
    rows, cols = np.flatnonzero(mask.any(axis=1)), np.flatnonzero(mask.any(axis=0))
    m = mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    px = np.zeros(m.shape + (4,), np.uint8)
    px[m, :3] = color
    px[m, 3] = 255
    return Sprite(px, label, source_id)


@pytest.fixture
def seed_sprites():
    return [
        sprite_from_mask(ellipse_mask(12, 8), (200, 150, 80), "soy", "soy/a.png"),
        sprite_from_mask(ellipse_mask(10, 9), (180, 160, 90), "soy", "soy/b.png"),
        sprite_from_mask(ellipse_mask(14, 7, 30), (150, 120, 60), "soy", "soy/c.png"),
    ]


@pytest.fixture
def background():
    return np.random.default_rng(0).integers(0, 60, (768, 768, 3)).astype(np.uint8)


def save_rgba(path, mask, color=(200, 150, 80)):
    px = np.zeros(mask.shape + (4,), np.uint8)
    px[mask, :3] = color
    px[mask, 3] = 255
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(px).save(path)


@pytest.fixture
def synth_inputs(tmp_path):
    """Sprite and background directories for a two-class dataset."""
    sprites = tmp_path / "sprites"
    save_rgba(sprites / "soy" / "a.png", ellipse_mask(12, 8))
    save_rgba(sprites / "soy" / "b.png", ellipse_mask(9, 7, 20), (170, 140, 70))
    save_rgba(sprites / "penny" / "p.png", disk_mask(20), (180, 100, 60))
    bgs = tmp_path / "backgrounds"
    bgs.mkdir()
    rng = np.random.default_rng(1)
    Image.fromarray(rng.integers(0, 50, (300, 400, 3)).astype(np.uint8)).save(bgs / "b0.png")
    Image.fromarray(rng.integers(20, 80, (256, 256, 3)).astype(np.uint8)).save(bgs / "b1.png")
    return sprites, bgs


def tree_digest(root):
    """{relative path: sha256} for every file under ``root``."""
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[p.relative_to(root).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out
