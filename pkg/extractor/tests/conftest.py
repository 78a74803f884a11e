import numpy as np
import pytest
from PIL import Image


def make_image(seed: int, size=(40, 32)) -> Image.Image:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    return Image.fromarray(pixels, mode="RGB")


@pytest.fixture()
def labeled_tree(tmp_path):
    """Two-class image tree: 3 'ant' images, 2 'bee' images."""
    root = tmp_path / "train"
    for name, count, base in (("ant", 3, 10), ("bee", 2, 20)):
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(count):
            make_image(base + i).save(folder / f"img_{i}.png")
    return root


@pytest.fixture()
def flat_dir(tmp_path):
    root = tmp_path / "pool"
    root.mkdir()
    for i in range(4):
        make_image(100 + i).save(root / f"sample_{i}.png")
    return root
