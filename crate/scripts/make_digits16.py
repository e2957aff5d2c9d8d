"""Writes the 16x16 digits fixture used by the integration tests.

Takes the first 1000 images of scikit-learn's 8x8 handwritten digits,
rescales intensities from [0, 16] to [0, 255], bilinearly upsamples to
16x16 and stores the result as an IDX image/label pair of unsigned bytes.

    python scripts/make_digits16.py crates/core/tests/data
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

N = 1000
SIZE = 16


def upsample(img, size):
    h, w = img.shape
    ys = (np.arange(size) + 0.5) * h / size - 0.5
    xs = (np.arange(size) + 0.5) * w / size - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = digits.images[:N] * (255.0 / 16.0)
    labels = digits.target[:N].astype(np.uint8)
    big = np.stack([upsample(im, SIZE) for im in images])
    pixels = np.clip(np.rint(big), 0, 255).astype(np.uint8)
    write_idx(out / "digits16-images.idx", 0x803, [N, SIZE, SIZE], pixels.tobytes())
    write_idx(out / "digits16-labels.idx", 0x801, [N], labels.tobytes())


if __name__ == "__main__":
    main()
