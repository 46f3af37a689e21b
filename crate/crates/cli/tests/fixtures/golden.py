"""Writes the three golden PGM images and independent metric values for them.

    python3 golden.py

The images land in golden/; golden_expected/oracle.csv holds NumPy /
scikit-image values that the checked-in golden_expected/pairwise.csv and
entropy.csv are compared against.
"""
import itertools
import os
import sys

import numpy as np
from skimage.metrics import structural_similarity

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "..", "..", "core", "tests", "fixtures"))
from oracles import feature_sim  # noqa: E402

SIZE = 48


def images():
    r, c = np.mgrid[0:SIZE, 0:SIZE]
    a = (60 + 2 * r + c + 40 * ((r // 12 + c // 12) % 2)).astype(np.uint8)
    rng = np.random.default_rng(7)
    noise = rng.integers(-15, 16, size=(SIZE, SIZE))
    b = np.clip(np.roll(a.astype(int), 1, axis=1) + noise, 0, 255).astype(np.uint8)
    d = np.hypot(r - 24, c - 20)
    cimg = np.clip(200 - 4 * d + 10 * np.sin(r / 3.0), 0, 255).astype(np.uint8)
    return {"a.pgm": a, "b.pgm": b, "c.pgm": cimg}


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def entropy(counts):
    p = np.array([v for v in counts if v > 0], dtype=np.float64) / sum(counts)
    return float(-(p * np.log2(p)).sum())


def entropy_2d(img):
    padded = np.pad(img.astype(np.int64), 1, mode="edge")
    h, w = img.shape
    sums = sum(padded[dr:dr + h, dc:dc + w] for dr in range(3) for dc in range(3))
    means = np.round(sums / 9.0).astype(np.int64)
    pairs = img.astype(np.int64) * 256 + means
    return entropy(np.bincount(pairs.ravel()))


def main():
    imgs = images()
    out = os.path.join(HERE, "golden")
    os.makedirs(out, exist_ok=True)
    for name, img in imgs.items():
        write_pgm(os.path.join(out, name), img)
    rows = ["kind,img_a,img_b,rmse,psnr,ssim,fsim,entropy1d,entropy2d"]
    for (na, a), (nb, b) in itertools.combinations(imgs.items(), 2):
        x, y = a.astype(np.float64), b.astype(np.float64)
        mse = np.mean((x - y) ** 2)
        rmse = np.sqrt(np.mean(((x - y) / 255.0) ** 2))
        psnr = 10 * np.log10(255.0 ** 2 / mse)
        s = structural_similarity(a, b, gaussian_weights=True, sigma=1.5,
                                  use_sample_covariance=False, data_range=255)
        rows.append(f"pair,{na},{nb},{float(rmse)!r},{float(psnr)!r},{float(s)!r},{float(feature_sim(a, b))!r},,")
    for name, img in imgs.items():
        rows.append(f"image,{name},,,,,,{entropy(np.bincount(img.ravel()))!r},{entropy_2d(img)!r}")
    with open(os.path.join(HERE, "golden_expected", "oracle.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
