"""Portable float map (PFM) reading and writing.

Grayscale little-endian PFM only ("Pf" header, negative scale). Rows are
stored bottom-to-top as the format prescribes.
"""

import numpy as np


class PfmError(ValueError):
    pass


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM file into a float32 array of shape (H, W)."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic == b"PF":
            raise PfmError(f"{path}: color PFM not supported, expected grayscale 'Pf'")
        if magic != b"Pf":
            raise PfmError(f"{path}: not a PFM file (bad magic {magic!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise PfmError(f"{path}: malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        if scale >= 0:
            raise PfmError(f"{path}: big-endian PFM not supported (scale {scale})")
        data = np.frombuffer(fh.read(width * height * 4), dtype="<f4")
        if data.size != width * height:
            raise PfmError(f"{path}: truncated PFM payload")
    # bottom-to-top storage
    return np.flipud(data.reshape(height, width)).copy()


def write_pfm(path, data: np.ndarray) -> None:
    """Write a 2-D float array as grayscale little-endian PFM."""
    if data.ndim != 2:
        raise PfmError("PFM writer expects a 2-D array")
    arr = np.flipud(np.asarray(data, dtype="<f4"))
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(arr.tobytes())
