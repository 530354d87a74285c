"""8-bit RGB raster type with binary PPM (P6) I/O and optional PNG via Pillow."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GlintError


class ImageFormatError(GlintError):
    stage = "io"


@dataclass(frozen=True, eq=False)
class RasterImage:
    pixels: np.ndarray  # (height, width, 3) uint8, row-major

    def __post_init__(self):
        p = np.array(self.pixels, dtype=np.uint8, copy=True)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"pixels must have shape (H, W, 3), got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, color=(0, 0, 0)) -> "RasterImage":
        return cls(np.broadcast_to(np.asarray(color, dtype=np.uint8), (height, width, 3)))

    def __eq__(self, other):
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out, i = [], 0
    while len(out) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ImageFormatError("truncated PPM header")
        out.append(data[i:j])
        i = j
    return out, i + 1  # exactly one whitespace byte follows maxval


def decode_ppm(data: bytes) -> RasterImage:
    (magic, w, h, maxval), start = _tokens(data, 4)
    if magic != b"P6":
        raise ImageFormatError(f"unsupported magic {magic!r}, expected P6")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ImageFormatError("only 8-bit PPM (maxval 255) is supported")
    body = data[start : start + w * h * 3]
    if len(body) != w * h * 3:
        raise ImageFormatError("PPM pixel data is truncated")
    return RasterImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


def encode_ppm(img: RasterImage) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def load_image(path) -> RasterImage:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as im:
            return RasterImage(np.asarray(im.convert("RGB")))
    return decode_ppm(path.read_bytes())


def save_image(img: RasterImage, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(np.ascontiguousarray(img.pixels)).save(path)
        return
    path.write_bytes(encode_ppm(img))
