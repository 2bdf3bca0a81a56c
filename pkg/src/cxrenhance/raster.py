"""Image containers, colour-space conversion and bit-exact file I/O.

Two containers are supported natively: binary netpbm (P5 graymap, P6 pixmap)
and PNG. Only 8-bit data is accepted; 16-bit sources are rejected rather than
truncated.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "ImageBuffer",
    "FloatImage",
    "HsvPixel",
    "ImageDecodeError",
    "MalformedHeaderError",
    "UnsupportedBitDepthError",
    "TruncatedPayloadError",
    "UnsupportedFormatError",
    "decode_image",
    "encode_image",
    "read_image",
    "write_image",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "rgb_to_hsv_array",
    "hsv_to_rgb_array",
]

FORMATS = ("pgm", "ppm", "png")
_EXTENSIONS = {".pgm": "pgm", ".ppm": "ppm", ".pnm": None, ".png": "png"}


class ImageDecodeError(ValueError):
    pass


class MalformedHeaderError(ImageDecodeError):
    pass


class UnsupportedBitDepthError(ImageDecodeError):
    pass


class TruncatedPayloadError(ImageDecodeError):
    pass


class UnsupportedFormatError(ValueError):
    """Raised when a container cannot hold the requested channel layout."""


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit raster with 1 or 3 channels.

    ``data`` is a read-only ``uint8`` array of shape (height, width, channels),
    which is the row-major, channel-interleaved layout.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must have positive width and height")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            if not np.issubdtype(arr.dtype, np.integer):
                raise TypeError(f"expected integer samples, got {arr.dtype}")
        arr = np.array(arr, dtype=np.uint8, copy=True, order="C")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, raw: bytes) -> "ImageBuffer":
        expected = width * height * channels
        if len(raw) != expected:
            raise ValueError(f"expected {expected} samples, got {len(raw)}")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
        return cls(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, channel: int = 0) -> np.ndarray:
        return self.data[:, :, channel]

    def planes(self) -> list[np.ndarray]:
        return [self.data[:, :, c] for c in range(self.channels)]

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"ImageBuffer(width={self.width}, height={self.height}, channels={self.channels})"


@dataclass(frozen=True, eq=False)
class FloatImage:
    """Real-valued image (e.g. Z-score output), shape (height, width, channels)."""

    data: np.ndarray

    HEADER = struct.Struct("<III")

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("FloatImage samples must be finite")
        arr = np.array(arr, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def to_bytes(self) -> bytes:
        """12-byte little-endian (width, height, channels) header, then float32 LE samples."""
        header = self.HEADER.pack(self.width, self.height, self.channels)
        return header + self.data.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "FloatImage":
        if len(buf) < cls.HEADER.size:
            raise TruncatedPayloadError("float image header truncated")
        w, h, c = cls.HEADER.unpack_from(buf)
        n = w * h * c
        payload = buf[cls.HEADER.size:]
        if len(payload) < 4 * n:
            raise TruncatedPayloadError(f"float image payload has {len(payload)} bytes, need {4 * n}")
        arr = np.frombuffer(payload[: 4 * n], dtype="<f4").reshape(h, w, c)
        return cls(arr.astype(np.float64))

    def __eq__(self, other):
        if not isinstance(other, FloatImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class HsvPixel:
    h: float  # degrees, [0, 360)
    s: float
    v: float


# ---------------------------------------------------------------------------
# netpbm
# ---------------------------------------------------------------------------

def _netpbm_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Parse magic, width, height, maxval; return them and the payload offset."""
    magic = buf[:2]
    pos = 2
    tokens = []
    n = len(buf)
    while len(tokens) < 3:
        # whitespace and comments between tokens
        while pos < n and (buf[pos:pos + 1].isspace() or buf[pos:pos + 1] == b"#"):
            if buf[pos:pos + 1] == b"#":
                while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MalformedHeaderError("netpbm header: expected an integer token")
        tokens.append(int(buf[start:pos]))
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise MalformedHeaderError("netpbm header: missing whitespace after maxval")
    pos += 1
    width, height, maxval = tokens
    return magic, width, height, maxval, pos


def _decode_netpbm(buf: bytes) -> ImageBuffer:
    magic, width, height, maxval, offset = _netpbm_header(buf)
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"netpbm header: invalid size {width}x{height}")
    if maxval > 255:
        raise UnsupportedBitDepthError(f"maxval {maxval} implies 16-bit samples; convert to 8-bit first")
    if maxval != 255:
        raise MalformedHeaderError(f"maxval {maxval} not supported, expected 255")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = buf[offset:offset + need]
    if len(payload) < need:
        raise TruncatedPayloadError(f"netpbm payload has {len(payload)} bytes, need {need}")
    return ImageBuffer.from_bytes(width, height, channels, payload)


def _encode_netpbm(img: ImageBuffer, magic: bytes) -> bytes:
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.tobytes()


# ---------------------------------------------------------------------------
# PNG (via Pillow)
# ---------------------------------------------------------------------------

def _decode_png(buf: bytes) -> ImageBuffer:
    try:
        pil = Image.open(io.BytesIO(buf))
        pil.load()
    except UnidentifiedImageError as exc:
        raise MalformedHeaderError(f"PNG header: {exc}") from exc
    except (OSError, SyntaxError) as exc:
        msg = str(exc).lower()
        if "truncated" in msg or "eof" in msg or "unexpected end" in msg:
            raise TruncatedPayloadError(f"PNG payload: {exc}") from exc
        raise MalformedHeaderError(f"PNG: {exc}") from exc
    mode = pil.mode
    if mode.startswith("I") or mode == "F":
        raise UnsupportedBitDepthError(f"PNG mode {mode!r} is not 8-bit; convert externally")
    if mode == "1":
        raise UnsupportedBitDepthError("1-bit PNG is not supported")
    if mode == "P":
        pil = pil.convert("RGB")
    elif mode not in ("L", "RGB"):
        raise UnsupportedFormatError(f"PNG mode {mode!r} not supported (alpha or exotic layout)")
    return ImageBuffer(np.asarray(pil))


def _encode_png(img: ImageBuffer) -> bytes:
    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    out = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr), mode="L" if img.channels == 1 else "RGB").save(out, format="PNG")
    return out.getvalue()


def decode_image(buf: bytes) -> ImageBuffer:
    """Decode P5/P6 netpbm or PNG bytes into an :class:`ImageBuffer`."""
    if buf[:2] in (b"P5", b"P6"):
        return _decode_netpbm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(buf)
    if buf[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise MalformedHeaderError(f"netpbm variant {buf[:2].decode()} not supported (binary P5/P6 only)")
    raise MalformedHeaderError("unrecognised image container")


def encode_image(img: ImageBuffer, format: str) -> bytes:
    fmt = format.lower()
    if fmt == "pnm":
        fmt = "pgm" if img.channels == 1 else "ppm"
    if fmt == "pgm":
        if img.channels != 1:
            raise UnsupportedFormatError("graymap (pgm) holds 1 channel only")
        return _encode_netpbm(img, b"P5")
    if fmt == "ppm":
        if img.channels != 3:
            raise UnsupportedFormatError("pixmap (ppm) holds 3 channels only")
        return _encode_netpbm(img, b"P6")
    if fmt == "png":
        return _encode_png(img)
    raise UnsupportedFormatError(f"unknown format {format!r}; expected one of {FORMATS}")


def format_for_path(path, channels: int | None = None) -> str:
    ext = Path(path).suffix.lower()
    if ext not in _EXTENSIONS:
        raise UnsupportedFormatError(f"unsupported file extension {ext!r}")
    fmt = _EXTENSIONS[ext]
    if fmt is None:
        fmt = "pgm" if channels == 1 else "ppm"
    return fmt


def read_image(path) -> ImageBuffer:
    return decode_image(Path(path).read_bytes())


def write_image(path, img: ImageBuffer, format: str | None = None) -> None:
    fmt = format or format_for_path(path, img.channels)
    Path(path).write_bytes(encode_image(img, fmt))


# ---------------------------------------------------------------------------
# HSV (hexcone model; h in degrees, s and v in [0, 1])
# ---------------------------------------------------------------------------

def rgb_to_hsv_array(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised RGB (0-255, last axis of length 3) to (h, s, v) arrays."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    d = mx - mn
    v = mx / 255.0
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(mx > 0, d / np.where(mx > 0, mx, 1), 0.0)
        dd = np.where(d > 0, d, 1)
        h = np.where(
            mx == r,
            np.mod((g - b) / dd, 6.0),
            np.where(mx == g, (b - r) / dd + 2.0, (r - g) / dd + 4.0),
        ) * 60.0
    h = np.where(d > 0, h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    return h, s, v


def hsv_to_rgb_array(h, s, v) -> np.ndarray:
    """Inverse hexcone; returns uint8 array with a trailing axis of 3."""
    h = np.asarray(h, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = v * s
    hp = np.mod(h, 360.0) / 60.0
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    m = v - c
    sector = np.floor(hp).astype(np.int64) % 6
    zero = np.zeros_like(c)
    r = np.choose(sector, [c, x, zero, zero, x, c])
    g = np.choose(sector, [x, c, c, x, zero, zero])
    b = np.choose(sector, [zero, zero, x, c, c, x])
    out = np.stack([r + m, g + m, b + m], axis=-1) * 255.0
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def rgb_to_hsv(r: int, g: int, b: int) -> HsvPixel:
    h, s, v = rgb_to_hsv_array(np.array([r, g, b], dtype=np.float64))
    return HsvPixel(float(h), float(s), float(v))


def hsv_to_rgb(p: HsvPixel) -> tuple[int, int, int]:
    r, g, b = hsv_to_rgb_array(p.h, p.s, p.v)
    return int(r), int(g), int(b)
