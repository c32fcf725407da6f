"""Frame and corners-file I/O.

Binary PGM (P5) and PPM (P6) are read and written without dependencies; PNG
is read through Pillow when it is installed.
"""
import os
import re

import numpy as np

from ..image import as_image

IMAGE_EXTENSIONS = (".pgm", ".ppm", ".png")
_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


class FrameReadError(IOError):
    def __init__(self, index, path, reason):
        super().__init__(f"cannot read frame {index} ({path}): {reason}")
        self.index = index
        self.path = path


def _pnm_tokens(data, count):
    # header fields are whitespace separated, '#' starts a comment up to EOL
    tokens = []
    pos = 0
    while len(tokens) < count:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated PNM header")
        tokens.append(m.group(2))
        pos = m.end()
    return tokens, pos + 1


def read_pnm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), offset = _pnm_tokens(data, 4)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM type {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ValueError(f"bad maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    n = w * h * channels
    raw = np.frombuffer(data, dtype=dtype, count=n, offset=offset)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return raw.reshape(shape).astype(np.float64)


def write_pnm(path, image, maxval=255):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    pixels = np.clip(np.rint(img), 0, maxval).astype(dtype)
    header = b"%s\n%d %d\n%d\n" % (magic, img.shape[1], img.shape[0], maxval)
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())


def read_image(path):
    """Read a frame as a float64 grayscale image."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise ValueError("PNG support needs Pillow (pip install regtrack[png])") from exc
        with Image.open(path) as im:
            data = np.asarray(im.convert("L"), dtype=np.float64)
    else:
        data = read_pnm(path)
    return as_image(data)


class SequenceSource:
    """Frames of a directory in lexicographic order, read lazily."""

    def __init__(self, paths):
        self.paths = list(paths)
        if not self.paths:
            raise ValueError("sequence has no frames")
        self.index = 0
        self.shape = None

    @classmethod
    def from_dir(cls, directory):
        if not os.path.isdir(directory):
            raise ValueError(f"not a directory: {directory}")
        names = sorted(n for n in os.listdir(directory)
                       if n.lower().endswith(IMAGE_EXTENSIONS))
        return cls(os.path.join(directory, n) for n in names)

    def __len__(self):
        return len(self.paths)

    def frame(self, index):
        path = self.paths[index]
        try:
            img = read_image(path)
        except (OSError, ValueError) as exc:
            raise FrameReadError(index, path, exc) from exc
        if self.shape is None:
            self.shape = img.shape
        elif img.shape != self.shape:
            raise FrameReadError(index, path, f"size {img.shape} differs from {self.shape}")
        return img

    def __iter__(self):
        for self.index in range(len(self.paths)):
            yield self.frame(self.index)


def write_sequence(directory, frames, prefix="frame"):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t, frame in enumerate(frames):
        path = os.path.join(directory, f"{prefix}{t:05d}.pgm")
        write_pnm(path, frame)
        paths.append(path)
    return paths


# -- corners files --------------------------------------------------------------

def parse_corners(text):
    """Parse "x1,y1,...,x4,y4" (commas and/or spaces) into a (4, 2) array."""
    vals = [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    if len(vals) != 8:
        raise ValueError(f"expected 8 corner coordinates, got {len(vals)}")
    return np.array(vals).reshape(4, 2)


def read_corners(path):
    """One frame per line, 8 reals in UL, UR, LR, LL order; '#' lines are skipped."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append(parse_corners(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        return np.zeros((0, 4, 2))
    return np.stack(rows)


def write_corners(path, corners, header=None):
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 8)
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for row in corners:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
