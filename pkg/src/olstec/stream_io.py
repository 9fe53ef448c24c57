"""Binary slice-stream files, metric CSVs and frame ingestion.

Stream layout (all little-endian)::

    header   magic "TSTR" | version u32 | L u32 | W u32 | T u64 | flags u32
    record   mask bitmap ceil(L*W/8) bytes (row-major, LSB-first, 1 = observed)
             values L*W float64 (row-major, 0.0 where unobserved)
             truth  L*W float64, only when flags bit 0 is set

``T = 0`` marks an unbounded stream read until end of file.
"""

from __future__ import annotations

import contextlib
import io
import json
import logging
import math
import struct
import sys
from pathlib import Path

import numpy as np

from olstec.core import MaskedSlice, StreamSource
from olstec.errors import StreamFormatError, StructuralError, TruncatedStreamError
from olstec.streams import gen_mask

log = logging.getLogger(__name__)

MAGIC = b"TSTR"
VERSION = 1
FLAG_TRUTH = 1
HEADER = struct.Struct("<4sIIIQI")
HEADER_SIZE = HEADER.size

CSV_COLUMNS = ("t", "residual", "running_avg", "wall_ms", "algo", "seed")
SUMMARY_COLUMNS = (
    "t", "algo", "mean_residual", "std_residual", "mean_running_avg", "std_running_avg", "n_runs",
)


def record_size(L, W, truth=False) -> int:
    n = L * W
    return math.ceil(n / 8) + 8 * n * (2 if truth else 1)


@contextlib.contextmanager
def _open(target, mode):
    if hasattr(target, "read") or hasattr(target, "write"):
        yield target
    elif str(target) == "-":
        yield sys.stdin.buffer if "r" in mode else sys.stdout.buffer
    else:
        with open(target, mode) as fh:
            yield fh


class StreamWriter:
    """Write slices one at a time.

    Use as a context manager; ``path`` may be ``"-"`` for stdout or an open
    binary file.
    """

    def __init__(self, fh, L, W, T=0, truth=False):
        self.fh = fh
        self.L, self.W = L, W
        self.truth = truth
        fh.write(HEADER.pack(MAGIC, VERSION, L, W, T, FLAG_TRUTH if truth else 0))

    def write(self, slice_: MaskedSlice, truth=None):
        if slice_.shape != (self.L, self.W):
            raise StructuralError(f"slice {slice_.t} has shape {slice_.shape}, stream is {(self.L, self.W)}")
        if np.any(slice_.values[~slice_.mask] != 0.0):
            raise StructuralError(f"slice {slice_.t} has nonzero values at unobserved positions")
        self.fh.write(np.packbits(slice_.mask.ravel(), bitorder="little").tobytes())
        self.fh.write(slice_.values.astype("<f8").tobytes())
        if self.truth:
            if truth is None:
                raise StructuralError(f"slice {slice_.t} lacks the truth block this stream declares")
            truth = np.asarray(truth, dtype="<f8")
            if truth.shape != (self.L, self.W):
                raise StructuralError("truth block shape mismatch")
            self.fh.write(truth.tobytes())


@contextlib.contextmanager
def open_writer(target, L, W, T=0, truth=False):
    with _open(target, "wb") as fh:
        yield StreamWriter(fh, L, W, T, truth)


def write_stream(target, stream: StreamSource, truth=None):
    """Write a whole stream; ``truth`` defaults to whether the stream has it."""
    truth = stream.has_truth if truth is None else truth
    with open_writer(target, stream.L, stream.W, len(stream), truth) as w:
        for s, tr in stream:
            w.write(s, tr)


def read_header(fh):
    raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise StreamFormatError("stream header is truncated")
    magic, version, L, W, T, flags = HEADER.unpack(raw)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"unsupported stream version {version}")
    if L == 0 or W == 0:
        raise StreamFormatError("stream declares an empty slice shape")
    return {"L": L, "W": W, "T": T, "flags": flags}


def _read_exact(fh, n, t):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedStreamError(t)
    return buf


def iter_stream(fh, header=None):
    """Yield ``(MaskedSlice, truth_or_None)`` pairs from an open binary file."""
    header = header or read_header(fh)
    L, W, T = header["L"], header["W"], header["T"]
    has_truth = bool(header["flags"] & FLAG_TRUTH)
    n = L * W
    nmask = math.ceil(n / 8)
    t = 0
    while T == 0 or t < T:
        first = fh.read(nmask)
        if not first and T == 0:
            return
        if len(first) != nmask:
            raise TruncatedStreamError(t)
        mask = np.unpackbits(np.frombuffer(first, np.uint8), count=n, bitorder="little").astype(bool)
        mask = mask.reshape(L, W)
        values = np.frombuffer(_read_exact(fh, 8 * n, t), "<f8").reshape(L, W).astype(float)
        if np.any(values[~mask] != 0.0):
            log.warning("slice %d: nonzero values at unobserved positions were zeroed", t)
        truth = None
        if has_truth:
            truth = np.frombuffer(_read_exact(fh, 8 * n, t), "<f8").reshape(L, W).astype(float)
        yield MaskedSlice(values, mask, t), truth
        t += 1


def read_stream(target) -> StreamSource:
    """Load a whole stream file (``"-"`` reads stdin)."""
    with _open(target, "rb") as fh:
        header = read_header(fh)
        pairs = list(iter_stream(fh, header))
    has_truth = bool(header["flags"] & FLAG_TRUTH)
    slices = [s for s, _ in pairs]
    truth = [tr for _, tr in pairs] if has_truth else None
    return StreamSource(header["L"], header["W"], slices, truth)


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_rows(target, columns, rows, metadata):
    out = io.StringIO()
    out.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_fmt(getattr(row, c)) for c in columns) + "\n")
    text = out.getvalue()
    if str(target) == "-":
        sys.stdout.write(text)
    else:
        Path(target).write_text(text, encoding="ascii", newline="\n")


def write_metrics_csv(target, records, metadata):
    """Per-slice metrics with one leading ``#`` metadata line."""
    _write_rows(target, CSV_COLUMNS, records, metadata)


def write_summary_csv(target, rows, metadata):
    _write_rows(target, SUMMARY_COLUMNS, rows, metadata)


def read_metrics_csv(path):
    """Return ``(metadata, rows)`` where rows are dicts of strings."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            meta = json.loads(line[1:].strip())
        else:
            body.append(line)
    header = body[0].split(",")
    return meta, [dict(zip(header, line.split(","))) for line in body[1:]]


# ---------------------------------------------------------------------------
# frames

FRAME_SUFFIXES = (".pgm", ".raw")


def load_frame(path, raw_shape=None) -> np.ndarray:
    """Read one 8-bit grayscale frame as uint8 (PGM via Pillow, or headerless raw)."""
    path = Path(path)
    if path.suffix.lower() == ".raw":
        if raw_shape is None:
            raise StructuralError(f"{path.name}: raw frames need an explicit shape")
        data = np.fromfile(path, dtype=np.uint8)
        if data.size != raw_shape[0] * raw_shape[1]:
            raise StructuralError(f"{path.name}: {data.size} bytes do not match shape {raw_shape}")
        return data.reshape(raw_shape)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "L":
            raise StructuralError(f"{path.name}: expected 8-bit grayscale, got mode {img.mode}")
        return np.asarray(img, dtype=np.uint8)


def ingest_frames(directory, rho, seed=0, raw_shape=None) -> StreamSource:
    """Turn a directory of grayscale frames into a masked stream.

    Frames are taken in filename order, scaled to [0, 1] and masked with an
    independent Bernoulli(``rho``) draw per frame. No truth block is kept.
    """
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    if not files:
        raise StructuralError(f"no .pgm or .raw frames in {directory}")
    from olstec.tracker import make_rng

    rng = make_rng(seed, "frames")
    slices = []
    shape = None
    for t, path in enumerate(files):
        frame = load_frame(path, raw_shape)
        if shape is None:
            shape = frame.shape
        elif frame.shape != shape:
            raise StructuralError(f"{path.name} has shape {frame.shape}, expected {shape}")
        mask = gen_mask(shape[0], shape[1], rho, rng=rng)
        slices.append(MaskedSlice(frame / 255.0, mask, t))
    return StreamSource(shape[0], shape[1], slices, None)
