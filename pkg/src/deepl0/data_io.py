"""Synthetic data, MNIST IDX reading, patch preprocessing and on-disk formats.

Formats
-------
IDX (read only)
    big-endian magic ``0x00000803`` (images) or ``0x00000801`` (labels),
    one big-endian u32 per dimension, then raw unsigned bytes.
Matrix file (``DL0M``)
    ASCII header line ``DL0M v1 <rows> <cols> [<fingerprint>]`` followed by
    ``rows * cols`` little-endian float64 values in row-major order.
Checkpoint (``DL0E``)
    4-byte magic ``DL0E``, u32 version, u32 header length, a JSON header
    (kind, dims, tensor table, metadata), then the tensors as little-endian
    float64, row-major, in header order. All integers little-endian.
"""
from dataclasses import dataclass, field
import json
import os
import struct

import numpy as np

from .encoders import EncoderParams, Kind
from .solvers import Dictionary


class FormatError(ValueError):
    """Bad magic number or malformed header."""


class TruncatedFileError(FormatError):
    pass


class DimensionError(FormatError):
    """Header dimensions are impossible for this reader."""


class VersionError(FormatError):
    pass


class EmptyDatasetError(ValueError):
    pass


IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MATRIX_MAGIC = "DL0M"
MATRIX_VERSION = "v1"
CHECKPOINT_MAGIC = b"DL0E"
CHECKPOINT_VERSION = 1
_MAX_IDX_BYTES = 1 << 34


@dataclass
class DatasetMeta:
    n: int
    m: int
    source: dict
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n <= 0 or self.m <= 0:
            raise ValueError("dataset must be non-empty")


# -- synthetic --------------------------------------------------------------

def synth_generate(m, p, n, M_true, noise, seed, n_classes=0):
    """Planted dictionary and exactly ``M_true``-sparse codes.

    Atoms are Gaussian, normalized to unit length. Nonzero magnitudes are
    ``+-Uniform[0.5, 1.5]`` on a uniformly drawn support; samples are
    ``D a + noise * N(0, I)``. With ``n_classes > 0`` the atoms are split into
    contiguous class blocks, each sample draws its support from its class
    block, and the labels are returned as a fourth element.

    Returns ``(Dictionary, samples (n, m), codes (n, p)[, labels])``.
    """
    if not 1 <= M_true <= p:
        raise ValueError(f"M_true={M_true} outside [1, {p}]")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((m, p))
    raw /= np.linalg.norm(raw, axis=0)
    codes = np.zeros((n, p))
    labels = None
    if n_classes:
        blocks = np.array_split(np.arange(p), n_classes)
        if min(len(b) for b in blocks) < M_true:
            raise ValueError("class blocks are smaller than the sparsity level")
        labels = rng.integers(0, n_classes, size=n)
    for i in range(n):
        pool = blocks[labels[i]] if n_classes else p
        support = rng.choice(pool, size=M_true, replace=False)
        mags = rng.uniform(0.5, 1.5, size=M_true)
        signs = rng.choice((-1.0, 1.0), size=M_true)
        codes[i, support] = signs * mags
    dct = Dictionary.from_matrix(raw)
    samples = codes @ dct.D.T
    if noise:
        samples = samples + noise * rng.standard_normal((n, m))
    if n_classes:
        return dct, samples, codes, labels
    return dct, samples, codes


# -- IDX --------------------------------------------------------------------

def idx_read(path):
    """Read an IDX file of unsigned bytes.

    Image files (magic 0x803) come back as ``(n, rows, cols)`` floats in
    [0, 1]; label files (magic 0x801) as an ``(n,)`` int64 array.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: expected at least 4 header bytes, got {len(data)}")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFileError(f"{path}: expected {header} header bytes, got {len(data)}")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_IDX_BYTES:
        raise DimensionError(f"{path}: dimensions {dims} exceed the supported size")
    expected = header + count
    if len(data) < expected:
        raise TruncatedFileError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)
    if magic == IDX_LABELS:
        return raw.astype(np.int64)
    return raw.astype(np.float64) / 255.0


def idx_write(path, array, labels=False):
    """Write unsigned bytes in IDX layout (used for fixtures and tests)."""
    arr = np.asarray(array, dtype=np.uint8)
    magic = IDX_LABELS if labels else IDX_IMAGES
    if (magic & 0xFF) != arr.ndim:
        raise ValueError(f"IDX magic 0x{magic:08x} needs a {magic & 0xFF}-D array")
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


# -- preprocessing ----------------------------------------------------------

def resize_bilinear(images, size):
    """Bilinear resize with corner-aligned sampling (same size is the identity)."""
    imgs = np.asarray(images, dtype=np.float64)
    single = imgs.ndim == 2
    imgs = np.atleast_3d(imgs) if not single else imgs[None]
    H, W = imgs.shape[1:]
    h, w = size
    if (H, W) == (h, w):
        return imgs[0].copy() if single else imgs.copy()

    def axis(n_in, n_out):
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1)) if n_out > 1 else np.zeros(1)
        lo = np.clip(np.floor(pos).astype(int), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(H, h)
    c0, c1, fc = axis(W, w)
    top = imgs[:, r0][:, :, c0] * (1 - fc) + imgs[:, r0][:, :, c1] * fc
    bot = imgs[:, r1][:, :, c0] * (1 - fc) + imgs[:, r1][:, :, c1] * fc
    out = top * (1 - fr)[:, None] + bot * fr[:, None]
    return out[0] if single else out


def standardize(samples, std_floor=0.02):
    """Zero-mean, unit-std rows; rows with std below ``std_floor`` are dropped.

    Returns ``(standardized, kept_mask)``.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    mu = X.mean(axis=1, keepdims=True)
    Xc = X - mu
    sd = Xc.std(axis=1)
    keep = sd >= std_floor
    if not np.any(keep):
        raise EmptyDatasetError("every sample fell below the std floor")
    Xk = Xc[keep]
    Xk = Xk / sd[keep, None]
    # one more centering pass removes the rounding residue of the first
    Xk -= Xk.mean(axis=1, keepdims=True)
    return Xk, keep


def patch_preprocess(images, target=(16, 16), std_floor=0.02, return_mask=False):
    """Resize to ``target``, flatten, remove mean, normalize std, drop flat patches."""
    resized = resize_bilinear(images, target)
    flat = resized.reshape(len(resized), -1)
    X, keep = standardize(flat, std_floor)
    return (X, keep) if return_mask else X


# -- matrix files -----------------------------------------------------------

def save_matrix(path, array, fingerprint=None):
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError("only 2-D arrays can be saved")
    header = f"{MATRIX_MAGIC} {MATRIX_VERSION} {arr.shape[0]} {arr.shape[1]}"
    if fingerprint:
        header += f" {fingerprint}"
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_matrix(path, return_fingerprint=False):
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) not in (4, 5) or parts[0] != MATRIX_MAGIC:
        raise FormatError(f"{path}: not a {MATRIX_MAGIC} file")
    if parts[1] != MATRIX_VERSION:
        raise VersionError(f"{path}: unsupported version {parts[1]}")
    rows, cols = int(parts[2]), int(parts[3])
    payload = data[nl + 1:]
    if len(payload) != 8 * rows * cols:
        raise TruncatedFileError(
            f"{path}: expected {8 * rows * cols} payload bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
    if return_fingerprint:
        return arr, (parts[4] if len(parts) == 5 else None)
    return arr


save_codes = save_matrix
load_codes = load_matrix


def save_dictionary(path, dictionary, fingerprint=None):
    save_matrix(path, dictionary.D, fingerprint)


def load_dictionary(path):
    """Load unit-norm atoms; they are kept bit for bit and only the scale is recomputed."""
    D = load_matrix(path)
    fresh = Dictionary.from_matrix(D)
    if np.allclose(fresh.column_norms, 1.0, rtol=0, atol=1e-12):
        return Dictionary(D=D, column_norms=fresh.column_norms, spectral_scale=fresh.spectral_scale)
    return fresh


# -- checkpoints ------------------------------------------------------------

def _tensor_table(params):
    out = []
    if params.kind is Kind.MLP:
        for i, (W, b) in enumerate(params.mlp_weights):
            out += [(f"W{i}", W), (f"b{i}", b)]
    else:
        out += [("W", params.W), ("S", params.S)]
        if params.theta is not None:
            out.append(("theta", params.theta))
    if params.head is not None:
        out.append(("head", params.head))
    return out


def save_checkpoint(params, path, metadata=None):
    table = _tensor_table(params)
    header = {
        "kind": params.kind.value,
        "K": params.K,
        "M": params.M,
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in table],
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
        f.write(hbytes)
        for _, t in table:
            f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, return_metadata=False):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    if len(data) < 12 + hlen:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    sizes = [int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"]]
    expected = 12 + hlen + 8 * sum(sizes)
    if len(data) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(data)}")
    off = 12 + hlen
    tensors = {}
    for t, size in zip(header["tensors"], sizes):
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off)
        tensors[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
        off += 8 * size
    kind = Kind(header["kind"])
    if kind is Kind.MLP:
        params = EncoderParams(kind, mlp_weights=[(tensors[f"W{i}"], tensors[f"b{i}"])
                                                  for i in range(4)],
                               head=tensors.get("head"))
    else:
        params = EncoderParams(kind, W=tensors["W"], S=tensors["S"], theta=tensors.get("theta"),
                               M=header["M"], K=header["K"], head=tensors.get("head"))
    if return_metadata:
        return params, header["metadata"]
    return params
