"""Side-information model.

A compact per-frame summary vector is pooled from the latent code, coded
with residual vector quantization into a fixed tuple of 10-bit indices, and
expanded at both ends into per-dimension Gaussian parameters. The same
expansion serves two consumers: it conditions the entropy coder for
received frames, and its mean is the concealment prediction for lost
frames. When no copy of the summary survives, a decaying repeat of the last
emitted latent stands in, with inflated spread.

Codebooks are produced offline by `calibrate` (residual k-means with
deterministic farthest-point seeding) together with a per-band spread table
measured on the calibration corpus. Model parameters travel in a small
binary file; see `save_model` / `load_model`.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .seeds import derive
from .transform import STEP_REF

CODEBOOK_BITS = 10
CODEBOOK_SIZE = 1 << CODEBOOK_BITS
D_Z_DEFAULT = 16
SIGMA_MIN_DEFAULT = 0.05 * STEP_REF
RHO_DEFAULT = 0.9
KAPPA_DEFAULT = 4.0

MODEL_MAGIC = b"GLRM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class SideInfo:
    """Fixed-length index tuple describing one frame's summary vector."""

    indices: tuple[int, ...]
    frame_index: int
    masked: tuple[bool, ...] = ()

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", indices)
        masked = tuple(self.masked) if self.masked else (False,) * len(indices)
        object.__setattr__(self, "masked", masked)
        if len(masked) != len(indices):
            raise ValueError("mask length must equal stage count")
        for i in indices:
            if not 0 <= i < CODEBOOK_SIZE:
                raise ValueError(f"side-info index {i} out of range")

    @property
    def stages(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class RvqCodebooks:
    """Stacked per-stage codebooks, each CODEBOOK_SIZE centroids of dim d_z."""

    stages: np.ndarray  # (q, CODEBOOK_SIZE, d_z)
    checksum: int

    def __post_init__(self):
        stages = np.ascontiguousarray(self.stages, dtype=np.float64)
        object.__setattr__(self, "stages", stages)
        if stages.ndim != 3 or stages.shape[1] != CODEBOOK_SIZE:
            raise ValueError(f"bad codebook shape {stages.shape}")
        if not np.all(np.isfinite(stages)):
            raise ValueError("non-finite centroid")

    @classmethod
    def from_stages(cls, stages: np.ndarray) -> "RvqCodebooks":
        stages = np.ascontiguousarray(stages, dtype=np.float64)
        return cls(stages, zlib.crc32(stages.tobytes()) & 0xFFFFFFFF)

    @property
    def n_stages(self) -> int:
        return int(self.stages.shape[0])

    @property
    def d_z(self) -> int:
        return int(self.stages.shape[2])


@dataclass(frozen=True)
class GaussianParams:
    """Per-dimension mean and spread conditioning the entropy coder."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if mu.shape != sigma.shape:
            raise ValueError("mu/sigma shape mismatch")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("non-finite Gaussian parameters")
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ConfidenceTokens:
    """Additive markers distinguishing concealment with and without side info."""

    m_high: np.ndarray
    m_low: np.ndarray
    m_z: np.ndarray  # (q, d_z) per-stage substitute for missing stages

    def __post_init__(self):
        object.__setattr__(self, "m_high", np.asarray(self.m_high, dtype=np.float64))
        object.__setattr__(self, "m_low", np.asarray(self.m_low, dtype=np.float64))
        object.__setattr__(self, "m_z", np.atleast_2d(np.asarray(self.m_z, dtype=np.float64)))
        for arr in (self.m_high, self.m_low, self.m_z):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite confidence token")

    @classmethod
    def zeros(cls, d_y: int, q: int, d_z: int) -> "ConfidenceTokens":
        return cls(np.zeros(d_y), np.zeros(d_y), np.zeros((max(q, 1), d_z)))


@dataclass(frozen=True)
class CodecModel:
    """Everything the encoder and receiver share: dims, tables, codebooks."""

    d_l: int
    d_y: int
    d_z: int
    q: int
    sigma_min: float
    rho: float
    kappa: float
    sigma_table: np.ndarray
    tokens: ConfidenceTokens
    codebooks: RvqCodebooks | None
    version: int = MODEL_VERSION

    def __post_init__(self):
        object.__setattr__(
            self, "sigma_table", np.asarray(self.sigma_table, dtype=np.float64)
        )
        if self.d_y % self.d_z != 0:
            raise ValueError(
                f"latent dimension {self.d_y} not divisible by side-info dimension {self.d_z}"
            )
        if self.sigma_table.shape != (self.d_y,):
            raise ValueError("sigma_table must have one entry per latent dimension")
        if self.q > 0 and (self.codebooks is None or self.codebooks.n_stages < self.q):
            raise ValueError(f"model requires {self.q} codebook stages")

    @property
    def block(self) -> int:
        return self.d_y // self.d_z

    @property
    def content_crc(self) -> int:
        try:
            return self._crc  # type: ignore[attr-defined]
        except AttributeError:
            crc = zlib.crc32(_model_body(self)) & 0xFFFFFFFF
            object.__setattr__(self, "_crc", crc)
            return crc


def hyper_analysis(coeffs: np.ndarray, d_z: int) -> np.ndarray:
    """Pool a latent code into d_z band means."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.size % d_z != 0:
        raise ValueError(
            f"latent dimension {coeffs.size} not divisible by side-info dimension {d_z}"
        )
    return coeffs.reshape(d_z, -1).mean(axis=1)


def rvq_encode(
    v: np.ndarray,
    books: RvqCodebooks,
    n_stages: int | None = None,
    frame_index: int = 0,
) -> SideInfo:
    """Greedy residual quantization: each stage picks the nearest centroid of
    the running residual (squared Euclidean, ties to the lowest index)."""
    residual = np.asarray(v, dtype=np.float64).copy()
    if residual.shape != (books.d_z,):
        raise ValueError(f"vector dimension {residual.shape} != ({books.d_z},)")
    q = books.n_stages if n_stages is None else n_stages
    if q > books.n_stages:
        raise ValueError(f"requested {q} stages, codebooks have {books.n_stages}")
    indices = []
    for s in range(q):
        cents = books.stages[s]
        d2 = np.einsum("kd,kd->k", cents, cents) - 2.0 * (cents @ residual)
        idx = int(np.argmin(d2))
        indices.append(idx)
        residual -= cents[idx]
    return SideInfo(tuple(indices), frame_index)


def rvq_decode(
    si: SideInfo, books: RvqCodebooks, mask_tokens: np.ndarray | None = None
) -> np.ndarray:
    """Sum the indexed centroids; masked stages contribute their mask token."""
    if si.stages > books.n_stages:
        raise ValueError(f"side info has {si.stages} stages, codebooks {books.n_stages}")
    out = np.zeros(books.d_z)
    for s, (idx, masked) in enumerate(zip(si.indices, si.masked)):
        if masked:
            if mask_tokens is not None:
                out += mask_tokens[s]
        else:
            if idx >= CODEBOOK_SIZE:
                raise ValueError(f"corrupt stream: side-info index {idx} out of range")
            out += books.stages[s, idx]
    return out


def hyper_synthesis(
    z_hat: np.ndarray | None,
    model: CodecModel,
    prev_yhat: np.ndarray | None = None,
    fully_masked: bool = False,
) -> GaussianParams:
    """Expand a decoded summary into Gaussian parameters over the latent.

    With a summary available, the mean is its block-wise broadcast and the
    spread comes from the calibrated table. With the summary fully missing,
    the mean decays the previous emitted latent (rho per frame) and the
    spread is inflated by kappa. The spread is floored at sigma_min either
    way.
    """
    if fully_masked:
        if prev_yhat is None:
            mu = np.zeros(model.d_y)
        else:
            mu = model.rho * np.asarray(prev_yhat, dtype=np.float64)
        sigma = model.kappa * model.sigma_table
    else:
        z_hat = np.zeros(model.d_z) if z_hat is None else np.asarray(z_hat, dtype=np.float64)
        if z_hat.shape != (model.d_z,):
            raise ValueError(f"summary dimension {z_hat.shape} != ({model.d_z},)")
        mu = np.repeat(z_hat, model.block)
        sigma = model.sigma_table
    return GaussianParams(mu, np.maximum(sigma, model.sigma_min))


def plc_predict(theta: GaussianParams) -> np.ndarray:
    """Concealment prediction: the model mean (squared-error optimal)."""
    return theta.mu.copy()


def apply_confidence(
    y_p: np.ndarray, z_fully_available: bool, tokens: ConfidenceTokens
) -> np.ndarray:
    """Add the high- or low-confidence token to a concealment prediction."""
    token = tokens.m_high if z_fully_available else tokens.m_low
    return np.asarray(y_p, dtype=np.float64) + token


def compose_latent(
    y_q: np.ndarray | None, y_m_p: np.ndarray | None, lost: bool
) -> np.ndarray:
    """Select the frame's output: dequantized symbols if received, the
    concealment prediction if lost."""
    if lost:
        if y_m_p is None:
            raise RuntimeError("internal error: lost frame with no prediction")
        return np.asarray(y_m_p, dtype=np.float64)
    if y_q is None:
        raise RuntimeError("internal error: received frame with no decoded symbols")
    return np.asarray(y_q, dtype=np.float64)


def _kmeans(data: np.ndarray, k: int, iters: int, seed: int) -> np.ndarray:
    """Plain Lloyd iterations with deterministic farthest-point seeding.

    Hand-rolled so that identical (corpus, seed) pairs give identical
    centroids; empty clusters keep their previous centroid. With fewer
    points than centroids, duplicates are expected and harmless.
    """
    n, d = data.shape
    cents = np.empty((k, d))
    first = derive(seed, 0x5EED) % n
    cents[0] = data[first]
    min_d2 = np.einsum("nd,nd->n", data - cents[0], data - cents[0])
    for j in range(1, k):
        nxt = int(np.argmax(min_d2))
        cents[j] = data[nxt]
        diff = data - cents[j]
        np.minimum(min_d2, np.einsum("nd,nd->n", diff, diff), out=min_d2)
    sq_data = np.einsum("nd,nd->n", data, data)
    for _ in range(iters):
        d2 = sq_data[:, None] - 2.0 * (data @ cents.T) + np.einsum("kd,kd->k", cents, cents)
        assign = np.argmin(d2, axis=1)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros((k, d))
        np.add.at(sums, assign, data)
        occupied = counts > 0
        cents[occupied] = sums[occupied] / counts[occupied, None]
    return cents


def calibrate(
    codes: np.ndarray,
    q: int,
    seed: int,
    d_z: int = D_Z_DEFAULT,
    sigma_min: float = SIGMA_MIN_DEFAULT,
    kmeans_iters: int = 25,
) -> tuple[RvqCodebooks | None, np.ndarray]:
    """Train the residual codebooks and the per-band spread table.

    `codes` is an (n, d_y) matrix of latent codes. Returns the codebooks
    (None when q == 0) and the d_y-long spread table, which holds the
    per-band standard deviation of the latent minus its broadcast decoded
    summary, floored at sigma_min.
    """
    codes = np.asarray(codes, dtype=np.float64)
    n, d_y = codes.shape
    if d_y % d_z != 0:
        raise ValueError(
            f"latent dimension {d_y} not divisible by side-info dimension {d_z}"
        )
    block = d_y // d_z
    vectors = codes.reshape(n, d_z, block).mean(axis=2)
    if q > 0 and n < 100 * CODEBOOK_SIZE:
        warnings.warn(
            f"calibration corpus has {n} vectors, below the recommended "
            f"{100 * CODEBOOK_SIZE}; duplicated centroids are likely",
            stacklevel=2,
        )
    books = None
    residual = vectors.copy()
    if q > 0:
        stages = np.empty((q, CODEBOOK_SIZE, d_z))
        for s in range(q):
            # last slot pinned to the exact zero vector: choosing it leaves
            # the residual unchanged, so per-stage residual energy can never
            # grow, for any input
            cents = np.zeros((CODEBOOK_SIZE, d_z))
            cents[:-1] = _kmeans(residual, CODEBOOK_SIZE - 1, kmeans_iters, derive(seed, s))
            d2 = (
                np.einsum("nd,nd->n", residual, residual)[:, None]
                - 2.0 * (residual @ cents.T)
                + np.einsum("kd,kd->k", cents, cents)
            )
            assign = np.argmin(d2, axis=1)
            residual -= cents[assign]
            stages[s] = cents
        books = RvqCodebooks.from_stages(stages)
    z_hat = vectors - residual  # sum of all stage reconstructions
    resid_y = codes - np.repeat(z_hat, block, axis=1)
    band_sigma = resid_y.reshape(n, d_z, block).std(axis=(0, 2))
    sigma_table = np.maximum(np.repeat(band_sigma, block), sigma_min)
    return books, sigma_table


def _model_body(model: CodecModel) -> bytes:
    parts = [
        MODEL_MAGIC,
        struct.pack(
            "<HHHHB",
            model.version,
            model.d_l,
            model.d_y,
            model.d_z,
            model.q,
        ),
        struct.pack("<ddd", model.sigma_min, model.rho, model.kappa),
        model.sigma_table.astype("<f8").tobytes(),
        model.tokens.m_high.astype("<f8").tobytes(),
        model.tokens.m_low.astype("<f8").tobytes(),
    ]
    if model.q > 0:
        parts.append(model.tokens.m_z[: model.q].astype("<f8").tobytes())
        parts.append(model.codebooks.stages[: model.q].astype("<f8").tobytes())
    return b"".join(parts)


def save_model(path, model: CodecModel) -> int:
    """Write the model file; returns its content CRC32."""
    body = _model_body(model)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", crc))
    return crc


def load_model(path) -> CodecModel:
    """Read and validate a model file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 9 + 24 + 4 or blob[:4] != MODEL_MAGIC:
        raise ValueError("not a codec model file")
    body, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise ValueError("corrupt model file (checksum mismatch)")
    off = 4
    version, d_l, d_y, d_z, q = struct.unpack_from("<HHHHB", body, off)
    off += 9
    sigma_min, rho, kappa = struct.unpack_from("<ddd", body, off)
    off += 24

    def take(n_floats: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(body, dtype="<f8", count=n_floats, offset=off)
        off += 8 * n_floats
        return arr.astype(np.float64)

    sigma_table = take(d_y)
    m_high = take(d_y)
    m_low = take(d_y)
    if q > 0:
        m_z = take(q * d_z).reshape(q, d_z)
        stages = take(q * CODEBOOK_SIZE * d_z).reshape(q, CODEBOOK_SIZE, d_z)
        books = RvqCodebooks.from_stages(stages)
    else:
        m_z = np.zeros((1, d_z))
        books = None
    if off != len(body):
        raise ValueError("corrupt model file (length mismatch)")
    tokens = ConfidenceTokens(m_high, m_low, m_z)
    return CodecModel(
        d_l=d_l,
        d_y=d_y,
        d_z=d_z,
        q=q,
        sigma_min=sigma_min,
        rho=rho,
        kappa=kappa,
        sigma_table=sigma_table,
        tokens=tokens,
        codebooks=books,
        version=version,
    )
