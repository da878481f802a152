"""Random product codes on the sphere and their list decoder.

A code is a set of rotations, each applied to the Cartesian product of ``b``
small block codebooks. Every block codeword has norm 1/sqrt(b), so every
concatenation is a unit vector. Codewords are addressed by a flat integer
id: ``rotation * q**b + sum(j_i * q**(b-1-i))`` where ``q`` is the per-block
codebook size, which orders ids lexicographically by (rotation, blocks).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .sphere import AngleSpec, BandEstimate, pair_at_separation, sample_unit_vectors, wilson_interval

FORMAT_VERSION = 1


class ConfigurationError(ValueError):
    pass


class CodewordId(NamedTuple):
    rotation_index: int
    block_indices: tuple


def choose_blocks(d: int) -> int:
    """Divisor of d nearest to round(log2 d), preferring the smaller on ties."""
    target = max(1, round(math.log2(d)))
    divisors = [k for k in range(1, d + 1) if d % k == 0]
    return min(divisors, key=lambda k: (abs(k - target), k))


def block_size(M: float, b: int) -> int:
    """Per-block codebook size ceil(M^(1/b)), robust to float noise."""
    root = float(M) ** (1.0 / b)
    near = round(root)
    if near >= 1 and abs(root - near) < 1e-9 * max(1.0, root):
        return int(near)
    return max(1, math.ceil(root))


def haar_rotation(d: int, rng) -> np.ndarray:
    """Haar-random rotation with determinant +1."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True, eq=False)
class RpcDescription:
    d: int
    b: int
    q: int
    codebooks: np.ndarray  # (b, q, d // b)
    rotations: np.ndarray  # (t, d, d)
    M_nominal: float

    @property
    def block_dim(self) -> int:
        return self.d // self.b

    @property
    def t(self) -> int:
        return self.rotations.shape[0]

    @property
    def M(self) -> int:
        """Realized codewords per rotation."""
        return self.q**self.b

    @property
    def size(self) -> int:
        return self.t * self.M

    def flat_id(self, cid: CodewordId) -> int:
        r, blocks = cid
        if not 0 <= r < self.t or len(blocks) != self.b or not all(0 <= j < self.q for j in blocks):
            raise IndexError(f"codeword id out of range: {cid}")
        code = 0
        for j in blocks:
            code = code * self.q + int(j)
        return r * self.M + code

    def codeword_id(self, flat: int) -> CodewordId:
        flat = int(flat)
        if not 0 <= flat < self.size:
            raise IndexError(f"codeword id out of range: {flat}")
        r, code = divmod(flat, self.M)
        blocks = []
        for _ in range(self.b):
            code, j = divmod(code, self.q)
            blocks.append(j)
        return CodewordId(r, tuple(reversed(blocks)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "rpc",
                "version": FORMAT_VERSION,
                "d": self.d,
                "b": self.b,
                "q": self.q,
                "M_nominal": self.M_nominal,
                "codebooks": self.codebooks.tolist(),
                "rotations": self.rotations.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RpcDescription":
        obj = json.loads(text)
        if obj.get("format") != "rpc" or obj.get("version") != FORMAT_VERSION:
            raise ValueError("not a supported RPC blob")
        return cls(
            d=int(obj["d"]),
            b=int(obj["b"]),
            q=int(obj["q"]),
            codebooks=np.asarray(obj["codebooks"], dtype=float),
            rotations=np.asarray(obj["rotations"], dtype=float),
            M_nominal=float(obj["M_nominal"]),
        )


def sample_rpc(d: int, b: int | None, M: float, t_rotations: int, rng) -> RpcDescription:
    if b is None:
        b = choose_blocks(d)
    if b < 1 or d % b:
        raise ConfigurationError(f"block count {b} does not divide dimension {d}")
    if t_rotations < 1:
        raise ConfigurationError("need at least one rotation")
    if M < 1:
        raise ConfigurationError("code size must be at least 1")
    q = block_size(M, b)
    k = d // b
    books = sample_unit_vectors(b * q, k, rng).reshape(b, q, k) / math.sqrt(b)
    rots = np.stack([haar_rotation(d, rng) for _ in range(t_rotations)])
    return RpcDescription(d, b, q, books, rots, float(M))


def codeword_vector(rpc: RpcDescription, cid) -> np.ndarray:
    if not isinstance(cid, CodewordId):
        cid = rpc.codeword_id(cid)
    rpc.flat_id(cid)  # range check
    r, blocks = cid
    concat = np.concatenate([rpc.codebooks[i, j] for i, j in enumerate(blocks)])
    return rpc.rotations[r] @ concat


def materialize(rpc: RpcDescription) -> np.ndarray:
    """All codewords as rows, in flat-id order."""
    grids = np.indices((rpc.q,) * rpc.b).reshape(rpc.b, -1).T
    concat = np.concatenate([rpc.codebooks[i][grids[:, i]] for i in range(rpc.b)], axis=1)
    return np.concatenate([concat @ rot.T for rot in rpc.rotations])


@dataclass
class DecodeStats:
    nodes: np.ndarray  # (t, b) nodes expanded per rotation and level

    @property
    def total(self) -> int:
        return int(self.nodes.sum())


def _block_products(rpc, x):
    """Per rotation: sorted partial inner products and their codebook indices."""
    k = rpc.block_dim
    for r in range(rpc.t):
        xr = rpc.rotations[r].T @ x
        parts = np.einsum("bqk,bk->bq", rpc.codebooks, xr.reshape(rpc.b, k))
        order = np.argsort(parts, axis=1, kind="stable")
        yield r, np.take_along_axis(parts, order, axis=1), order.astype(np.int64)


def decode_ids(rpc: RpcDescription, x, cos_alpha: float, epsilon: float, stats: DecodeStats | None = None,
               search=None) -> np.ndarray:
    """Sorted flat ids of codewords c with |<x, c> - cos_alpha| <= epsilon."""
    x = np.asarray(getattr(x, "coords", x), dtype=float)
    if x.shape != (rpc.d,):
        raise ValueError(f"expected a vector of dimension {rpc.d}")
    search = search or kernels.decode_block_search
    lo, hi = cos_alpha - epsilon, cos_alpha + epsilon
    found = []
    nodes = np.zeros((rpc.t, rpc.b), dtype=np.int64)
    for r, vals, order in _block_products(rpc, x):
        cap = 64
        while True:
            ids, lvl, n = search(vals, order, lo, hi, r * rpc.M, cap)
            if n <= cap:
                break
            cap = int(n)
        nodes[r] = lvl
        found.append(np.asarray(ids, dtype=np.int64))
    if stats is not None:
        stats.nodes = nodes
    return np.sort(np.concatenate(found)) if found else np.empty(0, dtype=np.int64)


def decode(rpc: RpcDescription, x, cos_alpha: float, epsilon: float) -> list[CodewordId]:
    return [rpc.codeword_id(i) for i in decode_ids(rpc, x, cos_alpha, epsilon)]


def decode_many(rpc: RpcDescription, points: np.ndarray, cos_alpha: float, epsilon: float):
    """Decode each row; returns CSR arrays (ptr, ids)."""
    ptr = np.zeros(len(points) + 1, dtype=np.int64)
    chunks = []
    for i, x in enumerate(points):
        ids = decode_ids(rpc, x, cos_alpha, epsilon)
        chunks.append(ids)
        ptr[i + 1] = ptr[i] + ids.size
    ids = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return ptr, ids


def brute_force_decode(rpc: RpcDescription, x, cos_alpha: float, epsilon: float, codewords=None) -> np.ndarray:
    if codewords is None:
        codewords = materialize(rpc)
    t = codewords @ np.asarray(x, dtype=float)
    return np.nonzero(np.abs(t - cos_alpha) <= epsilon)[0].astype(np.int64)


def prefix_counts(rpc: RpcDescription, survivors: np.ndarray) -> np.ndarray:
    """(t, b): distinct surviving block prefixes of each length per rotation."""
    out = np.zeros((rpc.t, rpc.b), dtype=np.int64)
    for r in range(rpc.t):
        codes = survivors[(survivors >= r * rpc.M) & (survivors < (r + 1) * rpc.M)] - r * rpc.M
        for level in range(rpc.b):
            out[r, level] = np.unique(codes // rpc.q ** (rpc.b - 1 - level)).size
    return out


def mc_collision_probability(d, b, M, spec: AngleSpec, n_trials, rng, t_rotations=1):
    """Fraction of fresh codes under which a fixed pair shares a codeword.

    ``x`` is decoded at ``spec.cos_alpha`` and ``y`` at ``spec.cos_beta``; the
    pair sits at separation ``spec.cos_theta``.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    x, y = pair_at_separation(d, spec.cos_theta, rng)
    hits = 0
    for _ in range(n_trials):
        code = sample_rpc(d, b, M, t_rotations, rng)
        rx = decode_ids(code, x, spec.cos_alpha, spec.epsilon)
        if rx.size == 0:
            continue
        ry = decode_ids(code, y, spec.cos_beta, spec.epsilon)
        if np.intersect1d(rx, ry, assume_unique=True).size:
            hits += 1
    lo, hi = wilson_interval(hits, n_trials)
    return BandEstimate(hits, n_trials, hits / n_trials, lo, hi, hits == 0)
