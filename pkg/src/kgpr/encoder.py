"""Two-tower hashed bag-of-words encoder and its checkpoint format."""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DegenerateEmbeddingError, EmptyTextError
from .kg import Triplet
from .rng import check_seed, derive_seed, uniform_array

NORM_EPS = 1e-12
INIT_RANGE = 0.05
CKPT_MAGIC = b"GPR1"

_TOKEN_RE = re.compile(r"[^\W_]+")
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=1 << 18)
def fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def token_buckets(text: str, buckets: int) -> np.ndarray:
    return np.fromiter((fnv1a64(tok) % buckets for tok in tokenize(text)), dtype=np.int64)


def serialize_triplet(t: Triplet) -> str:
    return f"{t.head} | {t.relation} | {t.tail}"


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    buckets: int = 32768

    def __post_init__(self) -> None:
        if self.dim < 2 or self.buckets < 2:
            raise ValueError("dim and buckets must both be >= 2")


class TowerParams:
    """Embedding table of one tower, shape ``(buckets, dim)``."""

    def __init__(self, table: np.ndarray) -> None:
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or min(table.shape) < 2:
            raise ValueError(f"embedding table must be 2-D with both sides >= 2, got {table.shape}")
        if not np.all(np.isfinite(table)):
            raise ValueError("embedding table has non-finite entries")
        self.table = table

    @classmethod
    def init(cls, config: EncoderConfig, seed: int) -> "TowerParams":
        shape = (config.buckets, config.dim)
        return cls(uniform_array(seed, shape, -INIT_RANGE, INIT_RANGE))

    @property
    def buckets(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self) -> "TowerParams":
        return TowerParams(self.table.copy())


def encode(tower: TowerParams, text: str) -> np.ndarray:
    """Mean of the hashed-bucket rows of ``text``'s tokens."""
    idx = token_buckets(text, tower.buckets)
    if idx.size == 0:
        raise EmptyTextError(f"text {text!r} has no tokens to encode")
    return tower.table[idx].mean(axis=0)


def encode_question(q_tower: TowerParams, q) -> np.ndarray:
    return encode(q_tower, q if isinstance(q, str) else q.text)


def encode_triplet(t_tower: TowerParams, t: Triplet) -> np.ndarray:
    return encode(t_tower, serialize_triplet(t))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= NORM_EPS or nb <= NORM_EPS:
        raise DegenerateEmbeddingError("cosine of a near-zero-norm embedding is undefined")
    return min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb)))


class DualEncoder:
    """Query tower plus triplet tower; the two share no parameters."""

    def __init__(self, query: TowerParams, triplet: TowerParams, seed: int = 0) -> None:
        self.query = query
        self.triplet = triplet
        self.seed = check_seed(seed)
        self._fingerprint: str | None = None

    @classmethod
    def init(cls, config: EncoderConfig, seed: int) -> "DualEncoder":
        return cls(
            TowerParams.init(config, derive_seed(seed, 1)),
            TowerParams.init(config, derive_seed(seed, 2)),
            seed,
        )

    @property
    def config(self) -> EncoderConfig:
        return EncoderConfig(dim=self.triplet.dim, buckets=self.triplet.buckets)

    def copy(self) -> "DualEncoder":
        return DualEncoder(self.query.copy(), self.triplet.copy(), self.seed)

    def changed(self) -> None:
        """Drop the cached fingerprint; call after mutating either table."""
        self._fingerprint = None

    def to_bytes(self) -> bytes:
        q, t = self.query.table, self.triplet.table
        header = CKPT_MAGIC + struct.pack("<4I", q.shape[0], q.shape[1], t.shape[0], t.shape[1])
        return header + q.astype("<f4").tobytes() + t.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, seed: int = 0) -> "DualEncoder":
        if len(data) < 20 or data[:4] != CKPT_MAGIC:
            raise CheckpointError("not a checkpoint (bad magic)")
        vq, dq, vt, dt = struct.unpack_from("<4I", data, 4)
        nq, nt = vq * dq, vt * dt
        if len(data) != 20 + 4 * (nq + nt):
            raise CheckpointError("checkpoint size does not match its header")
        flat = np.frombuffer(data, dtype="<f4", offset=20).astype(np.float64)
        return cls(
            TowerParams(flat[:nq].reshape(vq, dq).copy()),
            TowerParams(flat[nq:].reshape(vt, dt).copy()),
            seed,
        )

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = fingerprint_bytes(self.to_bytes())
        return self._fingerprint


def fingerprint_bytes(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def save_checkpoint(model: DualEncoder, path: str | Path, metadata: dict | None = None) -> str:
    """Write the binary checkpoint and its ``.json`` sidecar; returns the fingerprint."""
    data = model.to_bytes()
    Path(path).write_bytes(data)
    fp = fingerprint_bytes(data)
    sidecar = {
        "seed": model.seed,
        "config": asdict(model.config),
        "fingerprint": fp,
        "training": metadata or {},
    }
    Path(f"{path}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return fp


def load_checkpoint(path: str | Path) -> DualEncoder:
    data = Path(path).read_bytes()
    seed = 0
    sidecar = Path(f"{path}.json")
    if sidecar.exists():
        seed = json.loads(sidecar.read_text()).get("seed", 0)
    model = DualEncoder.from_bytes(data, seed)
    model._fingerprint = fingerprint_bytes(data)
    return model
