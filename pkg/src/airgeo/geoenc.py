"""Geolocation featurizations and contrastively pretrained location encoders.

Four ways to turn (latitude, longitude) into model inputs: raw degrees,
sinusoidal wrapping, multi-band Fourier expansion, and real spherical
harmonics. A small MLP on top of a fixed positional expansion forms the
location encoder; it is aligned to per-location context vectors with a
symmetric InfoNCE loss and frozen afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import arrayio
from .nncore import Adam, Dense

COORD_QUANTUM = 1e-5  # embedding-table key resolution, degrees


@dataclass(frozen=True)
class GeoCoord:
    """Latitude in [-90, 90], longitude in (-180, 180], degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (np.isfinite(self.lat) and np.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside (-180, 180]")


def featurize_raw(c: GeoCoord) -> np.ndarray:
    """[lat, lon] in degrees; scaling happens with the other features."""
    return np.array([c.lat, c.lon])


def featurize_sinusoidal(c: GeoCoord) -> np.ndarray:
    """[sin lat, cos lat, sin lon, cos lon], angles in radians."""
    la, lo = np.radians(c.lat), np.radians(c.lon)
    return np.array([np.sin(la), np.cos(la), np.sin(lo), np.cos(lo)])


def fourier_encode(c: GeoCoord, k: int) -> np.ndarray:
    """4k-band expansion: sin/cos of 2^j * pi * coord for j < k, lat then lon.

    Coordinates are pre-normalized to [-1, 1] (lat/90, lon/180) so every band
    argument stays bounded.
    """
    return fourier_basis(np.array([[c.lat, c.lon]]), k)[0]


def fourier_basis(coords: np.ndarray, k: int) -> np.ndarray:
    """Vectorized fourier_encode over (N, 2) degree coordinates -> (N, 4k)."""
    if k < 1:
        raise ValueError(f"band count k must be >= 1, got {k}")
    coords = np.asarray(coords, dtype=np.float64)
    lat_n = coords[:, 0] / 90.0
    lon_n = coords[:, 1] / 180.0
    freqs = (2.0 ** np.arange(k)) * np.pi  # (k,)
    out = np.empty((coords.shape[0], 4 * k))
    lat_arg = lat_n[:, None] * freqs[None, :]
    lon_arg = lon_n[:, None] * freqs[None, :]
    out[:, 0 : 2 * k : 2] = np.sin(lat_arg)
    out[:, 1 : 2 * k : 2] = np.cos(lat_arg)
    out[:, 2 * k :: 2] = np.sin(lon_arg)
    out[:, 2 * k + 1 :: 2] = np.cos(lon_arg)
    return out


def spherical_encode(c: GeoCoord, L: int) -> np.ndarray:
    """Real orthonormal spherical harmonics up to degree L -> ((L+1)^2,)."""
    return spherical_basis(np.array([[c.lat, c.lon]]), L)[0]


def spherical_basis(coords: np.ndarray, L: int) -> np.ndarray:
    """Vectorized spherical_encode over (N, 2) degree coordinates.

    Uses the stable normalized associated-Legendre recurrence (geodesy sign
    convention, no Condon-Shortley phase); basis ordered l = 0..L with
    m = -l..l inside each degree. Orthonormal over the unit sphere.
    """
    if L < 0:
        raise ValueError(f"max degree L must be >= 0, got {L}")
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    theta = np.pi / 2.0 - np.radians(coords[:, 0])  # colatitude
    lam = np.radians(coords[:, 1])
    ct, st = np.cos(theta), np.sin(theta)

    # pbar[m][l] holds the normalized P_l^m over all points
    pbar = [[None] * (L + 1) for _ in range(L + 1)]
    pbar[0][0] = np.full(n, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(1, L + 1):
        pbar[m][m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * pbar[m - 1][m - 1]
    for m in range(L):
        pbar[m][m + 1] = np.sqrt(2.0 * m + 3.0) * ct * pbar[m][m]
    for m in range(L + 1):
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            pbar[m][l] = a * (ct * pbar[m][l - 1] - b * pbar[m][l - 2])

    out = np.empty((n, (L + 1) ** 2))
    col = 0
    sq2 = np.sqrt(2.0)
    for l in range(L + 1):
        for m in range(-l, l + 1):
            if m == 0:
                out[:, col] = pbar[0][l]
            elif m > 0:
                out[:, col] = sq2 * pbar[m][l] * np.cos(m * lam)
            else:
                out[:, col] = sq2 * pbar[-m][l] * np.sin(-m * lam)
            col += 1
    return out


@dataclass(frozen=True)
class PositionalEncoding:
    """Fixed coordinate expansion feeding the location encoder MLP.

    kind: raw | sinusoidal | fourier | spherical; `param` is the band count k
    for fourier and the max degree L for spherical.
    """

    kind: str
    param: int = 0

    _DIMS = {"raw": 2, "sinusoidal": 4}

    def __post_init__(self):
        if self.kind in ("raw", "sinusoidal"):
            return
        if self.kind == "fourier":
            if self.param < 1:
                raise ValueError("fourier encoding needs k >= 1")
        elif self.kind == "spherical":
            if self.param < 0:
                raise ValueError("spherical encoding needs L >= 0")
        else:
            raise ValueError(f"unknown positional encoding kind {self.kind!r}")

    @property
    def output_dim(self) -> int:
        if self.kind == "fourier":
            return 4 * self.param
        if self.kind == "spherical":
            return (self.param + 1) ** 2
        return self._DIMS[self.kind]

    def encode(self, coords: np.ndarray) -> np.ndarray:
        """(N, 2) degree coordinates -> (N, output_dim)."""
        coords = np.asarray(coords, dtype=np.float64)
        if self.kind == "raw":
            return coords.copy()
        if self.kind == "sinusoidal":
            rad = np.radians(coords)
            return np.column_stack(
                [np.sin(rad[:, 0]), np.cos(rad[:, 0]), np.sin(rad[:, 1]), np.cos(rad[:, 1])]
            )
        if self.kind == "fourier":
            return fourier_basis(coords, self.param)
        return spherical_basis(coords, self.param)


class LocationEncoder:
    """MLP over a fixed positional expansion, yielding a static embedding.

    Once `frozen`, parameters are immutable; `embed` stays available and is
    deterministic and time-independent.
    """

    def __init__(
        self,
        positional: PositionalEncoding,
        embedding_dim: int = 512,
        hidden_width: int = 256,
        hidden_layers: int = 2,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.positional = positional
        self.embedding_dim = embedding_dim
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.seed = seed
        self.frozen = False
        dims = [positional.output_dim] + [hidden_width] * hidden_layers + [embedding_dim]
        self.layers = [Dense(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self._relu_masks: list[np.ndarray] = []

    def forward(self, pos_feats: np.ndarray) -> np.ndarray:
        h = pos_feats
        self._relu_masks = []
        for layer in self.layers[:-1]:
            h = layer.forward(h)
            mask = h > 0
            self._relu_masks.append(mask)
            h = h * mask
        return self.layers[-1].forward(h)

    def backward(self, dout: np.ndarray) -> None:
        if self.frozen:
            raise RuntimeError("location encoder is frozen")
        d = self.layers[-1].backward(dout)
        for layer, mask in zip(reversed(self.layers[:-1]), reversed(self._relu_masks)):
            d = layer.backward(d * mask)

    def embed(self, coords: np.ndarray) -> np.ndarray:
        """(N, 2) degree coordinates -> (N, embedding_dim); pure given params."""
        coords = np.asarray(coords, dtype=np.float64)
        h = self.positional.encode(coords)
        for layer in self.layers[:-1]:
            h = layer.forward(h)
            h = h * (h > 0)
        return self.layers[-1].forward(h)

    def params(self) -> list[np.ndarray]:
        return [a for layer in self.layers for _, a in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [a for layer in self.layers for _, a in layer.grads()]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def param_fingerprint(self) -> bytes:
        return b"".join(p.tobytes() for p in self.params())

    def save(self, path) -> None:
        meta = {
            "positional_kind": self.positional.kind,
            "positional_param": self.positional.param,
            "embedding_dim": self.embedding_dim,
            "hidden_width": self.hidden_width,
            "hidden_layers": self.hidden_layers,
            "seed": self.seed,
            "frozen": self.frozen,
        }
        arrays = []
        for i, layer in enumerate(self.layers):
            arrays.append((f"layer{i}.W", layer.W))
            arrays.append((f"layer{i}.b", layer.b))
        arrayio.save_arrays(path, "location-encoder", meta, arrays)

    @classmethod
    def load(cls, path) -> "LocationEncoder":
        _, meta, arrays = arrayio.load_arrays(path, expect_kind="location-encoder")
        enc = cls(
            PositionalEncoding(meta["positional_kind"], meta["positional_param"]),
            embedding_dim=meta["embedding_dim"],
            hidden_width=meta["hidden_width"],
            hidden_layers=meta["hidden_layers"],
            seed=meta.get("seed", 0),
        )
        for i, layer in enumerate(enc.layers):
            layer.W[:] = arrays[f"layer{i}.W"]
            layer.b[:] = arrays[f"layer{i}.b"]
        enc.frozen = bool(meta["frozen"])
        return enc


def location_encode(c: GeoCoord, enc: LocationEncoder) -> np.ndarray:
    """Static embedding e = g(phi(coordinates)) for one location."""
    return enc.embed(np.array([[c.lat, c.lon]]))[0]


# ---------------------------------------------------------------------------
# Contrastive pretraining
# ---------------------------------------------------------------------------


def _l2_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, 1e-12)
    return x / norms, norms


def infonce_loss(
    loc_embs: np.ndarray, img_embs: np.ndarray, temperature: float = 0.07
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Symmetric cross-entropy over cosine-similarity logits.

    Matched rows are positives; the mean of the location->context and
    context->location directions is returned with gradients w.r.t. both
    (pre-normalization) embedding matrices.
    """
    loc_embs = np.asarray(loc_embs, dtype=np.float64)
    img_embs = np.asarray(img_embs, dtype=np.float64)
    if loc_embs.shape != img_embs.shape:
        raise ValueError(f"embedding shapes differ: {loc_embs.shape} vs {img_embs.shape}")
    n = loc_embs.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 pairs, got {n}")
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    ln, lnorm = _l2_rows(loc_embs)
    im, inorm = _l2_rows(img_embs)
    logits = ln @ im.T / temperature
    rowmax = logits.max(axis=1, keepdims=True)
    colmax = logits.max(axis=0, keepdims=True)
    prow = np.exp(logits - rowmax)
    prow /= prow.sum(axis=1, keepdims=True)
    pcol = np.exp(logits - colmax)
    pcol /= pcol.sum(axis=0, keepdims=True)
    diag = np.arange(n)
    loss = -0.5 * (
        np.log(np.maximum(prow[diag, diag], 1e-300)).mean()
        + np.log(np.maximum(pcol[diag, diag], 1e-300)).mean()
    )
    dlogits = 0.5 * (prow + pcol) / n
    dlogits[diag, diag] -= 1.0 / n
    dln = dlogits @ im / temperature
    dim_ = dlogits.T @ ln / temperature
    # back through row normalization: dz = (d - zhat (zhat . d)) / |z|
    dloc = (dln - ln * (dln * ln).sum(axis=1, keepdims=True)) / lnorm
    dimg = (dim_ - im * (dim_ * im).sum(axis=1, keepdims=True)) / inorm
    return float(loss), (dloc, dimg)


def pretrain_contrastive(
    coords: np.ndarray,
    context_vectors: np.ndarray,
    enc: LocationEncoder,
    epochs: int = 300,
    seed: int = 0,
    lr: float = 1e-3,
    temperature: float = 0.07,
) -> list[float]:
    """Align encoder embeddings with per-location context vectors.

    Full-batch Adam on the symmetric InfoNCE loss; the encoder is frozen when
    training finishes. Returns the per-epoch loss trace.
    """
    coords = np.asarray(coords, dtype=np.float64)
    context_vectors = np.asarray(context_vectors, dtype=np.float64)
    if coords.shape[0] != context_vectors.shape[0]:
        raise ValueError(
            f"{coords.shape[0]} coordinates vs {context_vectors.shape[0]} context vectors"
        )
    if context_vectors.shape[1] != enc.embedding_dim:
        raise ValueError(
            f"context dim {context_vectors.shape[1]} vs embedding dim {enc.embedding_dim}"
        )
    if enc.frozen:
        raise RuntimeError("location encoder is frozen")
    del seed  # training is full-batch and deterministic; kept for interface parity
    pos = enc.positional.encode(coords)
    opt = Adam(enc.params())
    trace = []
    for _ in range(epochs):
        emb = enc.forward(pos)
        loss, (dloc, _) = infonce_loss(emb, context_vectors, temperature)
        enc.zero_grad()
        enc.backward(dloc)
        opt.step(enc.params(), enc.grads(), lr)
        trace.append(loss)
    enc.frozen = True
    return trace


def retrieval_accuracy(
    enc: LocationEncoder, coords: np.ndarray, context_vectors: np.ndarray
) -> float:
    """Fraction of coordinates whose nearest context vector (cosine) is their own."""
    emb, _ = _l2_rows(enc.embed(coords))
    ctx, _ = _l2_rows(np.asarray(context_vectors, dtype=np.float64))
    sims = emb @ ctx.T
    return float((sims.argmax(axis=1) == np.arange(len(coords))).mean())


# ---------------------------------------------------------------------------
# Embedding table
# ---------------------------------------------------------------------------


class EmbeddingTable:
    """Exact-lookup store of embeddings keyed by 1e-5-degree quantized coords."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim
        self._table: dict[tuple[int, int], np.ndarray] = {}

    @staticmethod
    def _key(lat: float, lon: float) -> tuple[int, int]:
        return (int(round(lat / COORD_QUANTUM)), int(round(lon / COORD_QUANTUM)))

    def __len__(self) -> int:
        return len(self._table)

    def put(self, lat: float, lon: float, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector shape {vec.shape} vs table dim {self.dim}")
        self._table[self._key(lat, lon)] = vec

    def get(self, lat: float, lon: float) -> np.ndarray | None:
        """Stored embedding, or None to signal a miss (caller falls back)."""
        return self._table.get(self._key(lat, lon))

    def items(self):
        for (klat, klon), vec in sorted(self._table.items()):
            yield klat * COORD_QUANTUM, klon * COORD_QUANTUM, vec

    def save(self, path) -> None:
        header = "lat,lon," + ",".join(f"e_{i}" for i in range(self.dim))
        lines = [header]
        for lat, lon, vec in self.items():
            lines.append(
                f"{lat:.5f},{lon:.5f}," + ",".join(repr(float(v)) for v in vec)
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ValueError(f"{path}: empty embedding table")
        cols = lines[0].split(",")
        if cols[:2] != ["lat", "lon"] or len(cols) < 3:
            raise ValueError(f"{path}:1: bad header {lines[0]!r}")
        dim = len(cols) - 2
        if cols[2:] != [f"e_{i}" for i in range(dim)]:
            raise ValueError(f"{path}:1: embedding columns must be e_0..e_{dim - 1}")
        table = cls(dim)
        for ln, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != dim + 2:
                raise ValueError(
                    f"{path}:{ln}: expected {dim + 2} fields, got {len(parts)}"
                )
            try:
                lat, lon = float(parts[0]), float(parts[1])
                vec = np.array([float(v) for v in parts[2:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: malformed value ({exc})") from None
            table.put(lat, lon, vec)
        return table
