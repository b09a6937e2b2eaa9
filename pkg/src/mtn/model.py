"""Multimodal transformer network: encoders, query-aware auto-encoder, decoder and heads."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .attention import AttentionBlock, causal_mask, positional_encoding
from .data.batching import Batch
from .numerics import nn
from .numerics.tensor import Tensor, add, concat, relu


class Variant(str, enum.Enum):
    FULL = "full"                    # encoders + QAE + decoder + response and query heads
    NO_QAE = "no_qae"                # decoder attends raw video encodings
    QE = "qe"                        # QAE stack without regeneration; last layer feeds all decoder layers
    SELF_ATTN_ENC = "self_attn_enc"  # NO_QAE plus self-attention blocks on text encoders
    CONCAT_DEC = "concat_dec"        # one attention over concatenated history/caption/query


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_layers: int = 6
    heads: int = 8
    d_model: int = 512
    d_ff: int = 2048
    modalities: list[tuple[str, int]] = field(
        default_factory=lambda: [("audio", 128), ("visual", 2048)])
    vocab_size: int = 0
    dropout: float = 0.1
    sim_probability: float = 0.5
    max_history: int = 10
    variant: str = Variant.FULL.value
    pe_on_features: bool = True
    qae_causal: bool = False
    encoder_blocks: int = 2
    max_len: int = 256
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.modalities = [(str(m), int(d)) for m, d in self.modalities]

    def validate(self) -> None:
        problems = []
        if self.n_layers < 1:
            problems.append("n_layers must be >= 1")
        if self.heads < 1 or self.d_model % self.heads:
            problems.append(f"heads={self.heads} must divide d_model={self.d_model}")
        if self.d_model % 2:
            problems.append("d_model must be even for the positional encoding")
        if self.vocab_size < 5:
            problems.append("vocab_size must cover the reserved ids plus at least one token")
        if not 0.0 <= self.sim_probability <= 1.0:
            problems.append("sim_probability must be in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must be in [0, 1)")
        if self.max_history < 1:
            problems.append("max_history must be >= 1")
        try:
            v = Variant(self.variant)
        except ValueError:
            problems.append(f"unknown variant {self.variant!r}")
            v = None
        if v in (Variant.FULL, Variant.QE) and not self.modalities:
            problems.append(f"variant {v.value} needs at least one video modality")
        if len({m for m, _ in self.modalities}) != len(self.modalities):
            problems.append("duplicate modality names")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def modality_names(self) -> list[str]:
        return [m for m, _ in self.modalities]

    @property
    def has_qae(self) -> bool:
        return Variant(self.variant) in (Variant.FULL, Variant.QE)

    @property
    def regenerates_query(self) -> bool:
        return Variant(self.variant) is Variant.FULL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = [[m, dim] for m, dim in self.modalities]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["modalities"] = [tuple(x) for x in d.get("modalities", [])]
        return cls(**d)


def key_mask(lengths: np.ndarray, width: int) -> np.ndarray:
    """[B, 1, width] boolean mask of real (non-pad) key positions."""
    return (np.arange(width)[None, :] < lengths[:, None])[:, None, :]


class TextEncoder(nn.Module):
    """Learned token embedding + fixed sinusoid positions, then layer norm."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, drop_rng: np.random.Generator):
        super().__init__()
        dt = cfg.np_dtype
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model, rng, dt)
        self.norm = nn.LayerNorm(cfg.d_model, dtype=dt)
        self.drop = nn.Dropout(cfg.dropout, drop_rng)
        self.d = cfg.d_model
        self.max_len = cfg.max_len

    def positions(self, L: int) -> np.ndarray:
        return positional_encoding(max(L, self.max_len), self.d)[:L]

    def forward(self, ids: np.ndarray) -> Tensor:
        x = self.embed(ids)
        x = add(x, self.positions(ids.shape[-1]).astype(x.dtype))
        return self.drop(self.norm(x))


class VideoEncoder(nn.Module):
    """relu(linear(features)) plus sinusoid positions (optional for unordered features)."""

    def __init__(self, name: str, d_in: int, cfg: ModelConfig, rng, drop_rng):
        super().__init__()
        self.name = name
        self.d_in = d_in
        self.proj = nn.Linear(d_in, cfg.d_model, rng, dtype=cfg.np_dtype)
        self.use_pe = cfg.pe_on_features
        self.d = cfg.d_model
        self.max_len = cfg.max_len
        self.drop = nn.Dropout(cfg.dropout, drop_rng)

    def forward(self, feats: np.ndarray | Tensor) -> Tensor:
        width = feats.shape[-1]
        if width != self.d_in:
            raise ValueError(f"modality {self.name!r}: feature width {width}, expected {self.d_in}")
        if not isinstance(feats, Tensor):
            feats = Tensor(np.asarray(feats, dtype=self.proj.weight.dtype))
        x = relu(self.proj(feats))
        if self.use_pe:
            S = feats.shape[-2]
            x = add(x, positional_encoding(max(S, self.max_len), self.d)[:S].astype(x.dtype))
        return self.drop(x)


class QaeLayer(nn.Module):
    """Query self-attention, then one query-aware attention per modality (features as keys)."""

    def __init__(self, cfg: ModelConfig, rng, drop_rng):
        super().__init__()
        args = (cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout, rng, cfg.np_dtype)
        self.self_attn = AttentionBlock(*args)
        self.video = nn.ModuleList(AttentionBlock(*args) for _ in cfg.modalities)
        self.modalities = cfg.modality_names
        _rebind_dropout(self, drop_rng)

    @property
    def n_sublayers(self) -> int:
        return 1 + len(self.video)

    def forward(self, z: Tensor, z_mask: np.ndarray, feats: dict[str, Tensor],
                feat_masks: dict[str, np.ndarray]) -> tuple[Tensor, dict[str, Tensor]]:
        z = self.self_attn(z, z, z_mask)
        attended = {}
        for m, blk in zip(self.modalities, self.video):
            z = blk(z, feats[m], feat_masks[m])
            attended[m] = z
        return z, attended


class DecoderLayer(nn.Module):
    """Self-attention on the offset target, then one attention sub-layer per encoded input."""

    def __init__(self, cfg: ModelConfig, rng, drop_rng):
        super().__init__()
        args = (cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout, rng, cfg.np_dtype)
        self.concat_sources = Variant(cfg.variant) is Variant.CONCAT_DEC
        self.self_attn = AttentionBlock(*args)
        if self.concat_sources:
            self.source = AttentionBlock(*args)
        else:
            self.his = AttentionBlock(*args)
            self.cap = AttentionBlock(*args)
            self.que = AttentionBlock(*args)
        self.video = nn.ModuleList(AttentionBlock(*args) for _ in cfg.modalities)
        self.modalities = cfg.modality_names
        _rebind_dropout(self, drop_rng)

    @property
    def n_sublayers(self) -> int:
        return (2 if self.concat_sources else 4) + len(self.video)

    def forward(self, x: Tensor, self_mask, sources: dict[str, tuple[Tensor, np.ndarray]],
                video: dict[str, tuple[Tensor, np.ndarray]]) -> Tensor:
        x = self.self_attn(x, x, self_mask)
        if self.concat_sources:
            x = self.source(x, *sources["src"])
        else:
            x = self.his(x, *sources["his"])
            x = self.cap(x, *sources["cap"])
            x = self.que(x, *sources["que"])
        for m, blk in zip(self.modalities, self.video):
            if m not in video:
                raise KeyError(f"decoder: no features for configured modality {m!r}")
            x = blk(x, *video[m])
        return x


def _rebind_dropout(module: nn.Module, drop_rng) -> None:
    # parameters draw from the init rng; every dropout mask draws from drop_rng
    for m in module.modules():
        if isinstance(m, nn.Dropout) or (hasattr(m, "dropout_p") and hasattr(m, "rng")):
            m.rng = drop_rng


class MtnModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.variant = Variant(cfg.variant)
        rng = np.random.default_rng(cfg.seed)
        drop_rng = np.random.default_rng([cfg.seed, 1])
        self.drop_rng = drop_rng
        dt = cfg.np_dtype
        args = (cfg.d_model, cfg.heads, cfg.d_ff, cfg.dropout, rng, dt)

        self.src_encoder = TextEncoder(cfg, rng, drop_rng)  # shared by history, caption, query
        self.tgt_encoder = TextEncoder(cfg, rng, drop_rng)
        if self.variant is Variant.SELF_ATTN_ENC:
            self.src_blocks = nn.ModuleList(AttentionBlock(*args) for _ in range(cfg.encoder_blocks))
        self.video_encoders = nn.ModuleList(
            VideoEncoder(m, d_m, cfg, rng, drop_rng) for m, d_m in cfg.modalities)
        if cfg.has_qae:
            self.qae = nn.ModuleList(QaeLayer(cfg, rng, drop_rng) for _ in range(cfg.n_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg, rng, drop_rng) for _ in range(cfg.n_layers))
        self.out_head = nn.Linear(cfg.d_model, cfg.vocab_size, rng, dtype=dt)
        if cfg.regenerates_query:
            self.query_head = nn.Linear(cfg.d_model, cfg.vocab_size, rng, dtype=dt)
        _rebind_dropout(self, drop_rng)

    # -- encoders ---------------------------------------------------------------
    def encode_text(self, ids: np.ndarray, lengths: np.ndarray | None = None) -> Tensor:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise IndexError(f"token id out of range [0, {self.cfg.vocab_size})")
        z = self.src_encoder(ids)
        if self.variant is Variant.SELF_ATTN_ENC:
            if lengths is None:
                lengths = np.full(ids.shape[:1], ids.shape[-1])
            mask = key_mask(lengths, ids.shape[-1])
            for blk in self.src_blocks:
                z = blk(z, z, mask)
        return z

    def encode_video(self, feats: dict[str, np.ndarray]) -> dict[str, Tensor]:
        out = {}
        for enc in self.video_encoders:
            if enc.name not in feats:
                raise KeyError(f"missing features for configured modality {enc.name!r}")
            out[enc.name] = enc(feats[enc.name])
        return out

    def qae_forward(self, z_que: Tensor, que_mask: np.ndarray, f: dict[str, Tensor],
                    f_masks: dict[str, np.ndarray]):
        """Run the auto-encoder stack; returns ([{m: f_att(m, n)} for n in layers], final z)."""
        per_layer = []
        z = z_que
        for layer in self.qae:
            z, attended = layer(z, que_mask, f, f_masks)
            per_layer.append(attended)
        return per_layer, z

    def decoder_forward(self, z_t: Tensor, tgt_mask: np.ndarray,
                        sources: dict[str, tuple[Tensor, np.ndarray]],
                        video_per_layer: Sequence[dict[str, tuple[Tensor, np.ndarray]]]) -> Tensor:
        x = z_t
        for layer, video in zip(self.decoder, video_per_layer):
            x = layer(x, tgt_mask, sources, video)
        return x

    # -- full pass ------------------------------------------------------------------
    def encode(self, batch: Batch, feats: dict[str, np.ndarray] | None = None) -> "Memory":
        """Everything the decoder needs that does not depend on the target prefix."""
        cfg = self.cfg
        feats = batch.feats if feats is None else feats
        B = batch.his.shape[0]
        z_his = self.encode_text(batch.his, batch.his_len)
        z_cap = self.encode_text(batch.cap, batch.cap_len)
        z_que = self.encode_text(batch.que, batch.que_len)
        m_his = key_mask(batch.his_len, batch.his.shape[1])
        m_cap = key_mask(batch.cap_len, batch.cap.shape[1])
        m_que = key_mask(batch.que_len, batch.que.shape[1])
        if self.variant is Variant.CONCAT_DEC:
            sources = {"src": (concat([z_his, z_cap, z_que], axis=1),
                               np.concatenate([m_his, m_cap, m_que], axis=-1))}
        else:
            sources = {"his": (z_his, m_his), "cap": (z_cap, m_cap), "que": (z_que, m_que)}

        f = self.encode_video(feats) if cfg.modalities else {}
        f_masks = {m: batch.feat_mask[m][:, None, :] if m in batch.feat_mask
                   else np.ones((B, 1, feats[m].shape[1]), dtype=bool) for m in f}

        query_logits = None
        if cfg.has_qae:
            qmask = m_que & causal_mask(batch.que.shape[1]) if cfg.qae_causal else m_que
            per_layer, z_final = self.qae_forward(z_que, qmask, f, f_masks)
            if self.variant is Variant.QE:
                per_layer = [per_layer[-1]] * cfg.n_layers
            video = [{m: (att[m], m_que) for m in att} for att in per_layer]
            if cfg.regenerates_query:
                query_logits = self.query_head(z_final)
        else:
            video = [{m: (f[m], f_masks[m]) for m in f}] * cfg.n_layers
        return Memory(sources, video, query_logits)

    def decode(self, memory: "Memory", tgt_in: np.ndarray,
               tgt_in_len: np.ndarray | None = None) -> Tensor:
        """Response logits [B, Lt, V] for the offset target ``tgt_in``."""
        B, Lt = tgt_in.shape
        if tgt_in_len is None:
            tgt_in_len = np.full(B, Lt)
        z_t = self.tgt_encoder(tgt_in)
        self_mask = key_mask(tgt_in_len, Lt) & causal_mask(Lt)[None]
        h = self.decoder_forward(z_t, self_mask, memory.sources, memory.video)
        return self.out_head(h)

    def forward(self, batch: Batch, tgt_in: np.ndarray, tgt_in_len: np.ndarray | None = None,
                feats: dict[str, np.ndarray] | None = None):
        """Return (response logits [B, Lt, V], query logits [B, Lq, V] or None)."""
        memory = self.encode(batch, feats)
        return self.decode(memory, tgt_in, tgt_in_len), memory.query_logits


@dataclass
class Memory:
    sources: dict[str, tuple[Tensor, np.ndarray]]
    video: list[dict[str, tuple[Tensor, np.ndarray]]]
    query_logits: Tensor | None = None

    def select(self, idx) -> "Memory":
        """Gather batch rows (e.g. to tile one example across a beam). Detached."""
        idx = np.asarray(idx)

        def pick(pair):
            t, m = pair
            return Tensor(t.data[idx]), m[idx]

        cache: dict[int, tuple[Tensor, np.ndarray]] = {}

        def pick_cached(pair):
            key = id(pair[0])
            if key not in cache:
                cache[key] = pick(pair)
            return cache[key]

        return Memory({k: pick(v) for k, v in self.sources.items()},
                      [{m: pick_cached(v) for m, v in layer.items()} for layer in self.video])


def variant_assemble(cfg: ModelConfig) -> MtnModel:
    return MtnModel(cfg)
