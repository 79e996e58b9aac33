"""The adversary: an ensemble of four stylistic members with one scoring head.

Members: an MLP over the 7 perplexity/length features, a bag of word
embeddings, a 1-layer CNN (widths 2-5) over the same embeddings, and a
BiLSTM over the common-word encoding. Final representations are
concatenated (inactive members contribute zero-vectors) and passed through
a tanh layer to a scalar logit per candidate. Training minimizes softmax
cross-entropy over each instance's candidate set.

Everything is plain float64 numpy with hand-written gradients; the
finite-difference tests in tests/test_committee.py check every member.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeds import rng_for

MEMBERS = ("mlp", "bow", "cnn", "lstm")


@dataclass(frozen=True)
class CommitteeConfig:
    embed_dim: int = 64
    mlp_hidden: int = 32
    cnn_filters_per_width: int = 16
    cnn_widths: tuple = (2, 3, 4, 5)
    lstm_hidden: int = 32
    ensemble_hidden: int = 64
    active_members: tuple = MEMBERS
    epochs: int = 3
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_seq_len: int = 25
    grad_clip: float = 1.0

    def __post_init__(self):
        if not self.active_members:
            raise ValueError("active_members must be non-empty")
        bad = set(self.active_members) - set(MEMBERS)
        if bad:
            raise ValueError(f"unknown members: {sorted(bad)}")
        for name in ("embed_dim", "mlp_hidden", "cnn_filters_per_width", "lstm_hidden", "ensemble_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def member_slots(config: CommitteeConfig) -> dict[str, tuple[int, int]]:
    """Byte layout of the concatenated representation, member -> (start, end)."""
    sizes = {
        "mlp": config.mlp_hidden,
        "bow": config.embed_dim,
        "cnn": config.cnn_filters_per_width * len(config.cnn_widths),
        "lstm": 2 * config.lstm_hidden,
    }
    slots, start = {}, 0
    for m in MEMBERS:
        slots[m] = (start, start + sizes[m])
        start += sizes[m]
    return slots


def rep_dim(config: CommitteeConfig) -> int:
    return max(end for _, end in member_slots(config).values())


def init_params(
    config: CommitteeConfig,
    n_word_ids: int,
    n_common_ids: int,
    seed: int,
    word_embedding: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Weights ~ normal scaled by 1/sqrt(fan_in), biases zero, output head zero.

    The zero head makes every initial logit exactly 0, so the first loss on a
    (k+1)-way instance is ln(k+1).
    """
    rng = rng_for("committee-init", seed)

    def w(fan_in, *shape):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    e, hm, f, hl, he = (
        config.embed_dim,
        config.mlp_hidden,
        config.cnn_filters_per_width,
        config.lstm_hidden,
        config.ensemble_hidden,
    )
    p: dict[str, np.ndarray] = {}
    p["mlp.W"] = w(7, hm, 7)
    p["mlp.b"] = np.zeros(hm)
    if word_embedding is not None:
        if word_embedding.shape != (n_word_ids, e):
            raise ValueError("word embedding shape mismatch")
        p["emb.word"] = word_embedding.astype(np.float64).copy()
    else:
        p["emb.word"] = rng.normal(0.0, 0.1, size=(n_word_ids, e))
    for width in config.cnn_widths:
        p[f"cnn.W{width}"] = w(width * e, width * e, f)
        p[f"cnn.b{width}"] = np.zeros(f)
    p["emb.common"] = rng.normal(0.0, 0.1, size=(n_common_ids, e))
    for d in ("f", "b"):
        p[f"lstm.{d}.Wx"] = w(e, e, 4 * hl)
        p[f"lstm.{d}.Wh"] = w(hl, hl, 4 * hl)
        p[f"lstm.{d}.b"] = np.zeros(4 * hl)
    p["ens.W"] = w(rep_dim(config), rep_dim(config), he)
    p["ens.b"] = np.zeros(he)
    p["out.w"] = np.zeros(he)
    p["out.b"] = np.zeros(())
    return p


# ------------------------------------------------------------------ packing


def pack_sequences(
    seqs: Sequence[Sequence[int]], min_len: int = 1, max_len: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Left-aligned id matrix plus {0,1} mask; rows padded with id 0."""
    if max_len is not None:
        seqs = [s[:max_len] for s in seqs]
    n = max((len(s) for s in seqs), default=0)
    length = max(n, min_len)
    ids = np.zeros((len(seqs), length), dtype=np.int64)
    mask = np.zeros((len(seqs), length))
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def _reverse_rows(ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Reverse each row's valid prefix in place of direction-flipped input."""
    lens = mask.sum(axis=1).astype(np.int64)
    pos = np.arange(ids.shape[1])[None, :]
    src = np.where(pos < lens[:, None], lens[:, None] - 1 - pos, pos)
    return np.take_along_axis(ids, src, axis=1)


# ------------------------------------------------------------------ forward


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_forward(Wx, Wh, b, X, mask):
    """One direction over (B, T, E); returns final hidden state and step caches."""
    B, T, _ = X.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    caches = []
    for t in range(T):
        x_t = X[:, t, :]
        m = mask[:, t][:, None]
        pre = x_t @ Wx + h @ Wh + b
        i = _sigmoid(pre[:, :H])
        f = _sigmoid(pre[:, H : 2 * H])
        g = np.tanh(pre[:, 2 * H : 3 * H])
        o = _sigmoid(pre[:, 3 * H :])
        c_tilde = f * c + i * g
        tc = np.tanh(c_tilde)
        h_new = m * (o * tc) + (1.0 - m) * h
        c_new = m * c_tilde + (1.0 - m) * c
        caches.append((x_t, h, c, i, f, g, o, tc, m))
        h, c = h_new, c_new
    return h, caches


def _lstm_backward(Wx, Wh, b, caches, dh_final):
    H = Wh.shape[0]
    gWx = np.zeros_like(Wx)
    gWh = np.zeros_like(Wh)
    gb = np.zeros_like(b)
    dh = dh_final
    dc = np.zeros_like(dh_final)
    dX = np.zeros((dh_final.shape[0], len(caches), Wx.shape[0]))
    for t in range(len(caches) - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, tc, m = caches[t]
        dh_raw = dh * m
        dh_skip = dh * (1.0 - m)
        do = dh_raw * tc
        dct = dh_raw * o * (1.0 - tc * tc) + dc * m
        dc_skip = dc * (1.0 - m)
        di = dct * g
        df = dct * c_prev
        dg = dct * i
        dpre = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        gWx += x_t.T @ dpre
        gWh += h_prev.T @ dpre
        gb += dpre.sum(axis=0)
        dX[:, t, :] = dpre @ Wx.T
        dh = dh_skip + dpre @ Wh.T
        dc = dc_skip + dct * f
    return gWx, gWh, gb, dX


def _forward(params, config: CommitteeConfig, x_ppl, second_ids, common_ids, keep_cache: bool):
    B = x_ppl.shape[0]
    slots = member_slots(config)
    active = set(config.active_members)
    z = np.zeros((B, rep_dim(config)))
    cache: dict = {"z": z}

    if "mlp" in active:
        pre = x_ppl @ params["mlp.W"].T + params["mlp.b"]
        hm = np.tanh(pre)
        z[:, slice(*slots["mlp"])] = hm
        cache["mlp"] = (x_ppl, hm)

    if "bow" in active or "cnn" in active:
        min_len = max(config.cnn_widths) if "cnn" in active else 1
        ids, mask = pack_sequences(second_ids, min_len=min_len)
        Xe = params["emb.word"][ids] * mask[:, :, None]
        cache["word"] = (ids, mask, Xe)
        if "bow" in active:
            n_real = np.maximum(mask.sum(axis=1), 1.0)
            z[:, slice(*slots["bow"])] = Xe.sum(axis=1) / n_real[:, None]
            cache["bow"] = n_real
        if "cnn" in active:
            L = ids.shape[1]
            lens = np.maximum(mask.sum(axis=1), max(config.cnn_widths))
            start, _ = slots["cnn"]
            f = config.cnn_filters_per_width
            cnn_cache = {}
            for width in config.cnn_widths:
                tw = L - width + 1
                cols = np.stack([Xe[:, t : t + width, :] for t in range(tw)], axis=1)
                cols = cols.reshape(B, tw, width * config.embed_dim)
                C = np.tanh(cols @ params[f"cnn.W{width}"] + params[f"cnn.b{width}"])
                valid = np.arange(tw)[None, :] <= (lens[:, None] - width)
                masked = np.where(valid[:, :, None], C, -np.inf)
                am = masked.argmax(axis=1)
                rep = np.take_along_axis(masked, am[:, None, :], axis=1)[:, 0, :]
                z[:, start : start + f] = rep
                cnn_cache[width] = (cols, C, am)
                start += f
            cache["cnn"] = cnn_cache

    if "lstm" in active:
        cids, cmask = pack_sequences(common_ids, max_len=config.max_seq_len)
        rids = _reverse_rows(cids, cmask)
        Xf = params["emb.common"][cids] * cmask[:, :, None]
        Xb = params["emb.common"][rids] * cmask[:, :, None]
        hf, cf = _lstm_forward(params["lstm.f.Wx"], params["lstm.f.Wh"], params["lstm.f.b"], Xf, cmask)
        hb, cb = _lstm_forward(params["lstm.b.Wx"], params["lstm.b.Wh"], params["lstm.b.b"], Xb, cmask)
        s0, _ = slots["lstm"]
        z[:, s0 : s0 + config.lstm_hidden] = hf
        z[:, s0 + config.lstm_hidden : s0 + 2 * config.lstm_hidden] = hb
        cache["lstm"] = (cids, rids, cmask, cf, cb)

    h = np.tanh(z @ params["ens.W"] + params["ens.b"])
    logits = h @ params["out.w"] + params["out.b"]
    cache["ens"] = h
    return (logits, cache) if keep_cache else (logits, None)


def _backward(params, config: CommitteeConfig, cache, dlogits) -> dict[str, np.ndarray]:
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    slots = member_slots(config)
    active = set(config.active_members)
    z, h = cache["z"], cache["ens"]

    grads["out.w"] += h.T @ dlogits
    grads["out.b"] += dlogits.sum()
    dh = dlogits[:, None] * params["out.w"][None, :]
    dpre = dh * (1.0 - h * h)
    grads["ens.W"] += z.T @ dpre
    grads["ens.b"] += dpre.sum(axis=0)
    dz = dpre @ params["ens.W"].T

    if "mlp" in active:
        x_ppl, hm = cache["mlp"]
        dm = dz[:, slice(*slots["mlp"])] * (1.0 - hm * hm)
        grads["mlp.W"] += dm.T @ x_ppl
        grads["mlp.b"] += dm.sum(axis=0)

    if "bow" in active or "cnn" in active:
        ids, mask, Xe = cache["word"]
        dXe = np.zeros_like(Xe)
        if "bow" in active:
            n_real = cache["bow"]
            drep = dz[:, slice(*slots["bow"])]
            dXe += (drep / n_real[:, None])[:, None, :]
        if "cnn" in active:
            start, _ = slots["cnn"]
            f = config.cnn_filters_per_width
            for width in config.cnn_widths:
                cols, C, am = cache["cnn"][width]
                B, tw, _ = C.shape
                drep = dz[:, start : start + f]
                dC = np.zeros_like(C)
                np.put_along_axis(dC, am[:, None, :], drep[:, None, :], axis=1)
                dpre_c = dC * (1.0 - C * C)
                we = width * config.embed_dim
                grads[f"cnn.W{width}"] += cols.reshape(-1, we).T @ dpre_c.reshape(-1, f)
                grads[f"cnn.b{width}"] += dpre_c.sum(axis=(0, 1))
                dcols = (dpre_c @ params[f"cnn.W{width}"].T).reshape(B, tw, width, config.embed_dim)
                for off in range(width):
                    dXe[:, off : off + tw, :] += dcols[:, :, off, :]
                start += f
        dXe *= mask[:, :, None]
        np.add.at(grads["emb.word"], ids.ravel(), dXe.reshape(-1, config.embed_dim))

    if "lstm" in active:
        cids, rids, cmask, cf, cb = cache["lstm"]
        s0, _ = slots["lstm"]
        hl = config.lstm_hidden
        for d, ids_d, caches in (("f", cids, cf), ("b", rids, cb)):
            off = s0 if d == "f" else s0 + hl
            gWx, gWh, gb, dX = _lstm_backward(
                params[f"lstm.{d}.Wx"], params[f"lstm.{d}.Wh"], params[f"lstm.{d}.b"],
                caches, dz[:, off : off + hl],
            )
            grads[f"lstm.{d}.Wx"] += gWx
            grads[f"lstm.{d}.Wh"] += gWh
            grads[f"lstm.{d}.b"] += gb
            dX *= cmask[:, :, None]
            np.add.at(grads["emb.common"], ids_d.ravel(), dX.reshape(-1, config.embed_dim))

    return grads


# ------------------------------------------------------------------ scoring


def score_batch(
    params,
    config: CommitteeConfig,
    x_ppl: np.ndarray,
    second_ids: Sequence[Sequence[int]],
    common_ids: Sequence[Sequence[int]],
    chunk: int = 1024,
) -> np.ndarray:
    """Logits for m candidates; per-candidate pure, chunked to bound memory."""
    m = x_ppl.shape[0]
    out = np.empty(m)
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        logits, _ = _forward(params, config, x_ppl[lo:hi], second_ids[lo:hi], common_ids[lo:hi], False)
        out[lo:hi] = logits
    return out


def score(params, config: CommitteeConfig, x_ppl, second_ids, common_ids) -> float:
    """Scalar logit for one candidate; higher = more real-looking."""
    x = np.asarray(x_ppl, dtype=np.float64).reshape(1, 7)
    return float(score_batch(params, config, x, [list(second_ids)], [list(common_ids)])[0])


# ------------------------------------------------------------------ training


@dataclass
class TrainInstance:
    """One context's candidate set: standardized 7-vectors plus id sequences."""

    x_ppl: np.ndarray  # (n_candidates, 7)
    second_ids: list  # list of id lists, one per candidate
    common_ids: list
    pos: int  # index of the real ending among the candidates


def _batch_loss_grads(params, config: CommitteeConfig, batch: Sequence[TrainInstance], want_grads=True):
    x = np.concatenate([inst.x_ppl for inst in batch], axis=0)
    sids = [s for inst in batch for s in inst.second_ids]
    cids = [c for inst in batch for c in inst.common_ids]
    logits, cache = _forward(params, config, x, sids, cids, want_grads)

    loss = 0.0
    dlogits = np.zeros_like(logits)
    start = 0
    for inst in batch:
        end = start + len(inst.second_ids)
        l = logits[start:end]
        p = np.exp(l - l.max())
        p /= p.sum()
        loss += -np.log(max(p[inst.pos], 1e-300))
        d = p.copy()
        d[inst.pos] -= 1.0
        dlogits[start:end] = d / len(batch)
        start = end
    loss /= len(batch)
    if not want_grads:
        return loss, None
    return loss, _backward(params, config, cache, dlogits)


def gradient(params, config: CommitteeConfig, batch: Sequence[TrainInstance]):
    """Mean cross-entropy loss over the batch and its analytic gradients."""
    return _batch_loss_grads(params, config, batch)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def train(
    params: dict[str, np.ndarray],
    instances: Sequence[TrainInstance],
    config: CommitteeConfig,
    rng: np.random.Generator,
) -> tuple[dict[str, np.ndarray], float]:
    """Mini-batch SGD with global gradient-norm clipping; returns final mean loss."""
    if not instances:
        raise ValueError("no training instances")
    last_epoch_loss = float("nan")
    for _ in range(config.epochs):
        order = rng.permutation(len(instances))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[lo : lo + config.batch_size]]
            loss, grads = _batch_loss_grads(params, config, batch)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite training loss {loss}; aborting")
            clip_global_norm(grads, config.grad_clip)
            for k in params:
                params[k] -= config.learning_rate * grads[k]
            losses.append(loss)
        last_epoch_loss = float(np.mean(losses))
    return params, last_epoch_loss


def evaluate_loss(params, config: CommitteeConfig, instances: Sequence[TrainInstance]) -> float:
    loss, _ = _batch_loss_grads(params, config, instances, want_grads=False)
    return loss


# --------------------------------------------------------------- checkpoint


def save_params(path, params: dict[str, np.ndarray], config: CommitteeConfig) -> None:
    meta = json.dumps(config.__dict__, sort_keys=True, default=list)
    with open(path, "wb") as fh:
        np.savez(fh, __config__=np.frombuffer(meta.encode("utf-8"), dtype=np.uint8), **params)


def load_params(path) -> tuple[dict[str, np.ndarray], CommitteeConfig]:
    data = np.load(path)
    meta = json.loads(bytes(data["__config__"]).decode("utf-8"))
    meta["cnn_widths"] = tuple(meta["cnn_widths"])
    meta["active_members"] = tuple(meta["active_members"])
    config = CommitteeConfig(**meta)
    params = {k: data[k] for k in data.files if k != "__config__"}
    return params, config
