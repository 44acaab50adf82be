"""Single-channel seizure detectors: CNN-SM, CNN-BM and CNN-TRF-BM.

Backbone: five blocks of ``conv(k=3, same padding) -> ReLU -> max-pool(2)``
with 8/16/32/64/128 filters, then ``FC(128) -> ReLU -> FC(2)``.  The
transformer variant runs the backbone on 1 s tokens (25 % overlap), averages
each token's final feature map into a 128-d embedding, adds sinusoidal
positions and passes the sequence through one encoder block (8 heads,
FFN 1024) before the fully connected head.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dsp import TARGET_FS
from .nn import functional as F
from .nn.evaluation import binary_report, class_weights
from .nn.layers import init_conv, init_dense, init_transformer_block, sinusoidal_positions, transformer_block
from .nn.losses import bm_loss, concentrations, softmax_loss
from .nn.optim import ModelParams, TrainConfig, adam_step
from .nn.tensor import Tape, Tensor

log = logging.getLogger(__name__)

VARIANTS = ("CNN_SM", "CNN_BM", "CNN_TRF_BM")
CONV_FILTERS = (8, 16, 32, 64, 128)
KERNEL = 3
POOL = 2
FC_HIDDEN = 128
N_HEADS = 8
FFN_HIDDEN = 1024
TOKEN_SECONDS = 1.0
TOKEN_OVERLAP = 0.25
ZSCORE_EPS = 1e-6
CHECKPOINT_FORMAT = "seizekit-channel-model"


@dataclass(frozen=True)
class ChannelModelSpec:
    variant: str = "CNN_BM"
    window_w: int = 3
    fs: int = TARGET_FS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.window_w not in (3, 5, 10, 20):
            raise ValueError("window_w must be one of 3, 5, 10, 20")
        if self.fs != TARGET_FS:
            raise ValueError(f"channel models run at {TARGET_FS} Hz")

    @property
    def input_length(self) -> int:
        return self.window_w * self.fs

    @property
    def loss(self) -> str:
        return "SM" if self.variant == "CNN_SM" else "BM"


@dataclass(frozen=True)
class LabeledChannelSegment:
    samples: np.ndarray
    label: int
    weight: float = 1.0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if not self.weight > 0:
            raise ValueError("weight must be positive")


def token_starts(n_samples: int, fs: int = TARGET_FS) -> np.ndarray:
    tok = int(TOKEN_SECONDS * fs)
    hop = int(round(tok * (1.0 - TOKEN_OVERLAP)))
    if n_samples < tok:
        return np.zeros(0, dtype=np.int64)
    return np.arange((n_samples - tok) // hop + 1) * hop


def tokenize(segment, fs: int = TARGET_FS) -> np.ndarray:
    """Split the last axis into 1 s tokens at a 0.75 s stride: ``(..., tokens, fs)``."""
    x = np.asarray(segment)
    tok = int(TOKEN_SECONDS * fs)
    starts = token_starts(x.shape[-1], fs)
    return np.stack([x[..., s : s + tok] for s in starts], axis=-2)


def zscore(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return (x - mu) / (sd + ZSCORE_EPS)


def _backbone_length(length: int) -> int:
    for _ in CONV_FILTERS:
        length //= POOL
    return length


def build_channel_model(spec: ChannelModelSpec, seed: int = 0) -> "ChannelModel":
    rng = np.random.default_rng(seed)
    params = ModelParams()
    c_in = 1
    for i, c_out in enumerate(CONV_FILTERS):
        w, b = init_conv(rng, c_in, c_out, KERNEL)
        params.add(f"conv{i}.w", w)
        params.add(f"conv{i}.b", b)
        c_in = c_out
    if spec.variant == "CNN_TRF_BM":
        n_tokens = token_starts(spec.input_length, spec.fs).size
        for k, v in init_transformer_block(rng, CONV_FILTERS[-1], FFN_HIDDEN).items():
            params.add(f"trf.{k}", v)
        flat = n_tokens * CONV_FILTERS[-1]
    else:
        flat = _backbone_length(spec.input_length) * CONV_FILTERS[-1]
    w, b = init_dense(rng, flat, FC_HIDDEN)
    params.add("fc1.w", w)
    params.add("fc1.b", b)
    w, b = init_dense(rng, FC_HIDDEN, 2)
    params.add("fc2.w", w * 0.1)
    params.add("fc2.b", b)
    return ChannelModel(spec, params, seed)


class ChannelModel:
    def __init__(self, spec: ChannelModelSpec, params: ModelParams, seed: int = 0):
        self.spec = spec
        self.params = params
        self.seed = seed
        if spec.variant == "CNN_TRF_BM":
            n_tok = token_starts(spec.input_length, spec.fs).size
            self._positions = sinusoidal_positions(n_tok, CONV_FILTERS[-1])

    def _backbone(self, x: Tensor, p) -> Tensor:
        for i in range(len(CONV_FILTERS)):
            x = F.conv1d_nlc(x, p[f"conv{i}.w"], p[f"conv{i}.b"], stride=1, padding=KERNEL // 2)
            x = F.max_pool1d(F.relu(x), POOL, axis=1)
        return x

    def forward(self, segments: np.ndarray, params=None) -> Tensor:
        """Logits ``(N, 2)`` for raw segments of shape ``(N, W*fs)``.

        ``params`` defaults to the trainable store; inference passes float32
        copies, and the input is cast to match.
        """
        p = self.params if params is None else params
        dtype = p["fc2.w"].data.dtype
        x = np.asarray(segments, dtype=dtype)
        if x.ndim == 1:
            x = x[None]
        if x.shape[-1] != self.spec.input_length:
            raise ValueError(
                f"segment length {x.shape[-1]} does not match model input {self.spec.input_length}"
            )
        n = x.shape[0]
        x = zscore(x)
        if self.spec.variant == "CNN_TRF_BM":
            tokens = tokenize(x, self.spec.fs)
            t = tokens.shape[1]
            h = self._backbone(Tensor(tokens.reshape(n * t, -1, 1)), p)
            h = F.mean(h, axis=1)
            h = F.add(F.reshape(h, (n, t, CONV_FILTERS[-1])), Tensor(self._positions.astype(dtype)))
            h = transformer_block(h, p, n_heads=N_HEADS, prefix="trf")
        else:
            h = self._backbone(Tensor(x[:, :, None]), p)
        h = F.reshape(h, (n, -1))
        h = F.relu(F.linear(h, p["fc1.w"], p["fc1.b"]))
        return F.linear(h, p["fc2.w"], p["fc2.b"])

    def loss(self, logits: Tensor, labels, weights=None, prior_beta: float = 1.0) -> Tensor:
        if self.spec.loss == "SM":
            return softmax_loss(logits, labels, weights)
        return bm_loss(logits, labels, weights, prior_beta)

    def probabilities_from_logits(self, logits: np.ndarray) -> np.ndarray:
        if self.spec.loss == "SM":
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            return e[:, 1] / e.sum(axis=1)
        alpha = concentrations(logits)
        return alpha[:, 1] / alpha.sum(axis=1)

    def inference_params(self) -> dict[str, Tensor]:
        """Frozen float32 copies of the weights (checkpoints store float32)."""
        return {k: Tensor(t.data.astype(np.float32)) for k, t in self.params.items()}

    def predict_proba(self, segments, batch_size: int = 2048, params=None) -> np.ndarray:
        x = np.asarray(segments)
        if x.ndim == 1:
            x = x[None]
        frozen = self.inference_params() if params is None else params
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], batch_size):
            logits = self.forward(x[s : s + batch_size], frozen).data.astype(np.float64)
            out[s : s + batch_size] = self.probabilities_from_logits(logits)
        return np.clip(out, 0.0, 1.0)

    # -- checkpoints ---------------------------------------------------------

    def architecture(self) -> dict:
        arch = {
            "conv_filters": list(CONV_FILTERS),
            "kernel": KERNEL,
            "padding": "same",
            "activation": "relu",
            "pool": POOL,
            "fc_hidden": FC_HIDDEN,
            "n_classes": 2,
            "input_norm": "per-segment z-score",
        }
        if self.spec.variant == "CNN_TRF_BM":
            arch.update(
                d_model=CONV_FILTERS[-1],
                n_heads=N_HEADS,
                ffn_hidden=FFN_HIDDEN,
                n_blocks=1,
                token_seconds=TOKEN_SECONDS,
                token_overlap=TOKEN_OVERLAP,
                positional_encoding="sinusoidal",
            )
        return arch

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "variant": self.spec.variant,
            "window_w": self.spec.window_w,
            "fs": self.spec.fs,
            "seed": self.seed,
            "architecture": self.architecture(),
            "parameters": [{"name": k, "shape": list(t.shape)} for k, t in self.params.items()],
        }
        with open(directory / "model.json", "w", encoding="utf-8") as fh:
            json.dump(header, fh, indent=2)
            fh.write("\n")
        self.params.flat().astype("<f4").tofile(directory / "weights.f32")

    @classmethod
    def load(cls, directory) -> "ChannelModel":
        directory = Path(directory)
        with open(directory / "model.json", encoding="utf-8") as fh:
            header = json.load(fh)
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != 1:
            raise ValueError(f"{directory}/model.json is not a version-1 channel model checkpoint")
        spec = ChannelModelSpec(header["variant"], int(header["window_w"]), int(header["fs"]))
        model = build_channel_model(spec, int(header.get("seed", 0)))
        flat = np.fromfile(directory / "weights.f32", dtype="<f4").astype(np.float64)
        declared = [(p["name"], tuple(p["shape"])) for p in header["parameters"]]
        expected = [(k, t.shape) for k, t in model.params.items()]
        if declared != expected:
            raise ValueError("checkpoint parameter layout does not match the architecture")
        if flat.size != model.params.n_values():
            raise ValueError(f"weights.f32 holds {flat.size} values, expected {model.params.n_values()}")
        offset = 0
        arrays = {}
        for name, shape in expected:
            size = int(np.prod(shape))
            arrays[name] = flat[offset : offset + size].reshape(shape)
            offset += size
        model.params.restore(arrays)
        return model


# -- training -----------------------------------------------------------------


@dataclass
class TrainingHistory:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_bac: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_bac", "val_ece"])
            for r in self.rows:
                writer.writerow([r["epoch"], f"{r['train_loss']:.8f}", f"{r['val_bac']:.6f}", f"{r['val_ece']:.6f}"])


def stratified_split(labels: np.ndarray, val_fraction: float, rng: np.random.Generator):
    train_idx, val_idx = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_val = int(round(val_fraction * idx.size))
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(val_idx))


def _as_arrays(dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple):
        x, y = dataset[0], dataset[1]
        w = dataset[2] if len(dataset) > 2 else None
    else:
        items: Sequence[LabeledChannelSegment] = list(dataset)
        x = np.stack([s.samples for s in items])
        y = np.array([s.label for s in items])
        w = np.array([s.weight for s in items])
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(y.size) if w is None else np.asarray(w, dtype=np.float64)
    return x, y, w


def train_channel(
    dataset,
    spec: ChannelModelSpec,
    config: TrainConfig,
    val_fraction: float = 0.2,
    log_path=None,
) -> tuple[ChannelModel, TrainingHistory]:
    """Train with Adam and early stopping on validation BAC.

    ``dataset`` is a list of :class:`LabeledChannelSegment` or an
    ``(x, y[, weights])`` tuple.  Class weights come from the training split
    unless ``config.class_weights`` is given.
    """
    x, y, sample_w = _as_arrays(dataset)
    if x.shape[1] != spec.input_length:
        raise ValueError(f"segments have length {x.shape[1]}, model expects {spec.input_length}")
    if np.unique(y).size < 2:
        raise ValueError("training data must contain both classes")
    if config.loss != spec.loss:
        raise ValueError(f"variant {spec.variant} trains with the {spec.loss} loss, not {config.loss}")

    rng = np.random.default_rng(config.seed)
    tr, va = stratified_split(y, val_fraction, rng)
    cw = np.asarray(config.class_weights) if config.class_weights is not None else class_weights(y[tr])
    weights = cw[y] * sample_w

    model = build_channel_model(spec, config.seed)
    params = model.params
    history = TrainingHistory()
    best = params.snapshot()
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = tr[rng.permutation(tr.size)]
        total, count = 0.0, 0
        for s in range(0, order.size, config.batch_size):
            idx = order[s : s + config.batch_size]
            params.zero_grad()
            with Tape() as tape:
                loss = model.loss(model.forward(x[idx]), y[idx], weights[idx], config.prior_beta)
            tape.backward(loss)
            adam_step(params, params.grads(), config)
            total += float(loss.data) * idx.size
            count += idx.size
        val_p = model.predict_proba(x[va]) if va.size else np.zeros(0)
        report = binary_report(val_p, y[va]) if va.size else None
        row = {
            "epoch": epoch,
            "train_loss": total / count,
            "val_bac": report.bac if report else float("nan"),
            "val_ece": report.ece if report else float("nan"),
        }
        history.rows.append(row)
        log.info("epoch %d loss %.5f val_bac %.4f", epoch, row["train_loss"], row["val_bac"])
        if report is None or report.bac > history.best_val_bac or epoch == 1:
            history.best_val_bac = row["val_bac"]
            history.best_epoch = epoch
            best = params.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    # keep the in-memory model identical to what a float32 checkpoint restores
    params.restore({k: v.astype(np.float32) for k, v in best.items()})
    if log_path is not None:
        history.write_csv(log_path)
    return model, history


def predict_channel(model: ChannelModel, segment) -> float:
    seg = np.asarray(segment)
    if seg.ndim != 1:
        raise ValueError("predict_channel takes a single 1-D segment")
    return float(model.predict_proba(seg[None])[0])


# -- labelled windows from annotated recordings -------------------------------

LABEL_OVERLAP_FRACTION = 0.5


def window_labels(starts_s: np.ndarray, window_w: float, seizures: Iterable) -> np.ndarray:
    """1 where a window overlaps the seizures by at least half its length."""
    starts_s = np.asarray(starts_s, dtype=np.float64)
    covered = np.zeros(starts_s.size)
    for iv in seizures:
        covered += np.clip(np.minimum(starts_s + window_w, iv.end) - np.maximum(starts_s, iv.start), 0.0, None)
    return (covered >= LABEL_OVERLAP_FRACTION * window_w).astype(np.int64)


def channel_training_set(recording, annotations, window_w: int, step: float):
    """Per-channel windows and labels from a preprocessed, annotated recording.

    A channel window is positive when the window overlaps a seizure by at
    least half of ``window_w`` and the channel is listed as affected in that
    seizure's annotation label (all channels when the label names none).
    """
    from .dsp import seconds_to_samples, window_array
    from .synthgen import affected_channels

    windows = window_array(recording.data, recording.fs, window_w, step)
    hop = seconds_to_samples(step, recording.fs)
    starts_s = np.arange(windows.shape[0]) * hop / recording.fs
    labels = np.zeros((windows.shape[0], recording.n_channels), dtype=np.int64)
    for iv, label in zip(annotations.seizures, annotations.labels):
        hit = window_labels(starts_s, window_w, [iv]).astype(bool)
        chans = set(affected_channels(label, recording.channel_names))
        mask = np.array([name in chans for name in recording.channel_names])
        labels[np.ix_(hit, mask)] = 1
    x = windows.reshape(-1, windows.shape[-1])
    return np.ascontiguousarray(x), labels.reshape(-1)
