"""The two classifier architectures, the trainer, two-stage routing and
checkpoint serialization."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import LABELS, NUM_LABELS, PAD_ID, PreprocessConfig, TokenSequence, Vocabulary, preprocess, tokenize
from .embedding import EmbeddingTable
from .errors import ConfigError, CheckpointError, DataError, NumericError
from .neural import (
    Adam,
    Attention,
    BiLSTM,
    Conv1D,
    Dense,
    Dropout,
    LSTM,
    LeakyReLULayer,
    MaxOverTime,
    MaxPool1D,
    Param,
    ReLULayer,
    SigmoidLayer,
)
from .neural.losses import add_l2_gradients, bce_loss, l2_penalty

CHECKPOINT_MAGIC = b"TXCKPT01"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BinaryModelConfig:
    lstm_units: int = 128
    dense_hidden: tuple[int, ...] = (128, 64)
    dropout_rate: float = 0.3
    leaky_slope: float = 0.01
    pooled_input: bool = False  # feed the max-pooled sentence vector instead of (L, D)

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryModelConfig":
        d = dict(d)
        d["dense_hidden"] = tuple(int(v) for v in d.get("dense_hidden", ()))
        return cls(**d)


@dataclass(frozen=True)
class MultiLabelModelConfig:
    conv_stack: tuple[tuple[int, int], ...] = ((512, 4), (256, 3), (128, 2))
    pool: int = 2
    bilstm_units: int = 128
    use_attention: bool = True

    def __post_init__(self):
        if not self.conv_stack:
            raise ConfigError("conv stack must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "MultiLabelModelConfig":
        d = dict(d)
        d["conv_stack"] = tuple(
            (int(f), int(k)) for f, k in d.get("conv_stack", ())
        )
        return cls(**d)


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    learning_rate: float = 1e-5
    epochs: int = 10
    seed: int = 0
    l2_lambda: float = 1e-4
    patience: int = 10

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


def desk_binary_config() -> BinaryModelConfig:
    """Small sizes for fast desk-scale runs and tests."""
    return BinaryModelConfig(lstm_units=8, dense_hidden=(8,))


def desk_multilabel_config() -> MultiLabelModelConfig:
    return MultiLabelModelConfig(conv_stack=((16, 4), (12, 3), (8, 2)), bilstm_units=8)


class EmbeddingLayer:
    """Lookup with masking; PAD row pinned to zero and never updated."""

    kind = "embedding"

    def __init__(self, table: EmbeddingTable):
        self.table = table
        self.param = Param("table", table.matrix)
        self._ids = None
        self._mask = None

    def forward(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        self._ids = ids
        self._mask = mask
        return self.param.value[ids] * mask[:, None]

    def backward(self, dx: np.ndarray) -> None:
        if not self.table.trainable:
            return
        np.add.at(self.param.grad, self._ids, dx * self._mask[:, None])
        self.param.grad[PAD_ID, :] = 0.0


class BinaryModel:
    """Embedding -> LSTM -> max over time -> dropout -> dense stack -> sigmoid."""

    kind = "binary"
    output_dim = 1

    def __init__(self, config: BinaryModelConfig, table: EmbeddingTable, seed: int = 0):
        rng = np.random.default_rng(np.random.PCG64(seed))
        self.config = config
        self.embedding = EmbeddingLayer(table)
        self.input_pool = MaxOverTime() if config.pooled_input else None
        self.lstm = LSTM(table.dim, config.lstm_units, rng)
        self.time_pool = MaxOverTime()
        self.dropout = Dropout(config.dropout_rate)
        dims = (config.lstm_units, *config.dense_hidden)
        self.hidden = [
            (Dense(dims[i], dims[i + 1], rng), LeakyReLULayer(config.leaky_slope))
            for i in range(len(dims) - 1)
        ]
        self.out = Dense(dims[-1], 1, rng)
        self.out_act = SigmoidLayer()

    def forward(self, seq: TokenSequence, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        x = self.embedding.forward(seq.input_ids, seq.mask)
        mask = seq.mask
        if self.input_pool is not None:
            x = self.input_pool.forward(x, mask)[None, :]
            mask = np.ones(1)
        h = self.lstm.forward(x, mask)
        v = self.time_pool.forward(h, mask)
        v = self.dropout.forward(v, train, rng)
        for dense, act in self.hidden:
            v = act.forward(dense.forward(v))
        return self.out_act.forward(self.out.forward(v))

    def backward(self, dp: np.ndarray) -> None:
        dv = self.out.backward(self.out_act.backward(dp))
        for dense, act in reversed(self.hidden):
            dv = dense.backward(act.backward(dv))
        dv = self.dropout.backward(dv)
        dh = self.time_pool.backward(dv)
        dx = self.lstm.backward(dh)
        if self.input_pool is not None:
            dx = self.input_pool.backward(dx[0])
        self.embedding.backward(dx)

    def named_tensors(self) -> list[tuple[str, Param]]:
        named = [("embedding.table", self.embedding.param)]
        for p in self.lstm.params():
            named.append((f"lstm.{p.name}", p))
        for i, (dense, _) in enumerate(self.hidden):
            for p in dense.params():
                named.append((f"hidden{i}.{p.name}", p))
        for p in self.out.params():
            named.append((f"out.{p.name}", p))
        return named

    def params(self) -> list[Param]:
        trainable = [] if not self.embedding.table.trainable else [self.embedding.param]
        trainable += self.lstm.params()
        for dense, _ in self.hidden:
            trainable += dense.params()
        return trainable + self.out.params()

    def weight_params(self) -> list[Param]:
        weights = self.lstm.weight_params()
        for dense, _ in self.hidden:
            weights += dense.weight_params()
        return weights + self.out.weight_params()

    def zero_grad(self) -> None:
        for _, p in self.named_tensors():
            p.zero_grad()


class MultiLabelModel:
    """Embedding -> (conv + ReLU + pool) x N -> BiLSTM -> attention -> sigmoid."""

    kind = "multilabel"
    output_dim = NUM_LABELS

    def __init__(self, config: MultiLabelModelConfig, table: EmbeddingTable,
                 seq_len: int, seed: int = 0):
        self.post_stack_length(config, seq_len)  # raises if the stack collapses
        rng = np.random.default_rng(np.random.PCG64(seed))
        self.config = config
        self.seq_len = seq_len
        self.embedding = EmbeddingLayer(table)
        self.blocks = []
        c_in = table.dim
        for filters, kernel in config.conv_stack:
            self.blocks.append(
                (Conv1D(kernel, c_in, filters, rng), ReLULayer(), MaxPool1D(config.pool))
            )
            c_in = filters
        self.bilstm = BiLSTM(c_in, config.bilstm_units, rng)
        feat = 2 * config.bilstm_units
        self.attention = Attention(feat, rng) if config.use_attention else None
        self.time_pool = None if config.use_attention else MaxOverTime()
        self.out = Dense(feat, NUM_LABELS, rng)
        self.out_act = SigmoidLayer()
        self.last_alpha: np.ndarray | None = None

    @staticmethod
    def post_stack_length(config: MultiLabelModelConfig, length: int) -> int:
        """Sequence length after the conv/pool stack; raises ConfigError if any
        stage would produce an empty sequence."""
        for filters, kernel in config.conv_stack:
            if length < kernel:
                raise ConfigError(
                    f"sequence length {length} too short for kernel {kernel}"
                )
            length = length - kernel + 1
            if length < config.pool:
                raise ConfigError(
                    f"sequence length {length} too short for pool {config.pool}"
                )
            length //= config.pool
        return length

    def forward(self, seq: TokenSequence, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        x = self.embedding.forward(seq.input_ids, seq.mask)
        for conv, act, pool in self.blocks:
            x = pool.forward(act.forward(conv.forward(x)))
        h = self.bilstm.forward(x)
        if self.attention is not None:
            alpha, z = self.attention.forward(h)
            self.last_alpha = alpha
        else:
            z = self.time_pool.forward(h)
        return self.out_act.forward(self.out.forward(z))

    def backward(self, dp: np.ndarray) -> None:
        dz = self.out.backward(self.out_act.backward(dp))
        if self.attention is not None:
            dh = self.attention.backward(dz)
        else:
            dh = self.time_pool.backward(dz)
        dx = self.bilstm.backward(dh)
        for conv, act, pool in reversed(self.blocks):
            dx = conv.backward(act.backward(pool.backward(dx)))
        self.embedding.backward(dx)

    def named_tensors(self) -> list[tuple[str, Param]]:
        named = [("embedding.table", self.embedding.param)]
        for i, (conv, _, _) in enumerate(self.blocks):
            for p in conv.params():
                named.append((f"conv{i}.{p.name}", p))
        for p in self.bilstm.fwd.params():
            named.append((f"bilstm.fwd.{p.name}", p))
        for p in self.bilstm.bwd.params():
            named.append((f"bilstm.bwd.{p.name}", p))
        if self.attention is not None:
            for p in self.attention.params():
                named.append((f"attention.{p.name}", p))
        for p in self.out.params():
            named.append((f"out.{p.name}", p))
        return named

    def params(self) -> list[Param]:
        trainable = [] if not self.embedding.table.trainable else [self.embedding.param]
        for conv, _, _ in self.blocks:
            trainable += conv.params()
        trainable += self.bilstm.params()
        if self.attention is not None:
            trainable += self.attention.params()
        return trainable + self.out.params()

    def weight_params(self) -> list[Param]:
        weights = []
        for conv, _, _ in self.blocks:
            weights += conv.weight_params()
        weights += self.bilstm.weight_params()
        if self.attention is not None:
            weights += self.attention.weight_params()
        return weights + self.out.weight_params()

    def zero_grad(self) -> None:
        for _, p in self.named_tensors():
            p.zero_grad()


def predict_binary(model: BinaryModel, seq: TokenSequence) -> float:
    """Probability of the toxic class, in (0, 1)."""
    return float(model.forward(seq)[0])


def predict_multilabel(model: MultiLabelModel, seq: TokenSequence) -> np.ndarray:
    """Six per-class probabilities in the fixed label order."""
    return model.forward(seq)


@dataclass
class TrainedModel:
    """A trained model plus everything needed to reproduce and reload it."""

    model: object  # BinaryModel | MultiLabelModel
    vocab_hash: str
    history: list[dict] = field(default_factory=list)
    train_config: TrainingConfig | None = None
    best_epoch: int = -1

    @property
    def kind(self) -> str:
        return self.model.kind


def train(model, train_set, val_set, config: TrainingConfig,
          vocab_hash: str = "") -> TrainedModel:
    """Mini-batch Adam with seeded shuffling and best-validation checkpointing.

    ``train_set`` and ``val_set`` are lists of (TokenSequence, target vector).
    Deterministic given (seed, data, config): the shuffle and dropout draws
    share one generator consumed in a fixed order.
    """
    if not train_set or not val_set:
        raise DataError("training requires non-empty train and validation folds")
    config.validate()
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    opt = Adam(model.params(), config.learning_rate)
    weights = model.weight_params()

    def validation_loss() -> float:
        total = 0.0
        for seq, y in val_set:
            p = model.forward(seq)
            loss, _ = bce_loss(p, y)
            total += loss
        return total / len(val_set) + l2_penalty((w.value for w in weights),
                                                 config.l2_lambda)

    history: list[dict] = []
    best_loss = np.inf
    best_state = None
    best_epoch = -1
    bad_epochs = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            model.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                seq, y = train_set[idx]
                p = model.forward(seq, train=True, rng=rng)
                loss, dp = bce_loss(p, y)
                model.backward(dp / len(batch))
                batch_loss += loss
            add_l2_gradients(weights, config.l2_lambda)
            opt.step()
            penalty = l2_penalty((w.value for w in weights), config.l2_lambda)
            epoch_loss += batch_loss + penalty * len(batch)
        train_loss = epoch_loss / len(train_set)
        val_loss = validation_loss()
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": float(train_loss),
                        "val_loss": float(val_loss)})
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = [p.value.copy() for p in opt.params]
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    if best_state is not None:
        for p, value in zip(opt.params, best_state):
            p.value[...] = value
    return TrainedModel(model=model, vocab_hash=vocab_hash, history=history,
                        train_config=config, best_epoch=best_epoch)


def route(p_toxic: float, label_probs, tau_binary: float = 0.5,
          tau_label: float = 0.5, class_names=LABELS) -> list[str]:
    """Two-stage decision rule.

    Below the binary threshold the verdict is Non-toxic and ``label_probs``
    is never consulted (pass a callable to keep stage 2 lazy). Otherwise:
    all labels at or above the label threshold, or the argmax label
    (first-index tie-break) when none clears it.
    """
    if p_toxic < tau_binary:
        return ["Non-toxic"]
    probs = np.asarray(label_probs() if callable(label_probs) else label_probs,
                       dtype=np.float64)
    chosen = [name for name, p in zip(class_names, probs) if p >= tau_label]
    if not chosen:
        chosen = [class_names[int(np.argmax(probs))]]
    return chosen


@dataclass
class TwoStagePipeline:
    """End-to-end classifier: preprocess, tokenize, gate, tag."""

    binary: BinaryModel
    multilabel: MultiLabelModel
    vocab: Vocabulary
    preprocess_config: PreprocessConfig
    max_len: int
    tau_binary: float = 0.5
    tau_label: float = 0.5

    def classify(self, text: str) -> dict:
        seq = tokenize(preprocess(text, self.preprocess_config), self.vocab,
                       self.max_len)
        p_toxic = predict_binary(self.binary, seq)
        label_probs: list[float] | None = None

        def stage2() -> np.ndarray:
            nonlocal label_probs
            probs = predict_multilabel(self.multilabel, seq)
            label_probs = [float(v) for v in probs]
            return probs

        labels = route(p_toxic, stage2, self.tau_binary, self.tau_label)
        return {"labels": labels, "p_toxic": p_toxic, "label_probs": label_probs}


def _header_dict(trained: TrainedModel) -> dict:
    model = trained.model
    table = model.embedding.table
    return {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "class_order": list(LABELS) if model.kind == "multilabel" else ["toxic"],
        "model_config": asdict(model.config),
        "train_config": asdict(trained.train_config) if trained.train_config else None,
        "embedding": {
            "vocab_size": table.vocab_size,
            "dim": table.dim,
            "trainable": table.trainable,
            "source": table.source,
        },
        "seq_len": getattr(model, "seq_len", None),
        "vocab_hash": trained.vocab_hash,
        "best_epoch": trained.best_epoch,
        "history": [[h["epoch"], h["train_loss"], h["val_loss"]]
                    for h in trained.history],
        "tensors": [{"name": name, "shape": list(p.value.shape)}
                    for name, p in model.named_tensors()],
    }


def save_model(trained: TrainedModel, path) -> None:
    """Versioned binary container: magic, JSON header, fp64 tensors, SHA-256."""
    header = json.dumps(_header_dict(trained), sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header]
    for _, p in trained.model.named_tensors():
        parts.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(hashlib.sha256(blob).digest())


def load_model(path, expect_kind: str | None = None) -> TrainedModel:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(CHECKPOINT_MAGIC) + 4 + 32:
        raise CheckpointError(f"checkpoint {path} is truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"checkpoint {path} failed its checksum")
    if body[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"checkpoint {path} has a bad magic header")
    offset = len(CHECKPOINT_MAGIC)
    (header_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    header = json.loads(body[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    if header["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {header['format_version']}"
        )
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(
            f"checkpoint {path} holds a {kind!r} model, expected {expect_kind!r}"
        )

    emb = header["embedding"]
    table = EmbeddingTable(np.zeros((emb["vocab_size"], emb["dim"])),
                           trainable=emb["trainable"], source=emb["source"])
    if kind == "binary":
        model = BinaryModel(BinaryModelConfig.from_dict(header["model_config"]),
                            table, seed=0)
    elif kind == "multilabel":
        model = MultiLabelModel(
            MultiLabelModelConfig.from_dict(header["model_config"]), table,
            seq_len=int(header["seq_len"]), seed=0)
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")

    named = model.named_tensors()
    declared = header["tensors"]
    if len(named) != len(declared):
        raise CheckpointError("checkpoint tensor list does not match model")
    for (name, param), meta in zip(named, declared):
        if meta["name"] != name or tuple(meta["shape"]) != param.value.shape:
            raise CheckpointError(
                f"tensor mismatch: file has {meta['name']}{meta['shape']}, "
                f"model expects {name}{list(param.value.shape)}"
            )
        nbytes = param.value.size * 8
        if offset + nbytes > len(body):
            raise CheckpointError(f"checkpoint {path} is truncated")
        param.value[...] = np.frombuffer(
            body[offset:offset + nbytes], dtype="<f8"
        ).reshape(param.value.shape)
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"checkpoint {path} has trailing bytes")

    train_config = None
    if header["train_config"]:
        train_config = TrainingConfig(**header["train_config"])
    history = [{"epoch": e, "train_loss": tl, "val_loss": vl}
               for e, tl, vl in header["history"]]
    return TrainedModel(model=model, vocab_hash=header["vocab_hash"],
                        history=history, train_config=train_config,
                        best_epoch=header["best_epoch"])
