"""Classifier training pipeline: splitting, callbacks, epoch loop, reports.

The training protocol is fixed: seeded 80/20 split, Adam updates on
shuffled mini-batches, the learning rate halved when the validation
loss plateaus for two epochs, and training stopped once it plateaus
for six. Runs are deterministic given (config, data): reports from
identical invocations are byte-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .features import FEATURE_KINDS
from .nn import AdamState, GeometryError, Model, adam_step, functional as F

DEFAULT_BATCH_SIZE = 32
DEFAULT_INITIAL_LR = 1e-3
DEFAULT_LR_FACTOR = 0.5
DEFAULT_MIN_LR = 1e-5
DEFAULT_MAX_EPOCHS = 100
MIN_DELTA = 1e-4  # improvement below this counts as a plateau epoch

REPORT_HEADER = "sonoforge run report v1"


class TrainingDivergedError(RuntimeError):
    """Loss left the reals; the run is unusable and must not continue."""


class ReportFormatError(ValueError):
    """Text is not a readable run report."""


@dataclass(frozen=True)
class TrainConfig:
    feature_kind: str
    batch_size: int = DEFAULT_BATCH_SIZE
    initial_lr: float = DEFAULT_INITIAL_LR
    lr_patience: int = 2
    lr_factor: float = DEFAULT_LR_FACTOR
    min_lr: float = DEFAULT_MIN_LR
    stop_patience: int = 6
    max_epochs: int = DEFAULT_MAX_EPOCHS
    seed: int = 0

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.initial_lr <= 0 or self.min_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must be in (0, 1)")
        if not 0 < self.lr_patience < self.stop_patience:
            raise ValueError("need 0 < lr_patience < stop_patience")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class ClipSet:
    """Feature stack (n, rows, cols) with integer labels per clip."""

    features: np.ndarray
    labels: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 3:
            raise ValueError("features must be a (n, rows, cols) stack")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must align with the feature stack")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        if self.ids and len(self.ids) != len(self.labels):
            raise ValueError("ids must align with the feature stack")

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class EpochRecord:
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float

    def __post_init__(self):
        for acc in (self.train_acc, self.val_acc):
            if not 0.0 <= acc <= 1.0:
                raise ValueError("accuracies must lie in [0, 1]")


@dataclass
class RunReport:
    config: TrainConfig
    epochs: list

    def __post_init__(self):
        if not self.epochs:
            raise ValueError("a run report needs at least one epoch")
        if len(self.epochs) > self.config.max_epochs:
            raise ValueError("more epochs than the config allows")

    @property
    def feature_kind(self) -> str:
        return self.config.feature_kind

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def to_text(self) -> str:
        lines = [REPORT_HEADER]
        for f in fields(TrainConfig):
            lines.append(f"{f.name}: {getattr(self.config, f.name)!r}")
        lines.append("")
        for i, e in enumerate(self.epochs, start=1):
            lines.append(
                f"epoch {i} train_loss={e.train_loss!r} train_acc={e.train_acc!r} "
                f"val_loss={e.val_loss!r} val_acc={e.val_acc!r} lr={e.lr!r}"
            )
        lines.append("")
        lines.append(f"epochs: {self.n_epochs}")
        return "\n".join(lines) + "\n"


def report_from_text(text: str) -> RunReport:
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise ReportFormatError("missing run report header")
    config_fields = {}
    cursor = 1
    for f in fields(TrainConfig):
        if cursor >= len(lines) or not lines[cursor].startswith(f"{f.name}: "):
            raise ReportFormatError(f"missing config line for {f.name}")
        raw = lines[cursor].split(": ", 1)[1]
        config_fields[f.name] = raw.strip("'")  # repr() quotes the kind string
        cursor += 1
    try:
        config = TrainConfig(
            feature_kind=config_fields["feature_kind"],
            batch_size=int(config_fields["batch_size"]),
            initial_lr=float(config_fields["initial_lr"]),
            lr_patience=int(config_fields["lr_patience"]),
            lr_factor=float(config_fields["lr_factor"]),
            min_lr=float(config_fields["min_lr"]),
            stop_patience=int(config_fields["stop_patience"]),
            max_epochs=int(config_fields["max_epochs"]),
            seed=int(config_fields["seed"]),
        )
    except ValueError as exc:
        raise ReportFormatError(f"bad config value: {exc}") from exc
    if cursor >= len(lines) or lines[cursor] != "":
        raise ReportFormatError("missing blank line after config")
    cursor += 1
    epochs = []
    while cursor < len(lines) and lines[cursor].startswith("epoch "):
        head, _, rest = lines[cursor].partition(" train_loss=")
        try:
            index = int(head.split()[1])
            parts = ("train_loss=" + rest).split(" ")
            values = {}
            for part in parts:
                key, _, value = part.partition("=")
                values[key] = float(value)
            epochs.append(
                EpochRecord(
                    values["train_loss"],
                    values["train_acc"],
                    values["val_loss"],
                    values["val_acc"],
                    values["lr"],
                )
            )
        except (IndexError, KeyError, ValueError) as exc:
            raise ReportFormatError(f"bad epoch line: {lines[cursor]!r}") from exc
        if index != len(epochs):
            raise ReportFormatError("epoch numbering is not consecutive")
        cursor += 1
    if cursor >= len(lines) or lines[cursor] != "":
        raise ReportFormatError("missing blank line after epochs")
    cursor += 1
    if cursor >= len(lines) or lines[cursor] != f"epochs: {len(epochs)}":
        raise ReportFormatError("epoch count line missing or inconsistent")
    return RunReport(config, epochs)


def split_dataset(items, train_frac=0.8, seed=0, labels=None, stratified=False):
    """Seeded shuffle then split; round(train_frac * n) items go to train.

    With stratified=True the same rule is applied inside every label
    group, which keeps class proportions near-identical across the
    two sides.
    """
    items = list(items)
    if not items:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    if stratified:
        if labels is None or len(labels) != len(items):
            raise ValueError("stratified split needs one label per item")
        labels = np.asarray(labels)
        train, val = [], []
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            perm = members[rng.permutation(len(members))]
            cut = int(round(train_frac * len(members)))
            train.extend(items[i] for i in perm[:cut])
            val.extend(items[i] for i in perm[cut:])
        return train, val
    perm = rng.permutation(len(items))
    cut = int(round(train_frac * len(items)))
    return [items[i] for i in perm[:cut]], [items[i] for i in perm[cut:]]


def _plateau_streak(history, min_delta=MIN_DELTA):
    """Trailing epochs that failed to beat the running best by min_delta."""
    best = np.inf
    streak = 0
    for value in history:
        if value < best - min_delta:
            best = value
            streak = 0
        else:
            streak += 1
    return streak


def reduce_lr_on_plateau(history, current_lr, patience=2, factor=DEFAULT_LR_FACTOR,
                         min_lr=DEFAULT_MIN_LR):
    """New learning rate after the latest epoch in `history`.

    The rate is cut by `factor` each time the non-improvement streak
    reaches a fresh multiple of `patience`, so a reduction restarts
    the countdown without any hidden state.
    """
    if len(history) == 0:
        raise ValueError("history must contain at least one epoch")
    streak = _plateau_streak(history)
    if streak >= patience and streak % patience == 0:
        return max(current_lr * factor, min_lr)
    return current_lr


def early_stopping(history, patience=6) -> bool:
    if len(history) == 0:
        raise ValueError("history must contain at least one epoch")
    return _plateau_streak(history) >= patience


def evaluate(model: Model, clips: ClipSet, batch_size=DEFAULT_BATCH_SIZE):
    """Inference-mode (loss, accuracy) over a whole clip set."""
    want = (model.spec.input_height, model.spec.input_width)
    if clips.features.shape[1:] != want:
        raise GeometryError(
            f"features are {clips.features.shape[1:]}, model wants {want}"
        )
    if len(clips) == 0:
        raise ValueError("cannot evaluate an empty clip set")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(clips), batch_size):
        xb = clips.features[start : start + batch_size, :, :, None]
        yb = clips.labels[start : start + batch_size]
        logits = model.forward(xb, train=False)
        loss, _ = F.softmax_xent(logits, yb)
        total_loss += loss * len(yb)
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    return total_loss / len(clips), correct / len(clips)


def train(model: Model, train_set: ClipSet, val_set: ClipSet,
          config: TrainConfig) -> RunReport:
    """Run the full protocol and record every epoch.

    Per epoch: seeded shuffle, mini-batch forward/backward/Adam, one
    full validation pass, then the callbacks in order (reduce the
    learning rate first, then decide on stopping).
    """
    if train_set.features.shape[1:] != val_set.features.shape[1:]:
        raise GeometryError("train and validation features disagree in shape")
    state = AdamState.for_params(model.params(), lr=config.initial_lr)
    root = np.random.SeedSequence(config.seed)
    records = []
    val_losses = []
    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        shuffle_rng, dropout_rng = map(np.random.default_rng, root.spawn(2))
        order = shuffle_rng.permutation(n)
        lr_used = state.lr
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            chosen = order[start : start + config.batch_size]
            xb = train_set.features[chosen][:, :, :, None]
            yb = train_set.labels[chosen]
            logits = model.forward(xb, train=True, rng=dropout_rng)
            loss, dlogits = F.softmax_xent(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            model.backward(dlogits)
            adam_step(model.params(), model.grads(), state)
            loss_sum += loss * len(yb)
            correct += int((np.argmax(logits, axis=1) == yb).sum())
        val_loss, val_acc = evaluate(model, val_set, config.batch_size)
        records.append(
            EpochRecord(loss_sum / n, correct / n, val_loss, val_acc, lr_used)
        )
        val_losses.append(val_loss)
        state.lr = reduce_lr_on_plateau(
            val_losses, state.lr, config.lr_patience, config.lr_factor, config.min_lr
        )
        if early_stopping(val_losses, config.stop_patience):
            break
    return RunReport(config, records)
