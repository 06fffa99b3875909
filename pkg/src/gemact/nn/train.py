"""Training loop, its configuration and the per-epoch report."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..core import ActivationSpec
from .data import load_idx, make_synthetic
from .network import DenseNet, InitConfig, init_dense_net, softmax_cross_entropy
from .optim import AdamW, Schedule, SGDMomentum
from .prng import Xoshiro256

TRAIN_HEADER = "epoch,train_loss,train_acc,val_acc,lr,elapsed_s"


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run needs; also the schema of the ``key=value`` config file."""

    # optimisation
    optimizer: str = "adamw"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    epochs: int = 200
    batch_size: int = 32
    seed: int = 42
    schedule: str = "constant"
    milestones: tuple = ()
    gamma: float = 0.1
    warmup_steps: int = 0
    # data
    dataset: str = "spirals"
    n_per_class: int = 200
    val_per_class: int = 200
    noise: float = 0.05
    idx_images: str = ""
    idx_labels: str = ""
    val_fraction: float = 0.2
    # model
    activation: str = "gem:n=1"
    depth: int = 2
    width: int = 32
    init_gain: str = "1.0"
    init_bias: float = 1.0
    # reporting
    timing: bool = False

    def __post_init__(self):
        if self.optimizer not in ("sgd_momentum", "adamw"):
            raise ValueError(f"optimizer must be 'sgd_momentum' or 'adamw', got {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.depth < 0 or self.width < 1:
            raise ValueError("epochs >= 0, batch_size >= 1, depth >= 0 and width >= 1 are required")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit natural number")
        if self.dataset not in ("spirals", "blobs", "idx"):
            raise ValueError(f"dataset must be spirals, blobs or idx, got {self.dataset!r}")
        Schedule(self.schedule, tuple(self.milestones), self.gamma, self.warmup_steps)
        ActivationSpec.parse(self.activation)
        if self.init_gain != "variance":
            float(self.init_gain)

    @property
    def spec(self) -> ActivationSpec:
        return ActivationSpec.parse(self.activation)

    @property
    def schedule_obj(self) -> Schedule:
        return Schedule(self.schedule, tuple(self.milestones), self.gamma, self.warmup_steps)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name: str, kind, text: str):
    if kind is bool or kind == "bool":
        try:
            return _BOOL[text.lower()]
        except KeyError:
            raise ValueError(f"{name}: expected true/false, got {text!r}") from None
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    if kind is tuple or kind == "tuple":
        return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())
    return text


def config_fields() -> dict:
    return {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def config_from_mapping(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Build a config from string values; unknown keys are rejected with the list of valid ones."""
    fields = config_fields()
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise KeyError(f"unknown config key(s) {', '.join(unknown)}; valid keys: {', '.join(fields)}")
    typed = {}
    for key, raw in values.items():
        typed[key] = _coerce(key, fields[key], raw) if isinstance(raw, str) else raw
    return dataclasses.replace(base or TrainConfig(), **typed)


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return config_from_mapping(values, base)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(t) for t in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


class Dataset(NamedTuple):
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(max(self.y_train.max(), self.y_val.max() if self.y_val.size else 0)) + 1


# Independent streams derived from the one user seed.
def _streams(seed: int) -> dict:
    return {name: (seed + k) % 2**64 for k, name in enumerate(("train_data", "val_data", "init", "shuffle"))}


def build_dataset(cfg: TrainConfig) -> Dataset:
    s = _streams(cfg.seed)
    if cfg.dataset == "idx":
        if not (cfg.idx_images and cfg.idx_labels):
            raise ValueError("dataset=idx needs idx_images and idx_labels")
        x, y = load_idx(cfg.idx_images, cfg.idx_labels)
        order = Xoshiro256(s["val_data"]).permutation(len(y))
        n_val = int(round(cfg.val_fraction * len(y)))
        val, tr = order[:n_val], order[n_val:]
        return Dataset(x[tr], y[tr], x[val], y[val])
    xt, yt = make_synthetic(cfg.dataset, cfg.n_per_class, cfg.noise, s["train_data"])
    xv, yv = make_synthetic(cfg.dataset, cfg.val_per_class, cfg.noise, s["val_data"])
    return Dataset(xt, yt, xv, yv)


def build_network(cfg: TrainConfig, n_inputs: int, n_classes: int) -> DenseNet:
    sizes = [n_inputs] + [cfg.width] * cfg.depth + [n_classes]
    gain = cfg.init_gain if cfg.init_gain == "variance" else float(cfg.init_gain)
    return init_dense_net(sizes, cfg.spec, Xoshiro256(_streams(cfg.seed)["init"]), InitConfig(gain, cfg.init_bias))


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    lr: float
    elapsed_s: float | None = None

    def csv(self) -> str:
        vals = [str(self.epoch)] + [repr(float(v)) for v in (self.train_loss, self.train_acc, self.val_acc, self.lr)]
        vals.append("" if self.elapsed_s is None else repr(float(self.elapsed_s)))
        return ",".join(vals)


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    status: str = "ok"  # ok | degraded | diverged
    message: str = ""

    @property
    def flagged(self) -> bool:
        return self.status != "ok"

    @property
    def final(self) -> EpochRow | None:
        return self.rows[-1] if self.rows else None

    def to_csv(self) -> str:
        return "\n".join([TRAIN_HEADER] + [r.csv() for r in self.rows]) + "\n"


def evaluate(net: DenseNet, x, y) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over the whole set."""
    if len(y) == 0:
        return math.nan, math.nan
    logits = net.predict(x)
    loss, _ = softmax_cross_entropy(logits, y)
    return loss, float(np.mean(logits.argmax(axis=1) == y))


def _finite(net: DenseNet) -> bool:
    return all(np.isfinite(p).all() for p in net.parameters())


def train(net: DenseNet, data: Dataset, cfg: TrainConfig) -> TrainReport:
    """Mini-batch training; row 0 is the untrained network.

    A non-finite loss or parameter stops the run and marks it ``diverged``;
    a run ending near chance accuracy is marked ``degraded``.  Neither raises.
    """
    if len(data.y_train) == 0:
        raise ValueError("training set is empty")
    if data.y_train.min() < 0 or data.y_train.max() >= net.layers[-1].out_features:
        raise ValueError("labels out of range for the output layer")
    params = net.parameters()
    if cfg.optimizer == "adamw":
        opt = AdamW(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay)
    else:
        opt = SGDMomentum(params, cfg.lr, cfg.momentum, cfg.weight_decay)
    sched = cfg.schedule_obj
    shuffle = Xoshiro256(_streams(cfg.seed)["shuffle"])
    n = len(data.y_train)
    per_epoch = -(-n // cfg.batch_size)
    total = per_epoch * cfg.epochs
    start = time.perf_counter()
    report = TrainReport()

    def record(epoch, lr):
        tl, ta = evaluate(net, data.x_train, data.y_train)
        _, va = evaluate(net, data.x_val, data.y_val)
        elapsed = time.perf_counter() - start if cfg.timing else None
        report.rows.append(EpochRow(epoch, tl, ta, va, lr, elapsed))
        return tl

    record(0, sched.lr(cfg.lr, 0, 1, total))
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle.permutation(n)
        lr = sched.lr(cfg.lr, step, epoch, total)
        diverged = False
        with np.errstate(all="ignore"):
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                lr = sched.lr(cfg.lr, step, epoch, total)
                logits, tape = net.forward(data.x_train[idx])
                loss, g = softmax_cross_entropy(logits, data.y_train[idx])
                if not math.isfinite(loss):
                    diverged = True
                    break
                opt.step([gr for layer in net.backward(tape, g) for gr in layer.values()], lr)
                net.mark_updated()
                step += 1
            diverged = diverged or not _finite(net)
            if diverged:
                report.rows.append(EpochRow(epoch, math.nan, math.nan, math.nan, lr, None))
            elif not math.isfinite(record(epoch, lr)):
                diverged = True
        if diverged:
            report.status = "diverged"
            report.message = f"non-finite loss or parameters at epoch {epoch}"
            return report
    chance = 1.0 / net.layers[-1].out_features
    if report.final.train_acc < chance + 0.1:
        report.status = "degraded"
        report.message = f"final train accuracy {report.final.train_acc!r} is within 0.1 of chance"
    return report


def run_config(cfg: TrainConfig) -> TrainReport:
    data = build_dataset(cfg)
    net = build_network(cfg, data.x_train.shape[1], data.n_classes)
    return train(net, data, cfg)
