"""Teacher pretraining and feature distillation through averaged projectors.

``distill`` runs the joint objective over shuffled mini-batches: forward
the frozen teacher and the student, combine cross-entropy with the
alignment loss, and take one SGD-momentum step on the student and every
projector together. One :class:`MetricsRecord` is appended per epoch; the
returned student carries no projector parameters.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .data import batch_indices
from .diagnostics import MetricsRecord, m_bc, m_da, projector_diversity
from .errors import ConfigError, TrainingError
from .losses import DistillLossConfig, da_loss, kd_baseline_loss, total_loss
from .nets import Network
from .projector import Projector, ProjectorEnsemble, ProjectorSpec, ensemble_forward, init_ensemble
from .rng import EVAL, PROJECTOR, STUDENT, TEACHER, derive_seed
from .tensor import Tensor, softmax_cross_entropy

log = logging.getLogger(__name__)

MODES = ("no-projector", "single", "ensemble", "kd-baseline", "student-only")


@dataclass(frozen=True)
class DistillConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 0.05
    lr_decay: float = 0.1
    decay_epochs: tuple = (30, 45)
    momentum: float = 0.9
    weight_decay: float = 5e-4
    alpha: float = 25.0
    q: int = 3
    projector_depth: int = 1
    projector_width: int = 1
    activation: str = "relu"
    seed: int = 0
    mode: str = "ensemble"
    kd_temperature: float = 4.0
    kd_weight: float = 0.9
    eval_batch: int = 256

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        de = self.decay_epochs
        if any(b <= a for a, b in zip(de, de[1:])):
            raise ConfigError(f"decay_epochs must be strictly increasing, got {list(de)}")
        if de and (de[0] < 0 or de[-1] >= self.epochs):
            raise ConfigError(f"decay_epochs must lie in [0, {self.epochs}), got {list(de)}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if int(self.q) != self.q or self.q < 1:
            raise ConfigError(f"q must be a positive integer, got {self.q}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eval_batch < 2:
            raise ConfigError(f"eval_batch must be >= 2, got {self.eval_batch}")

    def projector_spec(self, d, m):
        return ProjectorSpec(d, m, self.projector_depth, self.projector_width, self.activation)


@dataclass
class OptimizerState:
    velocities: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p.data) for p in params])


def sgd_step(params, grads, state, lr, momentum, weight_decay):
    """``v = momentum * v + grad + weight_decay * p``; ``p -= lr * v``.

    A ``None`` gradient counts as zero.
    """
    if len(state.velocities) != len(params) or len(grads) != len(params):
        raise ConfigError("params, grads and velocity buffers must align one to one")
    for i, (p, g) in enumerate(zip(params, grads)):
        v = momentum * state.velocities[i]
        if g is not None:
            v = v + g
        if weight_decay:
            v = v + weight_decay * p.data
        state.velocities[i] = v
        p.data = p.data - lr * v
    return params, state


def lr_at(epoch, config):
    drops = sum(1 for e in config.decay_epochs if e <= epoch)
    return config.lr * config.lr_decay ** drops


def frozen_copy(net):
    """Gradient-free view of ``net`` sharing no mutable state with it."""
    return Network(net.spec, [Tensor(p.data.copy()) for p in net.params])


def infer(net, x):
    """Features and logits as plain arrays, without building a graph."""
    f, z = nets.forward(frozen_copy(net), x)
    return f.data, z.data


def accuracy(net, ds):
    _, logits = infer(net, ds.inputs)
    return float((logits.argmax(axis=0) == ds.labels).mean())


def _split(data):
    if isinstance(data, (tuple, list)):
        train, test = data
        return train, test
    return data, None


def pretrain_teacher(spec, data, config, checkpoint=None, history=None):
    """Train a network with cross-entropy only and return it frozen.

    ``data`` is a train dataset or a ``(train, test)`` pair. If ``history``
    is a list, one ``{"epoch", "loss", "train_acc", "test_acc"}`` dict is
    appended per epoch.
    """
    train, test = _split(data)
    net = nets.build(spec, derive_seed(config.seed, TEACHER))
    state = OptimizerState.for_params(net.params)
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        losses = []
        for idx in batch_indices(len(train), config.batch_size, derive_seed(config.seed, TEACHER), epoch):
            _, logits = nets.forward(net, train.inputs[:, idx])
            loss = softmax_cross_entropy(logits, train.labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"teacher loss became {value} in epoch {epoch}", epoch=epoch)
            net.zero_grad()
            loss.backward()
            sgd_step(net.params, [p.grad for p in net.params], state, lr, config.momentum, config.weight_decay)
            losses.append(value)
        if history is not None:
            history.append({
                "epoch": epoch + 1,
                "loss": float(np.mean(losses)),
                "train_acc": accuracy(net, train),
                "test_acc": accuracy(net, test) if test is not None else float("nan"),
            })
    net.zero_grad()
    net.requires_grad_(False)
    if checkpoint is not None:
        nets.save(net, checkpoint)
    return net


def _loss_config(cfg):
    alpha = 0.0 if cfg.mode == "student-only" else cfg.alpha
    return DistillLossConfig(alpha=alpha)


@dataclass
class DistillResult:
    student: Network
    records: list
    projectors: object = None  # ProjectorEnsemble or None; diagnostics only


def distill(teacher, student_spec, data, cfg, on_epoch=None):
    """Distil ``teacher`` into a fresh student built from ``student_spec``.

    ``data`` is a ``(train, test)`` pair. Returns ``(student, records)``;
    the projectors are dropped. ``on_epoch(record)`` is called after each
    epoch if given.
    """
    result = run_distillation(teacher, student_spec, data, cfg, on_epoch)
    return result.student, result.records


def run_distillation(teacher, student_spec, data, cfg, on_epoch=None):
    """As :func:`distill` but also hands back the trained projectors."""
    train, test = _split(data)
    if test is None:
        raise ConfigError("distill needs a (train, test) pair for per-epoch diagnostics")
    if not isinstance(student_spec, nets.NetworkSpec):
        student_spec = nets.NetworkSpec.from_dict(student_spec)
    d, m = student_spec.feature_dim, teacher.spec.feature_dim
    if cfg.mode == "no-projector" and d != m:
        raise ConfigError(f"mode no-projector needs equal feature dims, got d={d}, m={m}")
    if student_spec.input_dim != train.input_dim or teacher.spec.input_dim != train.input_dim:
        raise ConfigError("student, teacher and data input dims disagree")

    teacher_bytes = nets.to_bytes(teacher)
    t_train_feat, t_train_logits = infer(teacher, train.inputs)

    student = nets.build(student_spec, derive_seed(cfg.seed, STUDENT))
    ensemble = None
    if cfg.mode in ("single", "ensemble"):
        q = 1 if cfg.mode == "single" else cfg.q
        ensemble = init_ensemble(cfg.projector_spec(d, m), q, derive_seed(cfg.seed, PROJECTOR))
    params = list(student.params) + (ensemble.params if ensemble else [])
    state = OptimizerState.for_params(params)
    loss_cfg = _loss_config(cfg)

    eval_idx = batch_indices(len(test), min(cfg.eval_batch, len(test)), derive_seed(cfg.seed, EVAL), 0)[0]
    x_eval, y_eval = test.inputs[:, eval_idx], test.labels[eval_idx]
    t_eval, _ = infer(teacher, x_eval)

    records = []
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        lr = lr_at(epoch, cfg)
        ce_sum = align_sum = 0.0
        count = 0
        for idx in batch_indices(len(train), cfg.batch_size, cfg.seed, epoch):
            x, y = train.inputs[:, idx], train.labels[idx]
            t_feat = t_train_feat[:, idx]
            feats, logits = nets.forward(student, x)
            parts = {}
            if cfg.mode == "kd-baseline":
                loss = kd_baseline_loss(logits, t_train_logits[:, idx], y, cfg.kd_temperature, cfg.kd_weight)
                parts["ce"] = softmax_cross_entropy(Tensor(logits.data), y).item()
            else:
                loss = total_loss(logits, y, ensemble, feats, t_feat, loss_cfg, parts=parts)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"distillation loss became {value} in epoch {epoch}", epoch=epoch)
            if "align" not in parts:
                parts["align"] = _detached_alignment(ensemble, feats.data, t_feat)
            for p in params:
                p.grad = None
            loss.backward()
            sgd_step(params, [p.grad for p in params], state, lr, cfg.momentum, cfg.weight_decay)
            n = len(idx)
            ce_sum += parts["ce"] * n
            align_sum += parts["align"] * n
            count += n

        s_eval, _ = infer(student, x_eval)
        rec = MetricsRecord(
            epoch=epoch + 1,
            lce=ce_sum / count,
            lmda=align_sum / count,
            mda=m_da(s_eval, t_eval) if d == m else float("nan"),
            mbc=_safe_mbc(s_eval, y_eval),
            diversity=projector_diversity(ensemble) if ensemble is not None and ensemble.q > 1 else [],
            train_acc=accuracy(student, train),
            test_acc=accuracy(student, test),
            secs=time.perf_counter() - start,
        )
        records.append(rec)
        log.debug("epoch %d: lce=%.4f lmda=%.4f test_acc=%.4f", rec.epoch, rec.lce, rec.lmda, rec.test_acc)
        if on_epoch is not None:
            on_epoch(rec)

    if nets.to_bytes(teacher) != teacher_bytes:
        raise RuntimeError("teacher parameters changed during distillation")
    student.zero_grad()
    if ensemble is not None:
        ensemble.zero_grad()
    return DistillResult(student, records, ensemble)


def _detached_alignment(ensemble, feats, t_feat):
    # logged value only; never enters the graph
    if ensemble is not None:
        return da_loss(ensemble_forward(_frozen_ensemble(ensemble), feats), t_feat).item()
    if feats.shape == t_feat.shape:
        return da_loss(feats, t_feat).item()
    return float("nan")


def _frozen_ensemble(ensemble):
    members = [Projector(p.spec, [Tensor(w.data) for w in p.weights]) for p in ensemble.members]
    return ProjectorEnsemble(ensemble.spec, members)


def _safe_mbc(s, labels):
    if np.unique(labels).size < 2:
        return float("nan")
    return m_bc(s, labels)
