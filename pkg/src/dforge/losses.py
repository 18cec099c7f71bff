"""Training objectives: direction alignment, its ensemble form, the combined
cross-entropy objective and a temperature-scaled logit KD baseline."""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax as _np_log_softmax
from scipy.special import xlogy

from .errors import ConfigError, DimensionError
from .projector import ensemble_forward
from .tensor import (
    EPS,
    Tensor,
    as_tensor,
    l2_normalize_columns,
    log_softmax,
    mean,
    mul,
    softmax_cross_entropy,
    tsum,
)


@dataclass(frozen=True)
class DistillLossConfig:
    alpha: float = 25.0
    eps: float = EPS
    kd_temperature: float = None
    kd_weight: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.kd_temperature is not None and self.kd_temperature <= 0:
            raise ConfigError(f"KD temperature must be > 0, got {self.kd_temperature}")
        if not 0.0 <= self.kd_weight <= 1.0:
            raise ConfigError(f"KD weight must lie in [0, 1], got {self.kd_weight}")

    @property
    def kd_enabled(self):
        return self.kd_temperature is not None and self.kd_weight > 0


def _frozen(t):
    # teacher side never joins the graph
    return t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)


def _unit_teacher(t, eps):
    norms = np.sqrt((t * t).sum(axis=0, keepdims=True))
    return t / np.maximum(norms, eps)


def _check_pair(g, t):
    if g.data.ndim != 2 or g.shape != t.shape:
        raise DimensionError(f"feature shapes {g.shape} and {t.shape} must match")


def da_loss(g, t, eps=EPS):
    """One minus the batch-mean cosine between columns of ``g`` and ``t``.

    Gradients flow into ``g`` only. A zero column has cosine 0.
    """
    g = as_tensor(g)
    t = _frozen(t)
    _check_pair(g, t)
    cos = tsum(mul(l2_normalize_columns(g, eps), Tensor(_unit_teacher(t, eps))), axis=0)
    return 1.0 - mean(cos)


def da_loss_l2_form(g, t, eps=EPS):
    """Half the batch-mean squared distance between unit-normalised columns."""
    g = as_tensor(g)
    t = _frozen(t)
    _check_pair(g, t)
    diff = l2_normalize_columns(g, eps) - Tensor(_unit_teacher(t, eps))
    return mul(tsum(mul(diff, diff)), 0.5 / g.shape[1])


def mda_loss(e, s, t, eps=EPS):
    """Direction alignment of the ensemble-averaged projection against ``t``."""
    return da_loss(ensemble_forward(e, s), t, eps)


def kd_baseline_loss(student_logits, teacher_logits, labels, tau, weight):
    """``(1 - weight) * CE + weight * tau**2 * KL(p_teacher || p_student)``
    with both distributions softened by ``tau``; batch mean."""
    if tau <= 0:
        raise ConfigError(f"KD temperature must be > 0, got {tau}")
    student_logits = as_tensor(student_logits)
    t = _frozen(teacher_logits)
    if t.shape != student_logits.shape:
        raise DimensionError(f"logit shapes {student_logits.shape} and {t.shape} must match")
    ce = softmax_cross_entropy(student_logits, labels)
    if weight == 0:
        return ce
    b = t.shape[1]
    log_pt = _np_log_softmax(t / tau, axis=0)
    pt = np.exp(log_pt)
    entropy_term = float(xlogy(pt, pt).sum()) / b
    cross = mul(tsum(mul(Tensor(pt), log_softmax(mul(student_logits, 1.0 / tau)))), 1.0 / b)
    kl = entropy_term - cross
    return mul(ce, 1.0 - weight) + mul(kl, weight * tau * tau)


def total_loss(logits, labels, e, s, t, cfg=DistillLossConfig(), teacher_logits=None, parts=None):
    """Cross-entropy plus ``alpha`` times the alignment loss.

    With ``e=None`` the alignment is taken on raw student features (needs
    equal dims). The alignment term is skipped entirely when ``alpha == 0``.
    When KD is enabled in ``cfg`` the softened KL term is added with weight
    ``kd_weight``. If ``parts`` is a dict it receives the component values.
    """
    ce = softmax_cross_entropy(logits, labels)
    loss = ce
    if parts is not None:
        parts["ce"] = ce.item()
    if cfg.alpha != 0:
        align = da_loss(s, t, cfg.eps) if e is None else mda_loss(e, s, t, cfg.eps)
        loss = loss + mul(align, cfg.alpha)
        if parts is not None:
            parts["align"] = align.item()
    if cfg.kd_enabled:
        if teacher_logits is None:
            raise ConfigError("KD term enabled but no teacher logits were given")
        kd = kd_baseline_loss(logits, teacher_logits, labels, cfg.kd_temperature, 1.0)
        loss = loss + mul(kd, cfg.kd_weight)
        if parts is not None:
            parts["kd"] = kd.item()
    return loss
