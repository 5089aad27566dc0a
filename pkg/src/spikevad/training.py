"""Weakly supervised multiple-instance training of the MSF head.

Each video is a bag of clips with a single video-level label. The loss
combines top-k binary cross-entropy over a bag's highest scores with a
variance penalty on normal videos' clip scores.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import MsfParams, msf_forward
from .snn import autodiff as ad
from .snn.autodiff import Tape, Var

log = logging.getLogger(__name__)

SCORE_EPS = 1e-7
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingError(ValueError):
    pass


@dataclass
class VideoBag:
    features: np.ndarray  # [T_sim, t, D]
    label: int
    video_id: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3:
            raise ValueError(f"features must be [T_sim, t, D], got {self.features.shape}")

    @property
    def t_i(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    k: int = 4
    lam: float = field(default=20.0, metadata={"key": "lambda"})
    lr: float = 1e-4
    weight_decay: float = 5e-4
    batch: int = 60
    epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.batch < 2 or self.batch % 2:
            raise ValueError("batch must be a positive even number")
        if self.lr < 0 or self.weight_decay < 0 or self.epochs < 0:
            raise ValueError("lr, weight_decay and epochs must be non-negative")


# -- losses ------------------------------------------------------------------

def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ValueError("empty score vector")
    if k < 1:
        raise ValueError("k must be >= 1")
    # stable sort on the negated scores keeps lower clip indices first on ties
    return np.argsort(-scores, kind="stable")[: min(k, scores.size)]


def topk_scores(scores, k: int):
    """The ``min(k, t)`` largest scores, ties resolved by clip index."""
    if isinstance(scores, Var):
        return ad.take(scores, topk_indices(scores.value, k))
    scores = np.asarray(scores, dtype=np.float64).ravel()
    return scores[topk_indices(scores, k)]


def _dmil(selected: Var, y: int) -> Var:
    s = ad.clip(selected, SCORE_EPS, 1.0 - SCORE_EPS)
    # the target-side log is the only term that survives for y in {0, 1}
    term = ad.log(s) if y == 1 else ad.log(1.0 - s)
    return -ad.mean(term)


def _center(scores: Var, y: int) -> Var | None:
    if y == 1:
        return None
    dev = scores - ad.mean(scores)
    return ad.mean(dev * dev)


def dmil_loss(selected, y: int):
    """Mean binary cross-entropy of the selected scores against label ``y``."""
    if y not in (0, 1):
        raise ValueError("label must be 0 or 1")
    if isinstance(selected, Var):
        return _dmil(selected, y)
    arr = np.asarray(selected, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("no scores selected")
    return float(_dmil(ad.as_var(arr), y).value)


def center_loss(scores, y: int):
    """Population variance of a normal video's clip scores; 0 for abnormal videos."""
    if y not in (0, 1):
        raise ValueError("label must be 0 or 1")
    if isinstance(scores, Var):
        out = _center(scores, y)
        return out if out is not None else 0.0
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("empty score vector")
    out = _center(ad.as_var(arr), y)
    return 0.0 if out is None else float(out.value)


@dataclass
class LossTerms:
    total: Var
    dmil: float
    center: float


def bag_losses(scores: Var, y: int, k: int) -> tuple[Var, Var | None]:
    return _dmil(topk_scores(scores, k), y), _center(scores, y)


def total_loss(batch: list[VideoBag], params: MsfParams, k: int = 4, lam: float = 20.0,
               tape: Tape | None = None) -> LossTerms:
    """Batch-mean top-k BCE plus ``lam`` times batch-mean center loss."""
    if not batch:
        raise ValueError("empty batch")
    tape = tape if tape is not None else Tape()
    dmil_terms, center_terms = [], []
    for bag in batch:
        scores = msf_forward(bag.features, params, tape)
        d, c = bag_losses(scores, bag.label, k)
        dmil_terms.append(d)
        if c is not None:
            center_terms.append(c)
    n = len(batch)
    dmil = ad.mul(_sum_vars(dmil_terms), 1.0 / n)
    total = dmil
    center_value = 0.0
    if center_terms:
        center = ad.mul(_sum_vars(center_terms), 1.0 / n)
        center_value = float(center.value)
        if lam:
            total = total + center * lam
    return LossTerms(total, float(dmil.value), center_value)


def _sum_vars(vs: list[Var]) -> Var:
    acc = vs[0]
    for v in vs[1:]:
        acc = acc + v
    return acc


# -- optimiser ---------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(weights: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, weight_decay: float = 0.0):
    """Adam with L2 weight decay folded into the gradient.

    Returns new weight arrays and the advanced state; inputs are untouched.
    """
    b1, b2 = ADAM_BETAS
    t = state.step + 1
    new_w, new_m, new_v = {}, {}, {}
    for name, w in weights.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != weight shape {w.shape}")
        g = g + weight_decay * w
        m = b1 * state.m.get(name, 0.0) + (1 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_w[name] = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    return new_w, AdamState(t, new_m, new_v)


# -- epoch loop --------------------------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    loss_dmil: float
    loss_center: float
    loss_total: float
    batches: int


class BalancedSampler:
    """Draws class-balanced batches without replacement within each class.

    A class whose pool runs dry is reshuffled, so the smaller class repeats
    within an epoch while the larger one is visited exactly once.
    """

    def __init__(self, labels, batch: int, rng: np.random.Generator):
        labels = np.asarray(labels)
        self.normal = np.flatnonzero(labels == 0)
        self.abnormal = np.flatnonzero(labels == 1)
        if not len(self.normal) or not len(self.abnormal):
            raise TrainingError("corpus must contain both normal and abnormal videos")
        self.half = min(batch // 2, len(self.normal), len(self.abnormal))
        self.rng = rng
        self._pools = {0: [], 1: []}

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(max(len(self.normal), len(self.abnormal)) / self.half)

    def _draw(self, label: int) -> list[int]:
        members = self.normal if label == 0 else self.abnormal
        pool = self._pools[label]
        out = []
        while len(out) < self.half:
            if not pool:
                pool.extend(self.rng.permutation(members).tolist())
            out.append(pool.pop())
        return out

    def epoch(self):
        for _ in range(self.batches_per_epoch):
            yield self._draw(0) + self._draw(1)


def train_epoch(corpus: list[VideoBag], params: MsfParams, config: TrainConfig,
                rng: np.random.Generator, state: AdamState | None = None,
                sampler: BalancedSampler | None = None, epoch: int = 1):
    """One pass of balanced batches; returns ``(params, metrics, adam_state)``."""
    sampler = sampler or BalancedSampler([b.label for b in corpus], config.batch, rng)
    state = state or AdamState()
    sums = np.zeros(3)
    n = 0
    for idx in sampler.epoch():
        tape = Tape()
        terms = total_loss([corpus[i] for i in idx], params, config.k, config.lam, tape)
        grads = ad.backward(tape, terms.total)
        weights, state = adam_step(params.weights, grads, state, config.lr,
                                   config.weight_decay)
        params = MsfParams(params.config, weights)
        sums += (terms.dmil, terms.center, float(terms.total.value))
        n += 1
    means = sums / n
    return params, EpochMetrics(epoch, *means.tolist(), n), state


def train(corpus: list[VideoBag], params: MsfParams, config: TrainConfig,
          callback=None) -> tuple[MsfParams, list[EpochMetrics]]:
    """Run ``config.epochs`` epochs from a generator seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    sampler = BalancedSampler([b.label for b in corpus], config.batch, rng)
    state = AdamState()
    history = []
    for epoch in range(1, config.epochs + 1):
        params, metrics, state = train_epoch(corpus, params, config, rng, state,
                                             sampler, epoch)
        history.append(metrics)
        log.debug("epoch %d loss %.5f", epoch, metrics.loss_total)
        if callback is not None:
            callback(params, metrics)
    return params, history
