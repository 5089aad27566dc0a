"""Multi-scale spiking fusion head and anomaly scorer.

Clip features are shaped ``[T_sim, t, D]``: simulation steps, clips,
channels. Local and global branches convolve or mix along the clip axis
independently at each step, LIF neurons integrate along the step axis,
and the temporal interaction recurrence also runs along the step axis.

All forward functions accept arrays or tape variables and return
:class:`~spikevad.snn.Var`; read ``.value`` for the plain array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .snn import autodiff as ad
from .snn.autodiff import Tape, Var
from .snn.neurons import DEFAULT_BETA, DEFAULT_TAU, DEFAULT_V_TH

LSF_LEVELS = ("lsf_p1", "lsf_p2", "lsf_p3")
PARAM_NAMES = (*LSF_LEVELS, "gsf_reduce", "gsf_w", "tim_kernel", "scorer_w", "scorer_b")


@dataclass(frozen=True)
class MsfConfig:
    D: int = 16
    T_sim: int = 4
    omega: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    alpha: float = 0.6
    sigma: float = 1.0
    tau: float = DEFAULT_TAU
    v_th: float = DEFAULT_V_TH
    beta: float = DEFAULT_BETA
    tim_omega: int = 3
    # ablation switches; a disabled branch passes its share of input channels through
    use_lsf: bool = True
    use_gsf: bool = True
    use_tim: bool = True

    def __post_init__(self):
        if self.D < 4 or self.D % 4:
            raise ValueError(f"D must be a positive multiple of 4, got {self.D}")
        if self.T_sim < 1:
            raise ValueError("T_sim must be >= 1")
        if self.omega % 2 == 0 or self.tim_omega % 2 == 0:
            raise ValueError("kernel widths must be odd")
        if len(self.dilations) != len(LSF_LEVELS) or min(self.dilations) < 1:
            raise ValueError("need three positive dilations")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.v_th <= 0 or self.beta <= 0:
            raise ValueError("v_th and beta must be positive")

    @property
    def quarter(self) -> int:
        return self.D // 4

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        q, D = self.quarter, self.D
        shapes = {name: (q, D, self.omega) for name in LSF_LEVELS}
        shapes.update(gsf_reduce=(q, D), gsf_w=(q, q), tim_kernel=(D, self.tim_omega),
                      scorer_w=(1, D), scorer_b=(1,))
        return shapes


@dataclass
class MsfParams:
    config: MsfConfig
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.config.param_shapes()
        if set(self.weights) != set(expected):
            missing = sorted(set(expected) - set(self.weights))
            extra = sorted(set(self.weights) - set(expected))
            raise ValueError(f"parameter names mismatch (missing {missing}, extra {extra})")
        for name, shape in expected.items():
            w = np.asarray(self.weights[name], dtype=np.float64)
            if w.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {w.shape}")
            self.weights[name] = w

    def bind(self, tape: Tape) -> dict[str, Var]:
        """Register every weight on ``tape`` (once) and return the variables."""
        bound = {}
        for name, w in self.weights.items():
            var = tape.params.get(name)
            if var is None:
                var = tape.param(name, w)
            elif var.value is not w:
                raise ad.TapeError(f"tape already holds a different {name!r}")
            bound[name] = var
        return bound

    def copy(self) -> "MsfParams":
        return MsfParams(self.config, {k: v.copy() for k, v in self.weights.items()})


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: MsfConfig, rng: np.random.Generator | int = 0) -> MsfParams:
    rng = np.random.default_rng(rng)
    shapes = config.param_shapes()
    weights = {}
    for name in LSF_LEVELS:
        weights[name] = kaiming_uniform(rng, shapes[name], config.D * config.omega)
    weights["gsf_reduce"] = kaiming_uniform(rng, shapes["gsf_reduce"], config.D)
    weights["gsf_w"] = kaiming_uniform(rng, shapes["gsf_w"], config.quarter)
    tim = np.zeros(shapes["tim_kernel"])
    tim[:, config.tim_omega // 2] = 1.0
    weights["tim_kernel"] = tim
    weights["scorer_w"] = kaiming_uniform(rng, shapes["scorer_w"], config.D)
    weights["scorer_b"] = np.zeros(1)
    return MsfParams(config, weights)


def _prepare(F, params: MsfParams, tape: Tape | None):
    tape = tape if tape is not None else (F.tape if isinstance(F, Var) else Tape())
    return ad.as_var(F, tape), params.bind(tape), params.config


def _check_features(F: Var, cfg: MsfConfig) -> None:
    if F.value.ndim != 3:
        raise ValueError(f"features must be [T_sim, t, D], got {F.value.shape}")
    T, t, D = F.value.shape
    if D != cfg.D:
        raise ValueError(f"features have D={D}, model expects D={cfg.D}")
    if T < 1 or t < 1:
        raise ValueError("features need T_sim >= 1 and t >= 1")


# -- adjacency ---------------------------------------------------------------

def build_similarity_adjacency(Fc) -> np.ndarray:
    """Pairwise cosine similarity of clip rows; zero rows get similarity 0."""
    return ad.cosine_similarity(ad.as_var(Fc)).value


def build_distance_adjacency(t: int, sigma: float = 1.0) -> np.ndarray:
    """``M[i, j] = -|i - j| / sigma``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    idx = np.arange(t)
    return -np.abs(idx[:, None] - idx[None, :]) / sigma


def row_softmax(m: np.ndarray) -> np.ndarray:
    return ad.softmax(ad.as_var(m), axis=-1).value


# -- branches ----------------------------------------------------------------

def _lsf(F: Var, w: dict[str, Var], cfg: MsfConfig) -> Var:
    levels = []
    for name, dilation in zip(LSF_LEVELS, cfg.dilations):
        current = ad.dilated_conv1d(F, w[name], dilation)
        levels.append(ad.lif(current, cfg.tau, cfg.v_th, cfg.beta))
    return ad.concat(levels, axis=-1)


def _gsf(F: Var, w: dict[str, Var], cfg: MsfConfig) -> Var:
    t = F.value.shape[1]
    reduced = F @ ad.transpose(w["gsf_reduce"])                 # [T, t, D/4]
    a_sim = ad.softmax(ad.cosine_similarity(reduced), axis=-1)  # [T, t, t]
    a_dis = row_softmax(build_distance_adjacency(t, cfg.sigma))
    mapped = reduced @ w["gsf_w"]
    mixed = (a_sim @ mapped + a_dis @ mapped) * 0.5
    return ad.lif(mixed, cfg.tau, cfg.v_th, cfg.beta)


def _tim(Fbar: Var, w: dict[str, Var], alpha: float) -> Var:
    states = [Fbar[0] * (1.0 - alpha)]
    for s in range(1, Fbar.value.shape[0]):
        current = Fbar[s] * (1.0 - alpha)
        if alpha == 0.0:
            states.append(current)
            continue
        history = ad.depthwise_conv1d(states[-1], w["tim_kernel"])
        states.append(history * alpha + current)
    return ad.stack(states, axis=0)


def _score(Ftim: Var, w: dict[str, Var]) -> Var:
    rate = ad.mean(Ftim, axis=0)                                # [t, D]
    logits = rate @ ad.transpose(w["scorer_w"]) + w["scorer_b"]  # [t, 1]
    return ad.sigmoid(ad.reshape(logits, (logits.value.shape[0],)))


def lsf_forward(F, params: MsfParams, tape: Tape | None = None) -> Var:
    """Pyramidal dilated convolutions + LIF; ``[T, t, D] -> [T, t, 3D/4]`` spikes."""
    F, w, cfg = _prepare(F, params, tape)
    _check_features(F, cfg)
    return _lsf(F, w, cfg)


def gsf_forward(F, params: MsfParams, tape: Tape | None = None) -> Var:
    """Two-branch spiking graph convolution over clips; ``[T, t, D] -> [T, t, D/4]``.

    Both branches share one weight and are averaged before the LIF layer.
    """
    F, w, cfg = _prepare(F, params, tape)
    _check_features(F, cfg)
    return _gsf(F, w, cfg)


def msf_concat(Fp, Fg, D: int | None = None) -> Var:
    """Concatenate local (P1..P3) and global (G) blocks along channels."""
    tape = Fp.tape if isinstance(Fp, Var) else Fg.tape if isinstance(Fg, Var) else None
    Fp, Fg = ad.as_var(Fp, tape), ad.as_var(Fg, tape)
    if Fp.value.shape[:2] != Fg.value.shape[:2]:
        raise ValueError(f"step/clip axes differ: {Fp.value.shape} vs {Fg.value.shape}")
    width = Fp.value.shape[-1] + Fg.value.shape[-1]
    if D is not None and (width != D or Fg.value.shape[-1] * 4 != D):
        raise ValueError(f"blocks of width {Fp.value.shape[-1]}+{Fg.value.shape[-1]} "
                         f"do not form D={D}")
    return ad.concat([Fp, Fg], axis=-1)


def tim_forward(Fbar, params: MsfParams, tape: Tape | None = None,
                alpha: float | None = None) -> Var:
    """Temporal interaction recurrence along the simulation-step axis."""
    Fbar, w, cfg = _prepare(Fbar, params, tape)
    return _tim(Fbar, w, cfg.alpha if alpha is None else alpha)


def score(Ftim, params: MsfParams, tape: Tape | None = None) -> Var:
    Ftim, w, _ = _prepare(Ftim, params, tape)
    return _score(Ftim, w)


def msf_forward(F, params: MsfParams, tape: Tape | None = None) -> Var:
    """Per-clip anomaly scores in (0, 1) for one video."""
    F, w, cfg = _prepare(F, params, tape)
    _check_features(F, cfg)
    split = 3 * cfg.quarter
    local = _lsf(F, w, cfg) if cfg.use_lsf else ad.take(F, (Ellipsis, slice(0, split)))
    glob = _gsf(F, w, cfg) if cfg.use_gsf else ad.take(F, (Ellipsis, slice(split, None)))
    fused = ad.concat([local, glob], axis=-1)
    alpha = cfg.alpha if cfg.use_tim else 0.0
    return _score(_tim(fused, w, alpha), w)


def predict(F, params: MsfParams) -> np.ndarray:
    return msf_forward(np.asarray(F, dtype=np.float64), params).value
