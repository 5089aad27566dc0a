"""Leaky integrate-and-fire dynamics and the sigmoid surrogate derivative.

One step charges ``u' = tau * u + I``, fires ``o = [u' >= v_th]`` and hard
resets ``u'' = u' * (1 - o)``. The backward pass replaces the Heaviside
derivative by the derivative of ``sigmoid(beta * x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TAU = 0.625
DEFAULT_V_TH = 1.0
DEFAULT_BETA = 4.0


@dataclass(frozen=True)
class LifState:
    u: np.ndarray
    tau: float = DEFAULT_TAU
    v_th: float = DEFAULT_V_TH

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        object.__setattr__(self, "u", np.asarray(self.u, dtype=np.float64))

    @classmethod
    def zeros(cls, shape, tau: float = DEFAULT_TAU, v_th: float = DEFAULT_V_TH):
        return cls(np.zeros(shape), tau, v_th)


def lif_step(state: LifState, input_current) -> tuple[np.ndarray, LifState]:
    """Advance one simulation step; returns ``(spikes, new_state)``."""
    current = np.asarray(input_current, dtype=np.float64)
    if current.shape != state.u.shape:
        raise ValueError(f"input shape {current.shape} != state shape {state.u.shape}")
    charged = state.tau * state.u + current
    spikes = (charged >= state.v_th).astype(np.float64)
    return spikes, LifState(charged * (1.0 - spikes), state.tau, state.v_th)


def lif_sequence(inputs, tau: float = DEFAULT_TAU,
                 v_th: float = DEFAULT_V_TH) -> np.ndarray:
    """Run LIF neurons over axis 0 of ``inputs`` starting from rest."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 0 or inputs.shape[0] < 1:
        raise ValueError("inputs need at least one simulation step")
    state = LifState.zeros(inputs.shape[1:], tau, v_th)
    out = np.empty_like(inputs)
    for s in range(inputs.shape[0]):
        out[s], state = lif_step(state, inputs[s])
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def surrogate_grad(x, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Derivative of ``sigmoid(beta * x)``: ``beta * s * (1 - s)``."""
    s = sigmoid(beta * np.asarray(x, dtype=np.float64))
    return beta * s * (1.0 - s)


def lif_forward_trace(inputs: np.ndarray, tau: float, v_th: float,
                      beta: float, smooth: bool = False):
    """LIF over axis 0 keeping pre-reset potentials for the backward pass.

    With ``smooth=True`` the emitted spikes are ``sigmoid(beta * (u' - v_th))``
    instead of the Heaviside step; the reset still uses the hard step.
    """
    u = np.zeros(inputs.shape[1:])
    charged = np.empty_like(inputs)
    hard = np.empty_like(inputs)
    for s in range(inputs.shape[0]):
        c = tau * u + inputs[s]
        o = (c >= v_th).astype(np.float64)
        charged[s] = c
        hard[s] = o
        u = c * (1.0 - o)
    spikes = sigmoid(beta * (charged - v_th)) if smooth else hard
    return spikes, charged, hard


def lif_backward(g_spikes: np.ndarray, charged: np.ndarray, hard: np.ndarray,
                 tau: float, v_th: float, beta: float) -> np.ndarray:
    """BPTT through a LIF layer with the reset factor held constant."""
    g_in = np.empty_like(g_spikes)
    g_u = np.zeros(g_spikes.shape[1:])
    for s in range(g_spikes.shape[0] - 1, -1, -1):
        g_c = g_spikes[s] * surrogate_grad(charged[s] - v_th, beta) + g_u * (1.0 - hard[s])
        g_in[s] = g_c
        g_u = tau * g_c
    return g_in
