"""Decoding math: temperature softmax, nucleus truncation, seeded sampling.

The token distribution is ``p_i = exp(l_i / t) / sum_j exp(l_j / t)`` over
unnormalized scores ``l`` at temperature ``t``; higher temperatures flatten
the distribution toward less probable tokens. Nucleus (top-p) filtering keeps
the minimal highest-probability prefix whose cumulative mass reaches ``p``
and renormalizes it.

Randomness is SplitMix64, chosen because it is a dozen lines, trivially
portable across languages, and makes fixtures bit-reproducible everywhere.
State is an explicit value passed in and returned, never hidden global state;
independent streams for parallel work are derived as ``seed ^ sample_index``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SamplingParams",
    "tempered_softmax",
    "top_p_filter",
    "sample_token",
    "splitmix64_next",
    "next_unit",
    "shuffled",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

# cumulative mass within this of p counts as having reached it, so grid-valued
# distributions (0.5 + 0.3 reaching p = 0.8) are not betrayed by float dust
_BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class SamplingParams:
    """Decoding knobs plus the stream seed, carried into provenance."""

    temperature: float
    top_p: float
    max_tokens: int
    seed: int

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def tempered_softmax(logits, temperature: float) -> np.ndarray:
    """Temperature softmax with max-subtraction for numerical stability.

    The subtraction is a shift by ``max(l / t)``, which cancels exactly, so
    the result is the plain formula evaluated stably. Output sums to 1 within
    1e-12.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    if scaled.ndim != 1 or scaled.size < 1:
        raise ValueError("logits must be a non-empty 1-d vector")
    if not np.all(np.isfinite(scaled)):
        raise ValueError("logits must be finite")
    shifted = scaled - scaled.max()
    expd = np.exp(shifted)
    return expd / expd.sum()


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("probabilities must be a non-empty 1-d vector")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


def top_p_filter(probs, p: float) -> np.ndarray:
    """Keep the minimal top-probability prefix with cumulative mass >= p.

    Ties are broken by ascending token index, kept entries are renormalized
    to sum 1, and original index positions are preserved. ``p = 1.0`` keeps
    everything.
    """
    if not 0 < p <= 1:
        raise ValueError(f"top_p must be in (0, 1], got {p}")
    vec = _check_probs(probs)
    order = np.argsort(-vec, kind="stable")  # descending, ties by ascending index
    cumulative = np.cumsum(vec[order])
    keep = int(np.searchsorted(cumulative, p - _BOUNDARY_EPS, side="left")) + 1
    if keep >= vec.size:
        return vec.copy()
    out = np.zeros_like(vec)
    kept = order[:keep]
    out[kept] = vec[kept] / vec[kept].sum()
    return out


def splitmix64_next(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (output, next state)."""
    state = (state + _GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z, state


def next_unit(state: int) -> tuple[float, int]:
    """Uniform float in [0, 1) from the top 53 bits of one SplitMix64 output."""
    z, state = splitmix64_next(state)
    return (z >> 11) / float(1 << 53), state


def sample_token(probs, rng_state: int) -> tuple[int, int]:
    """Inverse-CDF draw: smallest index whose cumulative probability exceeds u.

    Fully deterministic given the state; the advanced state is returned for
    the next draw.
    """
    vec = _check_probs(probs)
    u, rng_state = next_unit(rng_state)
    cumulative = np.cumsum(vec)
    index = int(np.searchsorted(cumulative, u, side="right"))
    if index >= vec.size:  # float dust at the top of the CDF
        index = int(np.max(np.nonzero(vec)[0]))
    return index, rng_state


def shuffled(items, seed: int) -> list:
    """Fisher-Yates shuffle driven by the pinned generator."""
    out = list(items)
    state = seed & _MASK64
    for i in range(len(out) - 1, 0, -1):
        u, state = next_unit(state)
        j = int(u * (i + 1))
        out[i], out[j] = out[j], out[i]
    return out
