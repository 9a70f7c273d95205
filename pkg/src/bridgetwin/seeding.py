"""Deterministic seed derivation and random streams.

Every stochastic component in the package draws from a SplitMix64 stream whose
seed is derived from a master seed plus context labels (replicate index,
parameter name, frame index, tree index).  Independent contexts get
independent streams, so parallel and serial execution produce bit-identical
results regardless of scheduling.
"""

from __future__ import annotations

import hashlib
import math
from statistics import NormalDist

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STD_NORMAL = NormalDist()


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _M64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _M64
    return z ^ (z >> 31)


def _label_to_int(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def derive_seed(*parts: int | str) -> int:
    """Combine integers and string labels into a 64-bit stream seed.

    String labels are hashed with BLAKE2b so the derivation is stable across
    processes and Python hash randomization.
    """
    state = 0
    for part in parts:
        value = _label_to_int(part) if isinstance(part, str) else part & _M64
        state = _mix((state + _GOLDEN) & _M64 ^ value)
    return state


class RandomStream:
    """SplitMix64 generator with the inverse-CDF samplers the pipeline needs."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _M64
        return _mix(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53-bit mantissa, shifted half a step into the open interval (lo, hi).
        u = ((self.next_u64() >> 11) + 0.5) / (1 << 53)
        return lo + (hi - lo) * u

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        return mu + sigma * _STD_NORMAL.inv_cdf(self.uniform())

    def lognormal(self, mu_log: float, sigma_log: float) -> float:
        return math.exp(self.normal(mu_log, sigma_log))

    def poisson(self, lam: float) -> int:
        """Inverse-CDF Poisson draw; one uniform consumed per call.

        For a fixed uniform the quantile is non-decreasing in ``lam``, which
        keeps counts coupled monotonically when a demand scale is swept.
        """
        if lam < 0:
            raise ValueError(f"Poisson rate must be >= 0, got {lam}")
        if lam == 0:
            self.next_u64()
            return 0
        u = self.uniform()
        k = 0
        p = math.exp(-lam)
        cdf = p
        while u > cdf and k < 10_000_000:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.uniform() * n), n - 1)

    def choice_weighted(self, cumulative: list[tuple[float, str]]) -> str:
        """Pick a label from (cumulative_weight, label) pairs; weights end at 1."""
        u = self.uniform()
        for bound, label in cumulative:
            if u < bound:
                return label
        return cumulative[-1][1]
