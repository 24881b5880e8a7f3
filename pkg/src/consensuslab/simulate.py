"""Monte Carlo trajectory engine: a statistical oracle for stationary
weights and return times.

Randomness comes from numpy's counter-based Philox generator keyed by
(seed, sample index), so every sample owns an independent substream and
results are bit-identical whether samples run serially, in parallel, or
in chunks (see ``first_sample``).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

STEP_CAP = 10 ** 9
_URAND_CHUNK = 128


class StepCapExceededError(RuntimeError):
    """A trajectory exceeded the per-sample step budget (signals
    near-reducibility of the chain)."""

    def __init__(self, sample_index, cap):
        self.sample_index = sample_index
        self.cap = cap
        super().__init__(f"sample {sample_index} exceeded the step cap {cap}")


@dataclass
class SimResult:
    """Estimate with its standard error, reproducible from (inputs, seed)."""

    estimate: float
    standard_error: float
    samples: int
    seed: int


def _substream(seed, sample_index):
    return np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1),
                                                      sample_index]))


class _RowSampler:
    """Inverse-CDF next-state sampling over the short sorted rows.

    Deterministic rows consume no randomness; stochastic rows consume one
    uniform each step, drawn from a per-sample buffered substream.
    """

    def __init__(self, matrix):
        self.targets = []
        self.cums = []
        for i in range(matrix.n):
            idx, val = matrix.row(i)
            self.targets.append([int(j) for j in idx])
            acc = []
            total = 0.0
            for p in val:
                total += float(p)
                acc.append(total)
            self.cums.append(acc)

    def walk_until(self, start, stop_state, rng, cap, min_steps=1):
        """Steps taken from ``start`` until first reaching ``stop_state``
        (counting at least ``min_steps``); raises past the step cap."""
        targets = self.targets
        cums = self.cums
        buf = ()
        pos = 0
        state = start
        steps = 0
        while True:
            t = targets[state]
            if len(t) == 1:
                state = t[0]
            else:
                if pos >= len(buf):
                    buf = rng.random(_URAND_CHUNK)
                    pos = 0
                u = buf[pos]
                pos += 1
                c = cums[state]
                k = bisect_right(c, u * c[-1])
                if k >= len(t):
                    k = len(t) - 1
                state = t[k]
            steps += 1
            if state == stop_state and steps >= min_steps:
                return steps
            if steps >= cap:
                raise StepCapExceededError(sample_index=None, cap=cap)

    def trajectory_counts(self, start, steps, burn_in, rng, n):
        """Occupation counts of states visited at times burn_in..steps-1."""
        targets = self.targets
        cums = self.cums
        counts = np.zeros(n, dtype=np.int64)
        buf = ()
        pos = 0
        state = start
        for t in range(steps):
            if t >= burn_in:
                counts[state] += 1
            row_targets = targets[state]
            if len(row_targets) == 1:
                state = row_targets[0]
            else:
                if pos >= len(buf):
                    buf = rng.random(_URAND_CHUNK)
                    pos = 0
                u = buf[pos]
                pos += 1
                c = cums[state]
                k = bisect_right(c, u * c[-1])
                if k >= len(row_targets):
                    k = len(row_targets) - 1
                state = row_targets[k]
        return counts


def return_time_samples(matrix, state, samples, seed, step_cap=STEP_CAP,
                        first_sample=0):
    """Independent first-return-time realizations starting at ``state``.

    Sample k uses the substream keyed by (seed, first_sample + k), so
    chunked or parallel runs concatenate to exactly the serial result.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    state = int(state)
    if not 0 <= state < matrix.n:
        raise ValueError("state out of range")
    sampler = _RowSampler(matrix)
    out = np.empty(samples, dtype=np.float64)
    for k in range(samples):
        rng = _substream(seed, first_sample + k)
        try:
            out[k] = sampler.walk_until(state, state, rng, step_cap)
        except StepCapExceededError:
            raise StepCapExceededError(first_sample + k, step_cap) from None
    return out


def simulate_return_time(matrix, state, samples, seed, step_cap=STEP_CAP):
    """Mean and standard error of the first return time to ``state``."""
    values = return_time_samples(matrix, state, samples, seed, step_cap=step_cap)
    mean = float(values.mean())
    if samples > 1:
        se = float(values.std(ddof=1) / math.sqrt(samples))
    else:
        se = 0.0
    return SimResult(estimate=mean, standard_error=se, samples=int(samples),
                     seed=int(seed))


def estimate_stationary_occupation(matrix, steps, burn_in, seed, start=0):
    """Empirical occupation frequencies of one long trajectory.

    Counts the states visited at times burn_in..steps-1 from the given
    start.  Returns the frequency vector (a probability vector by
    construction: counts over their total).
    """
    from .matrix import ProbabilityVector

    steps, burn_in = int(steps), int(burn_in)
    if burn_in < 0 or steps <= burn_in:
        raise ValueError("need steps > burn_in >= 0")
    start = int(start)
    if not 0 <= start < matrix.n:
        raise ValueError("start state out of range")
    sampler = _RowSampler(matrix)
    rng = _substream(seed, 0)
    counts = sampler.trajectory_counts(start, steps, burn_in, rng, matrix.n)
    total = steps - burn_in
    return ProbabilityVector(counts / total)
