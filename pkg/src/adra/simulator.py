"""Slot-accurate Monte-Carlo simulation of age-dependent random access.

Every frame starts with a fresh update at each device.  In every slot the
devices that still hold their update and whose age has reached the
threshold contend; a slot delivers iff exactly one of them transmits.
Undelivered updates are dropped at the end of the frame.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .analytic import fixed_point_candidates
from .model import AdaptivePolicy, ConfigError, validate_config

DEFAULT_WARMUP_FRAMES = 100
DEFAULT_HORIZON = 10**6
DEFAULT_RUNS = 10


class SizeExceeded(ValueError):
    """The brute-force oracle was asked for an instance too large to enumerate."""


@dataclass(frozen=True)
class SimConfig:
    protocol: object
    horizon_slots: int | None = None
    warmup_slots: int | None = None
    seed: int = 0
    runs: int = DEFAULT_RUNS

    def __post_init__(self):
        # the default horizon is rounded down to whole frames; explicit ones are checked as given
        if self.horizon_slots is None:
            object.__setattr__(self, "horizon_slots", whole_frames(DEFAULT_HORIZON, self.protocol.frame_len))

    @property
    def warmup(self):
        if self.warmup_slots is None:
            return DEFAULT_WARMUP_FRAMES * self.protocol.frame_len
        return self.warmup_slots

    def validate(self):
        validate_config(self.protocol)
        d = self.protocol.frame_len
        issues = []
        if self.horizon_slots < 1 or self.horizon_slots % d:
            issues.append(("horizon_not_whole_frames", f"horizon_slots={self.horizon_slots} must be a positive multiple of {d}"))
        if not 0 <= self.warmup < self.horizon_slots:
            issues.append(("warmup_out_of_range", f"warmup_slots={self.warmup} must lie in [0, horizon_slots)"))
        if not 0 <= self.seed < 2**64:
            issues.append(("seed_out_of_range", "seed must be an unsigned 64-bit integer"))
        if self.runs < 1:
            issues.append(("runs_out_of_range", "runs must be >= 1"))
        if issues:
            raise ConfigError(issues)
        return self


def whole_frames(slots, frame_len):
    """Largest multiple of ``frame_len`` not exceeding ``slots`` (at least one frame)."""
    return max(frame_len, slots - slots % frame_len)


@dataclass(frozen=True)
class SimReport:
    per_run_aoi: tuple
    mean_aoi: float
    std_err: float | None
    success_rate: float


def run_rng(seed, run_index):
    """Independent generator for one replication, a pure function of ``(seed, run_index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(run_index)])))


@numba.njit(cache=True)
def _simulate(n, d, delta, p, n_frames, warmup, rng):
    # p <= 0 selects the adaptive policy
    age = np.zeros(n, dtype=np.int64)
    pending = np.zeros(n, dtype=np.bool_)
    contenders = np.empty(n, dtype=np.int64)
    age_sum = 0
    successes = 0
    counted_frames = 0
    t = 0
    for m in range(n_frames):
        pending[:] = True
        if t >= warmup:
            counted_frames += 1
        for h in range(d):
            if t >= warmup:
                age_sum += age.sum()
            u = 0
            for i in range(n):
                if pending[i] and age[i] >= delta:
                    contenders[u] = i
                    u += 1
            winner = -1
            if u > 0:
                pt = 1.0 / u if p <= 0.0 else p
                sent = 0
                for j in range(u):
                    if rng.random() < pt:
                        sent += 1
                        winner = contenders[j]
                if sent != 1:
                    winner = -1
            for i in range(n):
                age[i] += 1
            if winner >= 0:
                age[winner] = h + 1
                pending[winner] = False
                if t >= warmup:
                    successes += 1
            t += 1
    return age_sum, successes, counted_frames


def _simulate_reference(n, d, delta, p, n_frames, warmup, rng):
    """Plain-Python twin of the compiled kernel, consuming the RNG identically.

    Asserts the age recursion and the access rules at every slot.
    """
    age = [0] * n
    age_sum = successes = counted_frames = 0
    t = 0
    for m in range(n_frames):
        pending = [True] * n
        if t >= warmup:
            counted_frames += 1
        for h in range(d):
            if t >= warmup:
                age_sum += sum(age)
            contenders = [i for i in range(n) if pending[i] and age[i] >= delta]
            u = len(contenders)
            sent = []
            if u:
                pt = 1.0 / u if p <= 0.0 else p
                sent = [i for i in contenders if rng.random() < pt]
            assert all(age[i] >= delta and pending[i] for i in sent)
            if u == 1 and p <= 0.0:
                assert sent == contenders
            before = list(age)
            winner = sent[0] if len(sent) == 1 else -1
            age = [a + 1 for a in age]
            if winner >= 0:
                age[winner] = t + 1 - m * d
                assert age[winner] == h + 1
                pending[winner] = False
                if t >= warmup:
                    successes += 1
            assert all(age[i] == before[i] + 1 for i in range(n) if i != winner)
            t += 1
    return age_sum, successes, counted_frames


def run_once(config, run_index=0, check=False):
    """Time-average network-wide AoI of one replication.

    ``check`` runs the slow reference loop that asserts every per-slot rule;
    it consumes the same random stream and returns the same value.
    """
    config.validate()
    proto = config.protocol
    p = -1.0 if isinstance(proto.policy, AdaptivePolicy) else float(proto.policy.p)
    args = (
        proto.n_devices,
        proto.frame_len,
        proto.age_threshold,
        p,
        config.horizon_slots // proto.frame_len,
        config.warmup,
        run_rng(config.seed, run_index),
    )
    kernel = _simulate_reference if check else _simulate
    age_sum, successes, frames = kernel(*args)
    samples = (config.horizon_slots - config.warmup) * proto.n_devices
    return age_sum / samples, successes / max(frames * proto.n_devices, 1)


def run_replicated(config):
    """Run ``config.runs`` independent replications and aggregate them in run order."""
    config.validate()
    results = [run_once(config, r) for r in range(config.runs)]
    aoi = np.array([a for a, _ in results])
    std_err = float(aoi.std(ddof=1) / math.sqrt(len(aoi))) if len(aoi) > 1 else None
    return SimReport(
        per_run_aoi=tuple(float(a) for a in aoi),
        mean_aoi=float(aoi.mean()),
        std_err=std_err,
        success_rate=float(np.mean([s for _, s in results])),
    )


@dataclass(frozen=True)
class MatchedSolution:
    solution: object  # the AnalyticSolution closest to the simulated mean
    candidates: tuple  # every distinct fixed point found, best AoI first
    report: SimReport


def match_simulation(config):
    """Among the analytic fixed points, pick the one the simulated network settles in.

    When the fixed point is unique this is just the analytic solution.  When
    a congested equilibrium coexists with the good one, the simulation
    decides which of them describes the network.
    """
    config.validate()
    candidates = tuple(fixed_point_candidates(config.protocol))
    report = run_replicated(config)
    best = min(candidates, key=lambda s: abs(s.avg_aoi - report.mean_aoi))
    return MatchedSolution(best, candidates, report)


def brute_force_frame_oracle(s1, s2, config, tagged_above):
    """Exact per-slot success probabilities of the tagged device by full enumeration.

    Devices: the tagged one, ``s1`` others starting the frame at age
    ``lam*D`` (silent before slot ``eps``) and ``s2`` others above it
    (contending from slot 0).  Every subset of contenders transmitting in
    every slot is enumerated.  Limited to ``s1 + s2 <= 3`` and ``D <= 4``.
    """
    d, eps = config.frame_len, config.eps
    if s1 + s2 > 3 or d > 4 or s1 < 0 or s2 < 0:
        raise SizeExceeded(f"oracle limited to s1+s2 <= 3 and D <= 4, got s1={s1}, s2={s2}, D={d}")
    adaptive = isinstance(config.policy, AdaptivePolicy)
    # device 0 is tagged; 1..s1 start at the threshold frame; the rest above it
    late = [False] + [True] * s1 + [False] * s2
    if not tagged_above:
        late[0] = True
    alpha = [0.0] * d

    def walk(h, pending, prob):
        if h == d or prob == 0.0 or 0 not in pending:
            return
        active = [i for i in pending if h >= eps or not late[i]]
        if not active:
            walk(h + 1, pending, prob)
            return
        pt = 1.0 / len(active) if adaptive else config.policy.p
        for choice in itertools.product((False, True), repeat=len(active)):
            q = prob
            for c in choice:
                q *= pt if c else 1.0 - pt
            sent = [i for i, c in zip(active, choice) if c]
            if len(sent) == 1 and sent[0] == 0:
                alpha[h] += q
            elif len(sent) == 1:
                walk(h + 1, pending - {sent[0]}, q)
            else:
                walk(h + 1, pending, q)

    walk(0, frozenset(range(1 + s1 + s2)), 1.0)
    return np.array(alpha)
