"""Protocol configuration shared by the analytic model, simulator and optimizer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union


class ConfigError(ValueError):
    """Raised by :func:`validate_config` with one ``(code, message)`` per violation."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"{code}: {msg}" for code, msg in self.issues))

    @property
    def codes(self):
        return [code for code, _ in self.issues]


@dataclass(frozen=True)
class FixedPolicy:
    """Every contender transmits with the same probability ``p``."""

    p: float

    def __str__(self):
        return f"fixed:{self.p:.12g}"


@dataclass(frozen=True)
class AdaptivePolicy:
    """Every contender transmits with probability ``1/u``, ``u`` the contender count."""

    def __str__(self):
        return "adaptive"


ADAPTIVE = AdaptivePolicy()

AccessPolicy = Union[FixedPolicy, AdaptivePolicy]


def parse_policy(text):
    """Parse ``"adaptive"`` or ``"fixed:<p>"`` into an access policy."""
    text = text.strip().lower()
    if text == "adaptive":
        return ADAPTIVE
    if text.startswith("fixed:"):
        try:
            return FixedPolicy(float(text[len("fixed:"):]))
        except ValueError:
            pass
    raise ValueError(f"unrecognised policy {text!r}; expected 'fixed:<p>' or 'adaptive'")


def decompose_threshold(delta, frame_len):
    """Split an age threshold into whole frames and leftover slots.

    Returns ``(lam, eps)`` with ``delta == lam * frame_len + eps`` and
    ``0 <= eps < frame_len``.
    """
    if frame_len < 1:
        raise ValueError("frame_len must be >= 1")
    return divmod(int(delta), int(frame_len))


@dataclass(frozen=True)
class ProtocolConfig:
    """Network of ``n_devices`` sharing a collision channel with frames of ``frame_len`` slots.

    A device contends only while its age is at least ``age_threshold``.
    """

    n_devices: int
    frame_len: int
    age_threshold: int
    policy: AccessPolicy

    @property
    def lam(self):
        return self.age_threshold // self.frame_len

    @property
    def eps(self):
        return self.age_threshold % self.frame_len

    @property
    def adaptive(self):
        return isinstance(self.policy, AdaptivePolicy)

    def replace(self, **changes):
        fields = dict(
            n_devices=self.n_devices,
            frame_len=self.frame_len,
            age_threshold=self.age_threshold,
            policy=self.policy,
        )
        fields.update(changes)
        return ProtocolConfig(**fields)

    def to_dict(self, resolved=False):
        """JSON-ready form; ``resolved`` adds the derived ``lambda``/``epsilon``."""
        policy = "adaptive" if self.adaptive else {"fixed": self.policy.p}
        out = {
            "n_devices": self.n_devices,
            "frame_len": self.frame_len,
            "age_threshold": self.age_threshold,
            "policy": policy,
        }
        if resolved:
            out["lambda"] = self.lam
            out["epsilon"] = self.eps
        return out

    @classmethod
    def from_dict(cls, data):
        """Build from the JSON config object; raises :class:`ConfigError` on bad shape."""
        if not isinstance(data, dict):
            raise ConfigError([("bad_config", "config must be a JSON object")])
        missing = [k for k in ("n_devices", "frame_len", "age_threshold", "policy") if k not in data]
        if missing:
            raise ConfigError([("missing_key", f"missing {k!r}") for k in missing])
        raw = data["policy"]
        if raw == "adaptive":
            policy = ADAPTIVE
        elif isinstance(raw, dict) and set(raw) == {"fixed"} and _is_number(raw["fixed"]):
            policy = FixedPolicy(float(raw["fixed"]))
        else:
            raise ConfigError([("bad_policy", f"policy must be 'adaptive' or {{'fixed': p}}, got {raw!r}")])
        ints = {}
        for key in ("n_devices", "frame_len", "age_threshold"):
            value = data[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError([("bad_type", f"{key} must be an integer")])
            ints[key] = value
        return validate_config(cls(policy=policy, **ints))


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_config(config):
    """Return ``config`` unchanged if every invariant holds, else raise :class:`ConfigError`."""
    issues = []
    if config.n_devices < 1:
        issues.append(("n_devices_out_of_range", f"n_devices must be >= 1, got {config.n_devices}"))
    if config.frame_len < 1:
        issues.append(("frame_len_out_of_range", f"frame_len must be >= 1, got {config.frame_len}"))
    if config.age_threshold < 0:
        issues.append(("age_threshold_out_of_range", f"age_threshold must be >= 0, got {config.age_threshold}"))
    if isinstance(config.policy, FixedPolicy):
        p = config.policy.p
        if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 < p <= 1.0):
            issues.append(("probability_out_of_range", f"transmit probability must lie in (0, 1], got {p}"))
    elif not isinstance(config.policy, AdaptivePolicy):
        issues.append(("bad_policy", f"unknown policy {config.policy!r}"))
    if issues:
        raise ConfigError(issues)
    return config
