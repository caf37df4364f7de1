"""Multi-layer Markov model for the average AoI of age-dependent random access.

The outer layer is the chain of a tagged device's age at frame starts
(states ``D, 2D, ...``).  Its transition probabilities are the per-frame
success probabilities ``beta_at`` (frame-start age exactly ``lam*D``) and
``beta_above`` (frame-start age above ``lam*D``).  Those come from two inner
absorbing chains that track, slot by slot inside a frame, how many other
devices have already delivered and whether the tagged device has.  The
inner chains depend on how many other devices start the frame at or above
``lam*D``, which in turn is drawn from the outer steady state, so the two
unknowns are found as a fixed point.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import gammaln, xlogy

from .model import AdaptivePolicy, validate_config

BETA_FLOOR = 1e-12
MIN_DAMPING = 1e-3


class DegenerateChain(ArithmeticError):
    """The success probability from above-threshold states vanished; AoI is unbounded."""


class NonConvergence(RuntimeError):
    """The fixed-point iteration ran out of iterations."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# --------------------------------------------------------------------------
# Outer chain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyState:
    """Stationary law of the frame-start age, parametrised by the two success probabilities."""

    beta_lambda: float
    beta_lambda_plus: float
    lam: int

    @property
    def normalizer(self):
        return self.lam + (1.0 - self.beta_lambda) / self.beta_lambda_plus

    def pi(self, l):
        """Probability that the frame-start age equals ``l * D`` (``l >= 1``)."""
        if l < 1:
            return 0.0
        b, bp, lam = self.beta_lambda, self.beta_lambda_plus, self.lam
        if lam == 0:
            return bp * (1.0 - bp) ** (l - 1)
        z = self.normalizer
        if l <= lam:
            return 1.0 / z
        if l == lam + 1:
            return (1.0 - b) / z
        return (1.0 - b) * (1.0 - bp) ** (l - lam - 1) / z

    def tail_mass(self):
        """Probability that the frame-start age exceeds ``lam * D``."""
        if self.lam == 0:
            return 1.0
        return (1.0 - self.beta_lambda) / (self.beta_lambda_plus * self.normalizer)

    def tail_first_moment(self):
        """Sum of ``l * pi(l)`` over ``l > lam``, in closed form."""
        bp = self.beta_lambda_plus
        if self.lam == 0:
            return 1.0 / bp
        lam = self.lam
        return (1.0 - self.beta_lambda) / self.normalizer * ((lam + 1) / bp + (1.0 - bp) / bp**2)


def external_steady_state(beta_lambda, beta_lambda_plus, lam):
    """Steady state of the frame-start age chain.

    Raises :class:`DegenerateChain` when ``beta_lambda_plus`` is below
    ``BETA_FLOOR``: the tail never returns and the age grows without bound.
    """
    if not 0.0 <= beta_lambda <= 1.0:
        raise ValueError(f"beta_lambda must lie in [0, 1], got {beta_lambda}")
    if not beta_lambda_plus <= 1.0:
        raise ValueError(f"beta_lambda_plus must be <= 1, got {beta_lambda_plus}")
    if not beta_lambda_plus >= BETA_FLOOR:
        raise DegenerateChain(
            f"success probability above threshold is {beta_lambda_plus:.3g} < {BETA_FLOOR:g}"
        )
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return SteadyState(float(beta_lambda), float(beta_lambda_plus), int(lam))


@dataclass(frozen=True)
class GroupSplit:
    """Probabilities that another device starts a frame below, at, or above ``lam * D``."""

    p_below: float
    p_at: float
    p_above: float


def group_split(steady):
    lam = steady.lam
    if lam == 0:
        # frame-start age 0 is transient, so every device is above the threshold frame
        return GroupSplit(0.0, 0.0, 1.0)
    z = steady.normalizer
    return GroupSplit((lam - 1) / z, 1.0 / z, steady.tail_mass())


@functools.lru_cache(maxsize=64)
def _simplex(n):
    s1, s2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rest = n - 1 - s1 - s2
    inside = rest >= 0
    log_coef = np.where(
        inside,
        gammaln(n) - gammaln(s1 + 1) - gammaln(s2 + 1) - gammaln(np.maximum(rest, 0) + 1),
        -np.inf,
    )
    for a in (s1, s2, rest, inside, log_coef):
        a.setflags(write=False)
    return s1, s2, rest, inside, log_coef


def joint_pmf(split, n_devices):
    """Multinomial law of (#others at ``lam*D``, #others above) among ``n_devices - 1``.

    Returns an ``(N, N)`` array indexed ``[s1, s2]``, zero off the simplex
    ``s1 + s2 <= N - 1``.  Evaluated in log space so large ``N`` does not overflow.
    """
    s1, s2, rest, inside, log_coef = _simplex(int(n_devices))
    with np.errstate(divide="ignore"):
        log_chi = (
            log_coef
            + xlogy(s1, split.p_at)
            + xlogy(s2, split.p_above)
            + xlogy(np.maximum(rest, 0), max(split.p_below, 0.0))
        )
    return np.where(inside, np.exp(log_chi), 0.0)


# --------------------------------------------------------------------------
# Inner chains
# --------------------------------------------------------------------------


def _rates(others, tagged, policy):
    """Per-slot move probabilities for a state with ``others`` pending contenders.

    ``tagged`` (0/1) says whether the tagged device also contends.  Returns
    ``(advance, success)``: one other device delivers, or the tagged device
    delivers.  Works elementwise on arrays.
    """
    others = np.asarray(others, dtype=float)
    tagged = np.asarray(tagged, dtype=float)
    u = others + tagged
    if isinstance(policy, AdaptivePolicy):
        p = 1.0 / np.maximum(u, 1.0)
    else:
        p = np.full_like(u, policy.p)
    lone = p * (1.0 - p) ** np.maximum(u - 1.0, 0.0)
    lone = np.where(u > 0, lone, 0.0)
    return others * lone, tagged * lone


def transition_matrices(s1, s2, config, above=False):
    """Slot-by-slot transition matrices of the inner chain for one ``(s1, s2)`` pair.

    States are ``0..s1+s2`` (other devices delivered so far) followed by the
    absorbing ``suc``.  ``above`` selects the chain for a tagged device whose
    frame-start age exceeds ``lam*D``; it contends from slot 0 instead of slot
    ``eps``.  Rows of states that cannot be reached in a slot are identity rows.
    Returns an array of shape ``(D, s1+s2+2, s1+s2+2)``.
    """
    k = s1 + s2
    size = k + 2
    mats = np.zeros((config.frame_len, size, size))
    for h in range(config.frame_len):
        t = mats[h]
        t[size - 1, size - 1] = 1.0
        for y in range(k + 1):
            if h >= config.eps:
                others, tagged = k - y, 1
            elif y <= s2:
                others, tagged = s2 - y, int(above)
            else:
                others, tagged = 0, 0
            adv, suc = (float(v) for v in _rates(others, tagged, config.policy))
            t[y, y] = 1.0 - adv - suc
            if adv:
                t[y, y + 1] = adv
            t[y, size - 1] = suc
    return mats


def _profile_from_matrices(mats):
    phi = np.zeros(mats.shape[1])
    phi[0] = 1.0
    alpha = np.empty(mats.shape[0])
    prev = 0.0
    for h, t in enumerate(mats):
        phi = phi @ t
        alpha[h] = phi[-1] - prev
        prev = phi[-1]
    return alpha


def success_profile_at(s1, s2, config):
    """Per-slot success probabilities of a tagged device starting the frame at age ``lam*D``."""
    return _profile_from_matrices(transition_matrices(s1, s2, config, above=False))


def success_profile_above(s1, s2, config):
    """Per-slot success probabilities of a tagged device starting the frame above ``lam*D``."""
    return _profile_from_matrices(transition_matrices(s1, s2, config, above=True))


@functools.lru_cache(maxsize=32)
def _pair_rates(n, policy):
    """Rate arrays indexed ``[s1, s2, y]`` for the three kinds of slot.

    Returns ``((adv, suc) before eps at threshold, (adv, suc) before eps
    above threshold, (adv, suc) from eps on)``.
    """
    s1, s2, *_ = _simplex(n)
    s1 = s1[..., None].astype(float)
    s2 = s2[..., None].astype(float)
    y = np.arange(n, dtype=float)
    reach = y <= s2
    others_early = np.where(reach, s2 - y, 0.0)
    out = (
        _rates(others_early, np.zeros_like(others_early), policy),
        _rates(others_early, np.where(reach, 1.0, 0.0), policy),
        _rates(np.maximum(s1 + s2 - y, 0.0), np.ones_like(others_early), policy),
    )
    for pair in out:
        for a in pair:
            a.setflags(write=False)
    return out


@functools.lru_cache(maxsize=8)
def _pair_profiles_all_eps(n, d, policy):
    """Per-pair profiles for every ``eps`` in ``0..d-1``, shape ``(d, N, N, d)`` per chain.

    From slot ``eps`` on the rates no longer depend on the slot, so
    ``hit[k]`` (probability of the tagged device delivering exactly ``k``
    slots later) is computed once and combined with the state law at slot
    ``eps``, which one forward pass through the early rates provides for
    every ``eps``.
    """
    inside = _simplex(n)[3]
    early_at, early_above, (adv, suc) = _pair_rates(n, policy)
    stay = 1.0 - adv - suc
    hit = np.empty((d, n, n, n))
    hit[0] = suc
    for k in range(1, d):
        hit[k] = stay * hit[k - 1]
        hit[k][..., :-1] += adv[..., :-1] * hit[k - 1][..., 1:]
    out = []
    for e_adv, e_suc in (early_at, early_above):
        alpha = np.zeros((d, n, n, d))
        phi = np.zeros((n, n, n))
        phi[..., 0] = np.where(inside, 1.0, 0.0)
        for eps in range(d):
            alpha[eps, :, :, eps:] = np.einsum("ijy,kijy->ijk", phi, hit[: d - eps])
            early = np.einsum("ijy,ijy->ij", phi, e_suc)
            alpha[eps + 1 :, :, :, eps] = early
            moved = phi * e_adv
            phi = phi * (1.0 - e_adv - e_suc)
            phi[..., 1:] += moved[..., :-1]
        alpha.setflags(write=False)
        out.append(alpha)
    return tuple(out)


def pair_profiles(config):
    """Inner-chain success profiles for every ``(s1, s2)`` pair at once.

    Returns ``(alpha_at, alpha_above)``, each of shape ``(N, N, D)`` and
    zero off the simplex.  They depend on the threshold only through ``eps``
    and are cached, so sweeping the threshold reuses them.
    """
    at, above = _pair_profiles_all_eps(config.n_devices, config.frame_len, config.policy)
    return at[config.eps], above[config.eps]


@dataclass(frozen=True)
class SuccessProfile:
    alpha_at: np.ndarray
    alpha_above: np.ndarray

    @property
    def beta_at(self):
        return float(self.alpha_at.sum())

    @property
    def beta_above(self):
        return float(self.alpha_above.sum())


def aggregate_profiles(chi, config, pairs=None):
    """Average the per-pair profiles over the joint law ``chi`` of the other devices."""
    alpha_at, alpha_above = pair_profiles(config) if pairs is None else pairs
    return SuccessProfile(
        np.einsum("ij,ijh->h", chi, alpha_at),
        np.einsum("ij,ijh->h", chi, alpha_above),
    )


# --------------------------------------------------------------------------
# Fixed point and AoI
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticSolution:
    steady: SteadyState
    profile: SuccessProfile
    residual: float
    iterations: int
    avg_aoi: float | None = None


def _beta_map(x, lam, n, beta_pairs):
    # sums of probabilities can overshoot 1 by an ulp or two
    steady = external_steady_state(min(max(x[0], 0.0), 1.0), min(x[1], 1.0), lam)
    chi = joint_pmf(group_split(steady), n)
    return np.array([np.vdot(chi, beta_pairs[0]), np.vdot(chi, beta_pairs[1])])


def solve_fixed_point(config, damping=0.5, initial=(0.5, 0.5), tol=1e-10, max_iters=10_000):
    """Solve for ``(beta_at, beta_above)`` by damped Picard iteration.

    The damping factor is halved whenever two consecutive steps point in
    opposite directions, which breaks period-two oscillations.  Raises
    :class:`DegenerateChain` if ``beta_above`` falls below ``BETA_FLOOR`` and
    :class:`NonConvergence` after ``max_iters``.  Once the residual is within
    ``tol`` the last map value ``F(x)`` is taken as the fixed point, so the
    steady state agrees with the aggregated profile.  The returned solution has
    ``avg_aoi`` unset; see :func:`average_aoi`.
    """
    validate_config(config)
    pairs = pair_profiles(config)
    beta_pairs = (pairs[0].sum(axis=2), pairs[1].sum(axis=2))
    lam, n = config.lam, config.n_devices
    x = np.array(initial, dtype=float)
    gamma = damping
    residual = np.inf
    prev_step = np.zeros(2)
    for it in range(1, max_iters + 1):
        fx = _beta_map(x, lam, n, beta_pairs)
        residual = float(np.max(np.abs(fx - x)))
        if residual <= tol:
            if fx[1] < BETA_FLOOR:
                raise DegenerateChain(f"fixed point has beta_above={fx[1]:.3g} for {config}")
            # adopt F(x): one undamped step, exact when the map is constant
            steady = external_steady_state(min(fx[0], 1.0), min(fx[1], 1.0), lam)
            chi = joint_pmf(group_split(steady), n)
            return AnalyticSolution(steady, aggregate_profiles(chi, config, pairs), residual, it)
        if np.dot(fx - x, prev_step) < 0.0:
            gamma = max(gamma * 0.5, MIN_DAMPING)
        prev_step = fx - x
        x = (1.0 - gamma) * x + gamma * fx
        if x[1] < BETA_FLOOR:
            raise DegenerateChain(
                f"fixed-point iteration drove beta_above to {x[1]:.3g} for {config}"
            )
    raise NonConvergence(
        f"no fixed point within tol={tol:g} after {max_iters} iterations (residual {residual:.3g})",
        residual,
        max_iters,
    )


def _frame_terms(profile, d):
    """Per-frame AoI pieces: ``sum_h alpha_h (h+1) + (1 - beta) D`` for each profile."""
    h1 = np.arange(1, d + 1)
    at = float(profile.alpha_at @ h1) + (1.0 - profile.beta_at) * d
    above = float(profile.alpha_above @ h1) + (1.0 - profile.beta_above) * d
    return at, above


def average_aoi(config, solution):
    """Time-average AoI of a device, with the geometric tail summed in closed form.

    Conditioned on a frame-start age ``l*D``, the frame's average age is
    ``l * (sum_h alpha_h (h+1) + (1-beta) D) + (D-1)/2``, so only the mass
    and first moment of the stationary law per group are needed.
    """
    d = config.frame_len
    steady, profile = solution.steady, solution.profile
    lam = steady.lam
    slope_at, slope_above = _frame_terms(profile, d)
    total = (d - 1) / 2.0
    if lam >= 1:
        z = steady.normalizer
        total += d * lam * (lam - 1) / 2.0 / z
        total += lam * slope_at / z
    total += steady.tail_first_moment() * slope_above
    return total


def average_aoi_truncated(config, solution, rel_tol=1e-12, max_terms=10**7):
    """Same quantity as :func:`average_aoi` by direct summation over frame-start states.

    Stops once a bound on the rest of the geometric tail drops below
    ``rel_tol`` times the running total.  A tiny beta_lambda+ makes the
    tail very long; past ``max_terms`` states a ValueError is raised
    instead of summing on.
    """
    d = config.frame_len
    steady, profile = solution.steady, solution.profile
    lam = steady.lam
    slope_at, slope_above = _frame_terms(profile, d)
    total = 0.0
    l = 1
    while True:
        pi = steady.pi(l)
        if l < lam:
            term = pi * (l * d + (d - 1) / 2.0)
        elif l == lam:
            term = pi * (l * slope_at + (d - 1) / 2.0)
        else:
            term = pi * (l * slope_above + (d - 1) / 2.0)
        total += term
        if l > lam + 1:
            # later terms shrink by (1 - bp) per step, times a factor (l+k)/l
            q = 1.0 - steady.beta_lambda_plus
            bp = steady.beta_lambda_plus
            remainder = term * q / bp * (1.0 + 1.0 / (l * bp))
            if remainder <= rel_tol * total:
                return total
        l += 1
        if l > max_terms:
            raise ValueError(f"tail needs more than {max_terms} terms (beta_lambda_plus={steady.beta_lambda_plus!r})")


def analyze(config, **solver_options):
    """Solve the fixed point and fill in the average AoI."""
    sol = solve_fixed_point(config, **solver_options)
    return AnalyticSolution(sol.steady, sol.profile, sol.residual, sol.iterations, average_aoi(config, sol))


# The map F is increasing in both coordinates (more successes leave more
# devices below the threshold, which means less contention), so iterating
# from these two corners converges to the smallest and the largest fixed
# point.  They coincide exactly when the fixed point is unique.
LOW_START = (1e-3, 1e-3)
HIGH_START = (1.0, 1.0)
CANDIDATE_STARTS = ((0.5, 0.5), LOW_START, HIGH_START, (0.05, 0.95), (0.95, 0.05))


def fixed_point_candidates(config, initials=CANDIDATE_STARTS, atol=1e-7, **solver_options):
    """Solve from several starting points and return the distinct solutions, best AoI first.

    Starts that end in a degenerate chain or do not converge are skipped;
    if every start fails, the last failure is raised.
    """
    found, failure = [], None
    for start in initials:
        try:
            sol = analyze(config, initial=start, **solver_options)
        except (DegenerateChain, NonConvergence) as exc:
            failure = exc
            continue
        point = (sol.steady.beta_lambda, sol.steady.beta_lambda_plus)
        if not any(np.allclose(point, (s.steady.beta_lambda, s.steady.beta_lambda_plus), atol=atol) for s in found):
            found.append(sol)
    if not found:
        raise failure
    return sorted(found, key=lambda s: s.avg_aoi)


def _batch_split(bl, bp, lam):
    """Vectorised :func:`group_split` over arrays of ``(beta_at, beta_above, lam)``."""
    z = lam + (1.0 - bl) / bp
    # z vanishes only where lam == 0, and those entries are overwritten
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(lam == 0, 1.0, (1.0 - bl) / (bp * z))
        at = np.where(lam == 0, 0.0, 1.0 / z)
        below = np.where(lam <= 1, 0.0, (lam - 1) / z)
    return below, at, tail, z


def _batch_chi(n, below, at, tail):
    """Vectorised :func:`joint_pmf`; returns shape ``(L, N, N)``.

    Uses power tables instead of logs, which is exact enough while the
    multinomial coefficients stay finite (``N`` below a few hundred).
    """
    _, _, rest, inside, log_coef = _simplex(n)
    k = np.arange(n)
    coef = np.where(inside, np.exp(log_coef), 0.0)
    at_pow = at[:, None] ** k
    tail_pow = tail[:, None] ** k
    below_pow = np.maximum(below, 0.0)[:, None] ** k
    return coef * at_pow[:, :, None] * tail_pow[:, None, :] * below_pow[:, np.maximum(rest, 0)]


@numba.njit(cache=True)
def _batch_beta_map(coef, b_at, b_above, which, below, at, tail):
    """``sum chi[s1, s2] * b[which, s1, s2]`` for both profiles without forming ``chi``.

    Same power-table evaluation as :func:`_batch_chi`, accumulated with
    running powers so each point costs one pass over the simplex.
    """
    n = coef.shape[0]
    out = np.zeros((below.shape[0], 2))
    rest_pow = np.empty(n)
    for l in range(below.shape[0]):
        e = which[l]
        rest_pow[0] = 1.0
        for k in range(1, n):
            rest_pow[k] = rest_pow[k - 1] * below[l]
        s_at = 0.0
        s_above = 0.0
        at_pow = 1.0
        for i in range(n):
            tail_pow = 1.0
            for j in range(n - i):
                w = coef[i, j] * at_pow * tail_pow * rest_pow[n - 1 - i - j]
                s_at += w * b_at[e, i, j]
                s_above += w * b_above[e, i, j]
                tail_pow *= tail[l]
            at_pow *= at[l]
        out[l, 0] = s_at
        out[l, 1] = s_above
    return out


def average_aoi_batch(config, deltas, damping=0.5, initial=(0.5, 0.5), tol=1e-10, max_iters=10_000):
    """Average AoI for many thresholds at once.

    Runs the same damped iteration as :func:`solve_fixed_point` for every
    threshold, vectorised across thresholds.  Thresholds whose chain is
    degenerate or whose iteration does not converge within ``max_iters``
    come back as ``nan``.
    """
    validate_config(config)
    deltas = np.asarray(deltas, dtype=np.int64)
    out = np.full(deltas.shape, np.nan)
    if not deltas.size:
        return out
    d, n = config.frame_len, config.n_devices
    eps, lam = deltas % d, (deltas // d).astype(float)
    alpha_at, alpha_above = _pair_profiles_all_eps(n, d, config.policy)
    b_at, b_above = alpha_at.sum(axis=3), alpha_above.sum(axis=3)
    _, _, _, inside, log_coef = _simplex(n)
    coef = np.where(inside, np.exp(log_coef), 0.0)

    m = len(deltas)
    x = np.tile(np.array(initial, dtype=float), (m, 1))
    gamma = np.full(m, float(damping))
    prev = np.zeros((m, 2))
    active = np.ones(m, dtype=bool)
    done = np.zeros(m, dtype=bool)
    for _ in range(max_iters):
        a = np.flatnonzero(active)
        if not len(a):
            break
        below, at, tail, _ = _batch_split(x[a, 0], x[a, 1], lam[a])
        fx = _batch_beta_map(coef, b_at, b_above, eps[a], np.maximum(below, 0.0), at, tail)
        conv = np.max(np.abs(fx - x[a]), axis=1) <= tol
        done[a[conv & (fx[:, 1] >= BETA_FLOOR)]] = True
        x[a[conv]] = np.minimum(fx[conv], 1.0)
        active[a[conv]] = False
        step = a[~conv]
        move = fx[~conv] - x[step]
        flip = (move * prev[step]).sum(axis=1) < 0.0
        gamma[step[flip]] = np.maximum(gamma[step[flip]] * 0.5, MIN_DAMPING)
        prev[step] = move
        g = gamma[step, None]
        x[step] = (1.0 - g) * x[step] + g * fx[~conv]
        active[step[x[step, 1] < BETA_FLOOR]] = False

    h1 = np.arange(1, d + 1)
    for e in np.unique(eps[done]):
        ok = np.flatnonzero(done & (eps == e))
        bl, bp, lo = x[ok, 0], x[ok, 1], lam[ok]
        below, at, tail, z = _batch_split(bl, bp, lo)
        chi = _batch_chi(n, below, at, tail)
        prof_at = np.einsum("lij,ijh->lh", chi, alpha_at[e])
        prof_above = np.einsum("lij,ijh->lh", chi, alpha_above[e])
        slope_at = prof_at @ h1 + (1.0 - prof_at.sum(axis=1)) * d
        slope_above = prof_above @ h1 + (1.0 - prof_above.sum(axis=1)) * d
        with np.errstate(divide="ignore", invalid="ignore"):
            moment = np.where(lo == 0, 1.0 / bp, (1.0 - bl) / z * ((lo + 1) / bp + (1.0 - bp) / bp**2))
            head = np.where(lo >= 1, d * lo * (lo - 1) / 2.0 / z + lo * slope_at / z, 0.0)
        out[ok] = (d - 1) / 2.0 + head + moment * slope_above
    return out
