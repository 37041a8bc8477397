"""No-U-Turn sampler kernel, written to be jit-compiled and vmapped.

The tree is grown iteratively (doubling with within-subtree U-turn checks
through a momentum checkpoint stack), proposals are drawn multinomially
with progressive biasing towards the fresh subtree, step size follows
Nesterov dual averaging, and the diagonal mass matrix is estimated over
expanding warmup windows.  Everything is expressed through ``lax``
control flow so whole chains run as a single compiled program, and many
chains (or many small latent chains in prediction) batch through ``vmap``.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

from ._jax import jax, jnp
from jax import lax, random

LOG_HALF = math.log(0.5)
MAX_DELTA_ENERGY = 1000.0

# dual-averaging constants
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75


# --------------------------------------------------------------------------
# small integer helpers (SWAR popcount works on int32 under jit)
# --------------------------------------------------------------------------

def _popcount(x):
    x = x - ((x >> 1) & 0x55555555)
    x = (x & 0x33333333) + ((x >> 2) & 0x33333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F
    return (x * 0x01010101) >> 24


def _checkpoint_span(leaf_idx):
    """Checkpoint slots to test against when adding leaf ``leaf_idx``.

    Slot count equals the number of completed power-of-two blocks ending at
    this leaf; ``idx_max`` is where an even leaf is stored.
    """
    idx_max = _popcount(leaf_idx >> 1)
    lowbit = (leaf_idx + 1) & -(leaf_idx + 1)
    n_trailing_ones = _popcount(lowbit - 1)
    idx_min = idx_max - n_trailing_ones + 1
    return idx_min, idx_max


# --------------------------------------------------------------------------
# hamiltonian pieces
# --------------------------------------------------------------------------

def _kinetic(p, inv_mass):
    return 0.5 * jnp.sum(inv_mass * p * p)


def _is_turning(p_left, p_right, p_sum, inv_mass):
    rho = p_sum - 0.5 * (p_left + p_right)
    turn_left = jnp.dot(inv_mass * p_left, rho) <= 0.0
    turn_right = jnp.dot(inv_mass * p_right, rho) <= 0.0
    return turn_left | turn_right


def _leapfrog(vg, u, p, grad, eps, inv_mass):
    p_half = p + 0.5 * eps * grad
    u_new = u + eps * inv_mass * p_half
    logp_new, grad_new = vg(u_new)
    p_new = p_half + 0.5 * eps * grad_new
    return u_new, p_new, logp_new, grad_new


# --------------------------------------------------------------------------
# subtree construction (iterative, fixed-memory checkpoint stack)
# --------------------------------------------------------------------------

class _Subtree(NamedTuple):
    key: jnp.ndarray
    leaf_idx: jnp.ndarray
    tip_u: jnp.ndarray
    tip_p: jnp.ndarray
    tip_grad: jnp.ndarray
    tip_logp: jnp.ndarray
    prop_u: jnp.ndarray
    prop_grad: jnp.ndarray
    prop_logp: jnp.ndarray
    prop_energy: jnp.ndarray
    log_weight: jnp.ndarray
    p_sum: jnp.ndarray
    sum_accept: jnp.ndarray
    turning: jnp.ndarray
    diverging: jnp.ndarray
    ckpt_p: jnp.ndarray
    ckpt_psum: jnp.ndarray


def _build_subtree(vg, key, tip, eps, inv_mass, n_leaves, energy_0, max_depth):
    """Advance ``n_leaves`` leapfrog steps from ``tip``, aggregating NUTS state."""
    tip_u, tip_p, tip_grad, tip_logp = tip
    dim = tip_u.shape[0]
    init = _Subtree(
        key=key,
        leaf_idx=jnp.int32(0),
        tip_u=tip_u, tip_p=tip_p, tip_grad=tip_grad, tip_logp=tip_logp,
        prop_u=tip_u, prop_grad=tip_grad, prop_logp=tip_logp,
        prop_energy=energy_0,
        log_weight=-jnp.inf,
        p_sum=jnp.zeros(dim),
        sum_accept=0.0,
        turning=jnp.bool_(False),
        diverging=jnp.bool_(False),
        ckpt_p=jnp.zeros((max_depth + 1, dim)),   # last row is scratch
        ckpt_psum=jnp.zeros((max_depth + 1, dim)),
    )

    def cond(st: _Subtree):
        return (st.leaf_idx < n_leaves) & ~st.turning & ~st.diverging

    def body(st: _Subtree):
        key, k_mult = random.split(st.key)
        u, p, logp, grad = st.tip_u, st.tip_p, st.tip_logp, st.tip_grad
        u, p, logp, grad = _leapfrog(vg, u, p, grad, eps, inv_mass)
        energy = -logp + _kinetic(p, inv_mass)
        lw = energy_0 - energy
        lw = jnp.where(jnp.isnan(lw), -jnp.inf, lw)
        diverging = lw < -MAX_DELTA_ENERGY
        sum_accept = st.sum_accept + jnp.exp(jnp.minimum(lw, 0.0))
        new_log_weight = jnp.logaddexp(st.log_weight, lw)
        take = jnp.log(random.uniform(k_mult)) < lw - new_log_weight
        prop_u = jnp.where(take, u, st.prop_u)
        prop_grad = jnp.where(take, grad, st.prop_grad)
        prop_logp = jnp.where(take, logp, st.prop_logp)
        prop_energy = jnp.where(take, energy, st.prop_energy)
        p_sum = st.p_sum + p

        leaf = st.leaf_idx
        idx_min, idx_max = _checkpoint_span(leaf)
        is_even = (leaf % 2) == 0
        # odd leaves write to a scratch row so the update is unconditional
        # (keeps the buffer update in-place under XLA instead of a full copy)
        scratch = st.ckpt_p.shape[0] - 1
        write_idx = jnp.where(is_even, idx_max, scratch)
        ckpt_p = st.ckpt_p.at[write_idx].set(p)
        ckpt_psum = st.ckpt_psum.at[write_idx].set(p_sum)

        def check_body(carry):
            i, _ = carry
            block_sum = p_sum - ckpt_psum[i] + ckpt_p[i]
            return i - 1, _is_turning(ckpt_p[i], p, block_sum, inv_mass)

        def check_cond(carry):
            i, turning = carry
            return (i >= idx_min) & ~turning

        _, turning_inner = lax.while_loop(check_cond, check_body,
                                          (idx_max, jnp.bool_(False)))
        turning = jnp.where(is_even, jnp.bool_(False), turning_inner)

        return _Subtree(
            key=key, leaf_idx=leaf + 1,
            tip_u=u, tip_p=p, tip_grad=grad, tip_logp=logp,
            prop_u=prop_u, prop_grad=prop_grad, prop_logp=prop_logp,
            prop_energy=prop_energy,
            log_weight=new_log_weight, p_sum=p_sum, sum_accept=sum_accept,
            turning=turning, diverging=diverging,
            ckpt_p=ckpt_p, ckpt_psum=ckpt_psum,
        )

    return lax.while_loop(cond, body, init)


# --------------------------------------------------------------------------
# one NUTS transition
# --------------------------------------------------------------------------

class TransitionInfo(NamedTuple):
    accept_stat: jnp.ndarray
    depth: jnp.ndarray
    n_steps: jnp.ndarray
    diverging: jnp.ndarray
    energy_error: jnp.ndarray


class _Trajectory(NamedTuple):
    key: jnp.ndarray
    left_u: jnp.ndarray
    left_p: jnp.ndarray
    left_grad: jnp.ndarray
    left_logp: jnp.ndarray
    right_u: jnp.ndarray
    right_p: jnp.ndarray
    right_grad: jnp.ndarray
    right_logp: jnp.ndarray
    prop_u: jnp.ndarray
    prop_grad: jnp.ndarray
    prop_logp: jnp.ndarray
    prop_energy: jnp.ndarray
    log_weight: jnp.ndarray
    p_sum: jnp.ndarray
    depth: jnp.ndarray
    turning: jnp.ndarray
    diverging: jnp.ndarray
    sum_accept: jnp.ndarray
    n_steps: jnp.ndarray


def nuts_transition(vg: Callable, key, u, logp, grad, step_size, inv_mass,
                    max_depth: int):
    """One draw of multinomial NUTS from (u, logp, grad)."""
    key, k_mom = random.split(key)
    dim = u.shape[0]
    p0 = random.normal(k_mom, (dim,)) / jnp.sqrt(inv_mass)
    energy_0 = -logp + _kinetic(p0, inv_mass)

    init = _Trajectory(
        key=key,
        left_u=u, left_p=p0, left_grad=grad, left_logp=logp,
        right_u=u, right_p=p0, right_grad=grad, right_logp=logp,
        prop_u=u, prop_grad=grad, prop_logp=logp, prop_energy=energy_0,
        log_weight=jnp.asarray(0.0),
        p_sum=p0,
        depth=jnp.int32(0),
        turning=jnp.bool_(False),
        diverging=jnp.bool_(False),
        sum_accept=jnp.asarray(0.0),
        n_steps=jnp.int32(0),
    )

    def cond(tr: _Trajectory):
        return (tr.depth < max_depth) & ~tr.turning & ~tr.diverging

    def body(tr: _Trajectory):
        key, k_dir, k_sub, k_bias = random.split(tr.key, 4)
        go_right = random.bernoulli(k_dir)
        tip_u = jnp.where(go_right, tr.right_u, tr.left_u)
        tip_p = jnp.where(go_right, tr.right_p, tr.left_p)
        tip_grad = jnp.where(go_right, tr.right_grad, tr.left_grad)
        tip_logp = jnp.where(go_right, tr.right_logp, tr.left_logp)
        eps = jnp.where(go_right, step_size, -step_size)
        n_leaves = jnp.left_shift(jnp.int32(1), tr.depth)
        sub = _build_subtree(vg, k_sub, (tip_u, tip_p, tip_grad, tip_logp),
                             eps, inv_mass, n_leaves, energy_0, max_depth)

        ok = ~sub.turning & ~sub.diverging
        bias = jnp.exp(jnp.minimum(0.0, sub.log_weight - tr.log_weight))
        take = ok & (random.uniform(k_bias) < bias)
        prop_u = jnp.where(take, sub.prop_u, tr.prop_u)
        prop_grad = jnp.where(take, sub.prop_grad, tr.prop_grad)
        prop_logp = jnp.where(take, sub.prop_logp, tr.prop_logp)
        prop_energy = jnp.where(take, sub.prop_energy, tr.prop_energy)
        log_weight = jnp.where(ok, jnp.logaddexp(tr.log_weight, sub.log_weight),
                               tr.log_weight)
        p_sum = jnp.where(ok, tr.p_sum + sub.p_sum, tr.p_sum)

        upd_right = ok & go_right
        upd_left = ok & ~go_right
        right_u = jnp.where(upd_right, sub.tip_u, tr.right_u)
        right_p = jnp.where(upd_right, sub.tip_p, tr.right_p)
        right_grad = jnp.where(upd_right, sub.tip_grad, tr.right_grad)
        right_logp = jnp.where(upd_right, sub.tip_logp, tr.right_logp)
        left_u = jnp.where(upd_left, sub.tip_u, tr.left_u)
        left_p = jnp.where(upd_left, sub.tip_p, tr.left_p)
        left_grad = jnp.where(upd_left, sub.tip_grad, tr.left_grad)
        left_logp = jnp.where(upd_left, sub.tip_logp, tr.left_logp)

        turning_top = _is_turning(left_p, right_p, p_sum, inv_mass)
        turning = sub.turning | (ok & turning_top)

        return _Trajectory(
            key=key,
            left_u=left_u, left_p=left_p, left_grad=left_grad, left_logp=left_logp,
            right_u=right_u, right_p=right_p, right_grad=right_grad,
            right_logp=right_logp,
            prop_u=prop_u, prop_grad=prop_grad, prop_logp=prop_logp,
            prop_energy=prop_energy,
            log_weight=log_weight, p_sum=p_sum,
            depth=tr.depth + 1,
            turning=turning, diverging=sub.diverging,
            sum_accept=tr.sum_accept + sub.sum_accept,
            n_steps=tr.n_steps + sub.leaf_idx,
        )

    final = lax.while_loop(cond, body, init)
    info = TransitionInfo(
        accept_stat=final.sum_accept / jnp.maximum(final.n_steps, 1),
        depth=final.depth,
        n_steps=final.n_steps,
        diverging=final.diverging,
        energy_error=final.prop_energy - energy_0,
    )
    return final.prop_u, final.prop_logp, final.prop_grad, info


# --------------------------------------------------------------------------
# step-size search and adaptation state
# --------------------------------------------------------------------------

def find_reasonable_step_size(vg, key, u, logp, grad, inv_mass):
    """Double/halve the step until one leapfrog crosses 50% acceptance."""
    k_mom, _ = random.split(key)
    dim = u.shape[0]
    p0 = random.normal(k_mom, (dim,)) / jnp.sqrt(inv_mass)
    energy_0 = -logp + _kinetic(p0, inv_mass)

    def log_accept(eps):
        _, p1, logp1, _ = _leapfrog(vg, u, p0, grad, eps, inv_mass)
        la = logp1 - _kinetic(p1, inv_mass) + energy_0
        return jnp.where(jnp.isnan(la), -jnp.inf, la)

    la0 = log_accept(1.0)
    direction = jnp.where(la0 > LOG_HALF, 1.0, -1.0)

    def cond(carry):
        eps, la, it = carry
        return (direction * la > direction * LOG_HALF) & (it < 60)

    def body(carry):
        eps, _, it = carry
        eps_new = eps * jnp.exp2(direction)
        return eps_new, log_accept(eps_new), it + 1

    eps, _, _ = lax.while_loop(cond, body, (jnp.asarray(1.0), la0, jnp.int32(0)))
    return jnp.clip(eps, 1e-7, 1e7)


class DAState(NamedTuple):
    mu: jnp.ndarray
    log_eps: jnp.ndarray
    log_eps_bar: jnp.ndarray
    h_bar: jnp.ndarray
    count: jnp.ndarray


def da_init(eps0):
    return DAState(mu=jnp.log(10.0 * eps0), log_eps=jnp.log(eps0),
                   log_eps_bar=jnp.asarray(0.0), h_bar=jnp.asarray(0.0),
                   count=jnp.asarray(0.0))


def da_update(state: DAState, accept_stat, target_accept):
    count = state.count + 1.0
    w = 1.0 / (count + DA_T0)
    h_bar = (1.0 - w) * state.h_bar + w * (target_accept - accept_stat)
    log_eps = state.mu - jnp.sqrt(count) / DA_GAMMA * h_bar
    eta = count ** (-DA_KAPPA)
    log_eps_bar = eta * log_eps + (1.0 - eta) * state.log_eps_bar
    return DAState(mu=state.mu, log_eps=log_eps, log_eps_bar=log_eps_bar,
                   h_bar=h_bar, count=count)


class WelfordState(NamedTuple):
    count: jnp.ndarray
    mean: jnp.ndarray
    m2: jnp.ndarray


def welford_init(dim):
    return WelfordState(count=jnp.asarray(0.0), mean=jnp.zeros(dim),
                        m2=jnp.zeros(dim))


def welford_update(state: WelfordState, x):
    count = state.count + 1.0
    delta = x - state.mean
    mean = state.mean + delta / count
    m2 = state.m2 + delta * (x - mean)
    return WelfordState(count=count, mean=mean, m2=m2)


def welford_variance(state: WelfordState):
    """Shrunk sample variance (Stan's regularization towards 1e-3)."""
    var = state.m2 / jnp.maximum(state.count - 1.0, 1.0)
    c = state.count
    var = (c / (c + 5.0)) * var + 1e-3 * (5.0 / (c + 5.0))
    return jnp.maximum(var, 1e-10)


# --------------------------------------------------------------------------
# whole chain: warmup segments + sampling scan, all traceable
# --------------------------------------------------------------------------

def warmup_segments(warmup: int, adapt_mass: bool) -> list:
    """Split warmup into (length, update_mass_after) segments, Stan style."""
    if warmup <= 0:
        return []
    if not adapt_mass or warmup < 40:
        return [(warmup, False)]
    init_buf, term_buf, base = 75, 50, 25
    if warmup < init_buf + base + term_buf:
        init_buf = max(1, int(0.15 * warmup))
        term_buf = max(1, int(0.10 * warmup))
        base = warmup - init_buf - term_buf
    segments = [(init_buf, False)]
    used = init_buf
    size = base
    while used + size < warmup - term_buf:
        if used + size + 2 * size > warmup - term_buf:
            size = warmup - term_buf - used
        segments.append((size, True))
        used += size
        size *= 2
    if warmup - used > 0:
        segments.append((warmup - used, False))
    return segments


class ChainResult(NamedTuple):
    draws: jnp.ndarray        # (n_samples, dim)
    logp: jnp.ndarray         # (n_samples,)
    accept: jnp.ndarray
    depth: jnp.ndarray
    diverging: jnp.ndarray
    energy_error: jnp.ndarray
    step_size: jnp.ndarray    # frozen value actually used for sampling
    inv_mass: jnp.ndarray
    final_u: jnp.ndarray


def run_chain(vg: Callable, key, u0, warmup: int, n_samples: int,
              max_depth: int = 10, target_accept: float = 0.8,
              adapt_mass: bool = True) -> ChainResult:
    """Run one NUTS chain; pure function of (key, u0), safe to jit/vmap."""
    dim = u0.shape[0]
    logp0, grad0 = vg(u0)
    inv_mass = jnp.ones(dim)
    key, k_find = random.split(key)
    eps0 = find_reasonable_step_size(vg, k_find, u0, logp0, grad0, inv_mass)
    da = da_init(eps0)
    wf = welford_init(dim)

    def adapt_scan(carry, length):
        def step(c, _):
            key, u, logp, grad, da, wf, inv_mass = c
            key, k_iter = random.split(key)
            u, logp, grad, info = nuts_transition(
                vg, k_iter, u, logp, grad, jnp.exp(da.log_eps), inv_mass,
                max_depth)
            da = da_update(da, info.accept_stat, target_accept)
            wf = welford_update(wf, u)
            return (key, u, logp, grad, da, wf, inv_mass), None

        return lax.scan(step, carry, None, length=length)[0]

    carry = (key, u0, logp0, grad0, da, wf, inv_mass)
    for length, update_mass in warmup_segments(warmup, adapt_mass):
        carry = adapt_scan(carry, length)
        if update_mass:
            key, u, logp, grad, da, wf, inv_mass = carry
            inv_mass = welford_variance(wf)
            key, k_find = random.split(key)
            eps0 = find_reasonable_step_size(vg, k_find, u, logp, grad, inv_mass)
            da = da_init(eps0)
            wf = welford_init(dim)
            carry = (key, u, logp, grad, da, wf, inv_mass)

    key, u, logp, grad, da, wf, inv_mass = carry
    step_size = jnp.where(warmup > 0, jnp.exp(da.log_eps_bar), jnp.exp(da.log_eps))

    def sample_step(c, _):
        key, u, logp, grad = c
        key, k_iter = random.split(key)
        u, logp, grad, info = nuts_transition(vg, k_iter, u, logp, grad,
                                              step_size, inv_mass, max_depth)
        out = (u, logp, info.accept_stat, info.depth, info.diverging,
               info.energy_error)
        return (key, u, logp, grad), out

    (key, u, logp, grad), outs = lax.scan(sample_step, (key, u, logp, grad),
                                          None, length=n_samples)
    draws, logps, accepts, depths, divs, eerrs = outs
    return ChainResult(draws=draws, logp=logps, accept=accepts, depth=depths,
                       diverging=divs, energy_error=eerrs,
                       step_size=step_size, inv_mass=inv_mass, final_u=u)
