"""Self-contained soft actor-critic on hand-written numpy MLPs.

Networks are plain affine/rectifier stacks with optional per-hidden-layer
normalization; all gradients are explicit reverse-mode code (no autograd),
which keeps every loss finite-difference checkable. The agent follows the
usual twin-critic recipe: squashed-Gaussian policy, uniform replay, soft
target updates, fixed entropy coefficient, and a critic target

    y = r + gamma * (min_i Q_i'(o', a') - alpha * log pi(a'|o')),

bootstrapped on every transition (episodes here end by time limit, not
by reaching an absorbing state).
"""

from __future__ import annotations

import copy
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .control import Controller
from .metrics import LearningCurve

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_LN_EPS = 1e-5
_CKPT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite; the trainer at failure is attached."""

    def __init__(self, message, trainer=None):
        super().__init__(message)
        self.trainer = trainer


# ---------------------------------------------------------------------------
# MLP core


@dataclass
class MLPParams:
    """Affine stack with rectifier hidden units and identity output.

    weights[l] has shape (out_l, in_l). With layer_norm on, each hidden
    preactivation is normalized per sample ((z - mean)/sqrt(var + 1e-5))
    and rescaled by a learned gain/bias before the rectifier.
    """

    weights: list
    biases: list
    ln_gain: list = None
    ln_bias: list = None

    @property
    def layer_norm(self):
        return self.ln_gain is not None

    @property
    def n_hidden(self):
        return len(self.weights) - 1

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def tensors(self):
        """Flat list of parameter arrays (stable order, shared refs)."""
        out = list(self.weights) + list(self.biases)
        if self.layer_norm:
            out += list(self.ln_gain) + list(self.ln_bias)
        return out

    def copy(self):
        return copy.deepcopy(self)


def mlp_init(widths, rng, layer_norm=False, dtype=np.float64,
             out_scale=1.0):
    """He-initialized MLP; the output layer uses a smaller fan-in scale."""
    weights, biases = [], []
    for l in range(len(widths) - 1):
        fan_in = widths[l]
        last = l == len(widths) - 2
        scale = out_scale / np.sqrt(fan_in) if last else np.sqrt(2.0 / fan_in)
        weights.append((scale * rng.standard_normal(
            (widths[l + 1], fan_in))).astype(dtype))
        biases.append(np.zeros(widths[l + 1], dtype=dtype))
    ln_gain = ln_bias = None
    if layer_norm:
        ln_gain = [np.ones(w, dtype=dtype) for w in widths[1:-1]]
        ln_bias = [np.zeros(w, dtype=dtype) for w in widths[1:-1]]
    return MLPParams(weights, biases, ln_gain, ln_bias)


def mlp_forward(params, x):
    """Forward pass on a (B, in) batch; returns (output, cache)."""
    x = np.asarray(x, dtype=params.dtype)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[1]:
        raise ValueError(f"input shape {x.shape} incompatible with "
                         f"layer of fan-in {params.weights[0].shape[1]}")
    inputs, zhats, invs = [], [], []
    a = x
    n_hidden = params.n_hidden
    for l in range(n_hidden):
        inputs.append(a)
        z = a @ params.weights[l].T
        z += params.biases[l]
        if params.layer_norm:
            d = z.shape[1]
            z -= z.mean(axis=1, keepdims=True)
            var = np.einsum("ij,ij->i", z, z) / d
            inv = (1.0 / np.sqrt(var + _LN_EPS))[:, None].astype(params.dtype)
            z *= inv
            zhat = z  # normalized preactivation, kept for backward
            h = zhat * params.ln_gain[l]
            h += params.ln_bias[l]
            zhats.append(zhat)
            invs.append(inv)
        else:
            h = z
            zhats.append(None)
            invs.append(None)
        a = np.maximum(h, 0.0)
    inputs.append(a)
    y = a @ params.weights[-1].T + params.biases[-1]
    cache = (inputs, zhats, invs)
    return y, cache


@dataclass
class MLPGrads:
    weights: list
    biases: list
    ln_gain: list = None
    ln_bias: list = None

    def tensors(self):
        out = list(self.weights) + list(self.biases)
        if self.ln_gain is not None:
            out += list(self.ln_gain) + list(self.ln_bias)
        return out


def _ln_backward(dh, zhat, inv, gain):
    """Backprop through (z - mean)/sqrt(var + eps) * gain + bias.

    dh is consumed in place.
    """
    d = zhat.shape[1]
    dgain = np.einsum("ij,ij->j", dh, zhat)
    dbias = dh.sum(axis=0)
    dh *= gain
    m2 = (np.einsum("ij,ij->i", dh, zhat) / d)[:, None]
    dh -= dh.mean(axis=1, keepdims=True)
    dh -= zhat * m2
    dh *= inv
    return dh, dgain, dbias


def mlp_backward(params, cache, dy):
    """Exact reverse-mode gradients; returns (MLPGrads, input gradient)."""
    inputs, zhats, invs = cache
    dy = np.asarray(dy, dtype=params.dtype)
    n_hidden = params.n_hidden
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    ggain = [None] * n_hidden if params.layer_norm else None
    gbias = [None] * n_hidden if params.layer_norm else None

    gw[-1] = dy.T @ inputs[-1]
    gb[-1] = dy.sum(axis=0)
    da = dy @ params.weights[-1]
    for l in range(n_hidden - 1, -1, -1):
        # the rectifier mask comes from the stored activation a = max(h, 0)
        dh = da
        dh *= inputs[l + 1] > 0
        if params.layer_norm:
            dz, ggain[l], gbias[l] = _ln_backward(
                dh, zhats[l], invs[l], params.ln_gain[l])
        else:
            dz = dh
        gw[l] = dz.T @ inputs[l]
        gb[l] = dz.sum(axis=0)
        da = dz @ params.weights[l]
    return MLPGrads(gw, gb, ggain, gbias), da


def mlp_backward_input(params, cache, dy):
    """Input gradient only (skips the parameter-gradient matmuls)."""
    inputs, zhats, invs = cache
    da = np.asarray(dy, dtype=params.dtype) @ params.weights[-1]
    for l in range(params.n_hidden - 1, -1, -1):
        dh = da
        dh *= inputs[l + 1] > 0
        if params.layer_norm:
            dz, _, _ = _ln_backward(dh, zhats[l], invs[l],
                                    params.ln_gain[l])
        else:
            dz = dh
        da = dz @ params.weights[l]
    return da


def flatten_tensors(tensors):
    return np.concatenate([t.ravel() for t in tensors])


def unflatten_into(tensors, vec):
    k = 0
    for t in tensors:
        t[...] = vec[k:k + t.size].reshape(t.shape)
        k += t.size


# ---------------------------------------------------------------------------
# Adam


class Adam:
    """Adaptive moment estimation over a list of parameter arrays."""

    def __init__(self, tensors, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t) for t in tensors]
        self.v = [np.zeros_like(t) for t in tensors]
        self._scratch = [np.empty_like(t) for t in tensors]
        self.t = 0

    def step(self, tensors, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        # effective step keeps the standard bias correction while letting
        # every array op run in place on preallocated scratch
        lr_t = self.lr * np.sqrt(corr2) / corr1
        for p, g, m, v, s in zip(tensors, grads, self.m, self.v,
                                 self._scratch):
            m *= b1
            np.multiply(g, 1 - b1, out=s)
            m += s
            v *= b2
            np.multiply(g, g, out=s)
            s *= 1 - b2
            v += s
            np.sqrt(v, out=s)
            s += self.eps * np.sqrt(corr2)
            np.divide(m, s, out=s)
            s *= lr_t
            p -= s


def soft_update(targets: MLPParams, onlines: MLPParams, rho):
    """theta_target <- (1 - rho) theta_target + rho theta_online."""
    for t, o in zip(targets.tensors(), onlines.tensors()):
        t *= (1.0 - rho)
        t += rho * o


# ---------------------------------------------------------------------------
# Squashed Gaussian policy


@dataclass
class GaussianPolicy:
    """MLP emitting (mean, log-std) per action dim; actions are tanh(u)."""

    net: MLPParams
    action_dim: int

    @property
    def dtype(self):
        return self.net.dtype


def policy_init(obs_dim, action_dim, widths, rng, layer_norm=False,
                dtype=np.float64):
    net = mlp_init([obs_dim] + list(widths) + [2 * action_dim], rng,
                   layer_norm=layer_norm, dtype=dtype, out_scale=0.1)
    return GaussianPolicy(net=net, action_dim=action_dim)


def _squash_correction(u):
    """log(1 - tanh(u)^2) in the overflow-safe form 2(ln2 - u - softplus(-2u))."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def policy_sample_batch(policy, obs, xi):
    """Reparameterized actions for a (B, obs) batch with given noise draws.

    Returns (actions, log_probs, aux) where aux carries everything the
    analytic gradient needs.
    """
    out, cache = mlp_forward(policy.net, obs)
    A = policy.action_dim
    mean = out[:, :A]
    log_std_raw = out[:, A:]
    log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std)
    u = mean + std * xi
    a = np.tanh(u)
    # Gaussian density of u under (mean, std): with u = mean + std*xi the
    # quadratic term is just -xi^2/2
    logp = (-0.5 * xi * xi - log_std
            - 0.5 * np.log(2.0 * np.pi) - _squash_correction(u))
    logp = logp.sum(axis=1)
    aux = {"cache": cache, "mean": mean, "log_std": log_std,
           "log_std_raw": log_std_raw, "std": std, "u": u, "a": a, "xi": xi}
    return a, logp, aux


def sample_action(policy, obs, rng, deterministic=False):
    """Single-observation action; returns (action, log_prob)."""
    obs = np.asarray(obs, dtype=policy.dtype).reshape(1, -1)
    if deterministic:
        out, _ = mlp_forward(policy.net, obs)
        return np.tanh(out[0, :policy.action_dim]), None
    xi = rng.standard_normal((1, policy.action_dim)).astype(policy.dtype)
    a, logp, _ = policy_sample_batch(policy, obs, xi)
    return a[0], float(logp[0])


def policy_actions_deterministic(policy, obs):
    obs = np.asarray(obs, dtype=policy.dtype)
    squeeze = obs.ndim == 1
    out, _ = mlp_forward(policy.net, obs.reshape(-1, obs.shape[-1]))
    a = np.tanh(out[:, :policy.action_dim])
    return a[0] if squeeze else a


class PolicyController(Controller):
    """Deterministic trained policy as a simulation controller."""

    def __init__(self, policy, obs_normalization):
        self.policy = policy
        self.obs_normalization = obs_normalization

    def __call__(self, measured):
        obs = np.asarray(measured) / self.obs_normalization
        return policy_actions_deterministic(self.policy, obs)


# ---------------------------------------------------------------------------
# Replay buffer


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity, obs_dim, action_dim, dtype=np.float64):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.actions = np.zeros((capacity, action_dim), dtype=dtype)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.truncated = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def add(self, obs, action, reward, next_obs, truncated):
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.truncated[i] = truncated
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch, rng):
        idx = rng.integers(0, self.size, size=batch)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "truncated": self.truncated[idx],
        }


# ---------------------------------------------------------------------------
# Hyperparameters


@dataclass
class SACHyper:
    """Training configuration (defaults follow the tuned values used for
    small networks; for_network() applies the size-dependent switches)."""

    discount: float = 0.95
    alpha: float = 0.01
    policy_lr: float = 3e-4
    q_lr: float = 1e-3
    batch_size: int = 512
    buffer_capacity: int = 1_000_000
    target_update_rate: float = 0.005
    gradient_steps: int = 2
    policy_delay: int = 2
    actor_width: int = 256
    critic_width: int = 1024
    hidden_layers: int = 3
    learning_starts: int = 1000
    actor_layer_norm: bool = False
    critic_layer_norm: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if not 0 < self.target_update_rate <= 1:
            raise ValueError("target_update_rate must be in (0, 1]")
        for name in ("discount", "alpha", "policy_lr", "q_lr", "batch_size",
                     "buffer_capacity", "gradient_steps", "policy_delay",
                     "actor_width", "critic_width", "hidden_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @classmethod
    def for_network(cls, n_nodes, **overrides):
        """Size-dependent switches: wider stacks and faster policy steps
        for larger networks."""
        kw = dict(
            policy_lr=3e-4 if n_nodes <= 4 else 1e-3,
            hidden_layers=3 if n_nodes < 4 else 4,
        )
        kw.update(overrides)
        return cls(**kw)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# Losses and updates


def critic_loss_and_grads(q1, q2, batch, target_y):
    """Half mean-squared Bellman residual for each twin.

    Returns (loss, grads_q1, grads_q2) with loss = sum of the two halves;
    target_y is precomputed and treated as a constant.
    """
    x = np.concatenate([batch["obs"], batch["actions"]], axis=1)
    B = x.shape[0]
    total = 0.0
    grads = []
    for net in (q1, q2):
        q, cache = mlp_forward(net, x)
        resid = q[:, 0] - target_y
        total += 0.5 * float(np.mean(resid ** 2))
        g, _ = mlp_backward(net, cache, (resid / B)[:, None])
        grads.append(g)
    return total, grads[0], grads[1]


def critic_target(t1, t2, policy, batch, discount, alpha, xi_next):
    """y = r + gamma * (min twin target Q at a fresh policy sample - alpha*logp).

    Time-limit truncation still bootstraps: the environment has no
    absorbing state, so the value of the next observation is always real.
    """
    a_next, logp_next, _ = policy_sample_batch(policy, batch["next_obs"],
                                               xi_next)
    xn = np.concatenate([batch["next_obs"], a_next], axis=1)
    qt1, _ = mlp_forward(t1, xn)
    qt2, _ = mlp_forward(t2, xn)
    v_next = np.minimum(qt1[:, 0], qt2[:, 0]) - alpha * logp_next
    return batch["rewards"] + discount * v_next


def _twin_min_q_and_grad(q1, q2, obs, actions):
    """min_i Q_i(o, a) per sample and its gradient wrt the actions."""
    x = np.concatenate([obs, actions], axis=1)
    o_dim = obs.shape[1]
    qa, ca = mlp_forward(q1, x)
    qb, cb = mlp_forward(q2, x)
    take_a = qa[:, 0] <= qb[:, 0]
    qmin = np.where(take_a, qa[:, 0], qb[:, 0])
    ones = np.ones((x.shape[0], 1), dtype=q1.dtype)
    dxa = mlp_backward_input(q1, ca, ones * take_a[:, None])
    dxb = mlp_backward_input(q2, cb, ones * ~take_a[:, None])
    return qmin, (dxa + dxb)[:, o_dim:]


def actor_loss_and_grads(policy, obs, alpha, xi, q_and_grad):
    """J_pi = mean(alpha * log pi - Q) with reparameterized actions.

    q_and_grad(obs, actions) -> (q, dq/da) abstracts the critic pair so
    synthetic critics can drive the same gradient path in tests.
    """
    obs = np.asarray(obs, dtype=policy.dtype)
    a, logp, aux = policy_sample_batch(policy, obs, xi)
    q, dq_da = q_and_grad(obs, a)
    B = obs.shape[0]
    loss = float(np.mean(alpha * logp - q))

    # dJ/da from the critic, dJ/du additionally via dlogp/du = 2*tanh(u)
    dJ_da = -dq_da / B
    du = dJ_da * (1.0 - a * a) + (alpha / B) * 2.0 * a
    # dlogp/dlog_std = -1 directly; u = mean + exp(log_std)*xi
    dmean = du
    dlog_std = du * aux["std"] * xi - alpha / B
    # clip gate on the raw log-std output
    raw = aux["log_std_raw"]
    dlog_std = dlog_std * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
    dout = np.concatenate([dmean, dlog_std], axis=1)
    grads, _ = mlp_backward(policy.net, aux["cache"], dout)
    return loss, grads


# ---------------------------------------------------------------------------
# Trainer


class SACTrainer:
    """Holds networks, optimizers, buffer, and streams for one run."""

    def __init__(self, obs_dim, action_dim, hyper: SACHyper, seed=0):
        self.hyper = hyper
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        dt = hyper.np_dtype
        rng_init = np.random.default_rng([seed, 0])
        self.rng_action = np.random.default_rng([seed, 1])
        self.rng_replay = np.random.default_rng([seed, 2])
        aw = [hyper.actor_width] * hyper.hidden_layers
        cw = [hyper.critic_width] * hyper.hidden_layers
        self.policy = policy_init(obs_dim, action_dim, aw, rng_init,
                                  layer_norm=hyper.actor_layer_norm, dtype=dt)
        self.q1 = mlp_init([obs_dim + action_dim] + cw + [1], rng_init,
                           layer_norm=hyper.critic_layer_norm, dtype=dt)
        self.q2 = mlp_init([obs_dim + action_dim] + cw + [1], rng_init,
                           layer_norm=hyper.critic_layer_norm, dtype=dt)
        self.t1 = self.q1.copy()
        self.t2 = self.q2.copy()
        self.opt_pi = Adam(self.policy.net.tensors(), hyper.policy_lr)
        self.opt_q1 = Adam(self.q1.tensors(), hyper.q_lr)
        self.opt_q2 = Adam(self.q2.tensors(), hyper.q_lr)
        self.buffer = ReplayBuffer(hyper.buffer_capacity, obs_dim,
                                   action_dim, dtype=dt)
        self.env_steps = 0
        self.critic_updates = 0
        self.last_q_loss = np.nan
        self.last_pi_loss = np.nan

    def act(self, obs, deterministic=False):
        if self.env_steps < self.hyper.learning_starts and not deterministic:
            return self.rng_action.uniform(-1.0, 1.0, self.action_dim)
        a, _ = sample_action(self.policy, obs, self.rng_action,
                             deterministic=deterministic)
        return np.asarray(a, dtype=float)

    def observe(self, obs, action, reward, next_obs, truncated):
        self.buffer.add(obs, action, reward, next_obs, truncated)
        self.env_steps += 1

    def _q_and_grad(self, obs, actions):
        return _twin_min_q_and_grad(self.q1, self.q2, obs, actions)

    def update(self):
        """One critic gradient step (actor joins every policy_delay-th)."""
        h = self.hyper
        if self.buffer.size < h.batch_size:
            return
        dt = h.np_dtype
        batch = self.buffer.sample(h.batch_size, self.rng_replay)
        xi_next = self.rng_replay.standard_normal(
            (h.batch_size, self.action_dim)).astype(dt)
        y = critic_target(self.t1, self.t2, self.policy, batch,
                          h.discount, h.alpha, xi_next)
        q_loss, g1, g2 = critic_loss_and_grads(self.q1, self.q2, batch, y)
        if not np.isfinite(q_loss):
            raise TrainingDivergedError(
                f"critic loss became {q_loss}", trainer=self)
        self.opt_q1.step(self.q1.tensors(), g1.tensors())
        self.opt_q2.step(self.q2.tensors(), g2.tensors())
        self.critic_updates += 1
        self.last_q_loss = q_loss

        if self.critic_updates % h.policy_delay == 0:
            xi = self.rng_replay.standard_normal(
                (h.batch_size, self.action_dim)).astype(dt)
            pi_loss, g_pi = actor_loss_and_grads(
                self.policy, batch["obs"], h.alpha, xi, self._q_and_grad)
            if not np.isfinite(pi_loss):
                raise TrainingDivergedError(
                    f"policy loss became {pi_loss}", trainer=self)
            self.opt_pi.step(self.policy.net.tensors(), g_pi.tensors())
            self.last_pi_loss = pi_loss

        soft_update(self.t1, self.q1, h.target_update_rate)
        soft_update(self.t2, self.q2, h.target_update_rate)


@dataclass
class TrainResult:
    policy: GaussianPolicy
    curve: LearningCurve
    history: dict
    trainer: SACTrainer


def train(env, hyper: SACHyper, episodes, seed=0, eval_every=50,
          eval_seed_base=9_000_000, callback=None):
    """Run the full act/store/update loop for a number of episodes.

    The environment supplies obs_len and n_leaves (leaf actions). Each env
    step is followed by hyper.gradient_steps critic updates once
    learning_starts transitions have been collected. Periodic evaluation
    episodes run a deterministic policy on explicitly seeded resets, so
    they never perturb the training stream.
    """
    trainer = SACTrainer(env.obs_len, env.n_leaves, hyper, seed=seed)
    returns = np.zeros(episodes)
    q_losses = np.zeros(episodes)
    pi_losses = np.zeros(episodes)
    eval_returns = {}
    best_eval = -np.inf
    best_policy = None

    for ep in range(episodes):
        obs = env.reset()
        ep_return = 0.0
        done = False
        while not done:
            action = trainer.act(obs)
            result = env.step(action)
            trainer.observe(obs, action, result.reward, result.obs,
                            result.truncated)
            obs = result.obs
            ep_return += result.reward
            done = result.truncated or result.terminated
            if trainer.env_steps >= hyper.learning_starts:
                for _ in range(hyper.gradient_steps):
                    trainer.update()
        returns[ep] = ep_return
        q_losses[ep] = trainer.last_q_loss
        pi_losses[ep] = trainer.last_pi_loss

        if eval_every and (ep + 1) % eval_every == 0:
            e_ret = evaluate(env, trainer.policy,
                             seed=eval_seed_base + ep)
            eval_returns[ep + 1] = e_ret
            if e_ret > best_eval:
                best_eval = e_ret
                best_policy = trainer.policy.copy() if hasattr(
                    trainer.policy, "copy") else copy.deepcopy(trainer.policy)
        if callback is not None:
            callback(ep, returns[:ep + 1], trainer)

    history = {
        "returns": returns,
        "q_loss": q_losses,
        "pi_loss": pi_losses,
        "eval_returns": eval_returns,
        "best_eval": best_eval,
        "best_policy": best_policy if best_policy is not None
        else copy.deepcopy(trainer.policy),
    }
    return TrainResult(policy=trainer.policy,
                       curve=LearningCurve(returns), history=history,
                       trainer=trainer)


def evaluate(env, policy, seed, episodes=1):
    """Deterministic-policy return, averaged over explicitly seeded episodes."""
    total = 0.0
    for k in range(episodes):
        obs = env.reset(seed=seed + k)
        done = False
        while not done:
            a = policy_actions_deterministic(policy, obs)
            r = env.step(a)
            total += r.reward
            obs = r.obs
            done = r.truncated or r.terminated
    return total / episodes


# ---------------------------------------------------------------------------
# Checkpoints


def _pack_params(prefix, params, arrays):
    for i, w in enumerate(params.weights):
        arrays[f"{prefix}/w{i}"] = w
    for i, b in enumerate(params.biases):
        arrays[f"{prefix}/b{i}"] = b
    if params.layer_norm:
        for i, g in enumerate(params.ln_gain):
            arrays[f"{prefix}/g{i}"] = g
        for i, b in enumerate(params.ln_bias):
            arrays[f"{prefix}/h{i}"] = b


def _unpack_params(prefix, data, layer_norm):
    ws, bs = [], []
    i = 0
    while f"{prefix}/w{i}" in data:
        ws.append(np.array(data[f"{prefix}/w{i}"]))
        bs.append(np.array(data[f"{prefix}/b{i}"]))
        i += 1
    gg = hh = None
    if layer_norm:
        gg, hh = [], []
        i = 0
        while f"{prefix}/g{i}" in data:
            gg.append(np.array(data[f"{prefix}/g{i}"]))
            hh.append(np.array(data[f"{prefix}/h{i}"]))
            i += 1
    return MLPParams(ws, bs, gg, hh)


def save_checkpoint(path, trainer_or_policy, hyper=None, extra=None,
                    include_buffer=True):
    """Write a versioned .npz checkpoint.

    Accepts either a full SACTrainer (resume-able: networks, targets,
    optimizer moments, buffer contents, rng states) or a bare
    GaussianPolicy (policy-only, for running as a controller).
    """
    arrays = {}
    meta = {"version": _CKPT_VERSION, "extra": extra or {}}
    if isinstance(trainer_or_policy, GaussianPolicy):
        policy = trainer_or_policy
        meta["kind"] = "policy"
        meta["action_dim"] = policy.action_dim
        meta["actor_layer_norm"] = policy.net.layer_norm
        if hyper is not None:
            meta["hyper"] = hyper.to_dict()
        _pack_params("policy", policy.net, arrays)
    else:
        tr = trainer_or_policy
        meta["kind"] = "trainer"
        meta["hyper"] = tr.hyper.to_dict()
        meta["obs_dim"] = tr.obs_dim
        meta["action_dim"] = tr.action_dim
        meta["actor_layer_norm"] = tr.policy.net.layer_norm
        meta["env_steps"] = tr.env_steps
        meta["critic_updates"] = tr.critic_updates
        meta["rng_action"] = tr.rng_action.bit_generator.state
        meta["rng_replay"] = tr.rng_replay.bit_generator.state
        _pack_params("policy", tr.policy.net, arrays)
        for name, net in (("q1", tr.q1), ("q2", tr.q2),
                          ("t1", tr.t1), ("t2", tr.t2)):
            _pack_params(name, net, arrays)
        for name, opt in (("opi", tr.opt_pi), ("oq1", tr.opt_q1),
                          ("oq2", tr.opt_q2)):
            meta[f"{name}_t"] = opt.t
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"{name}/m{i}"] = m
                arrays[f"{name}/v{i}"] = v
        if include_buffer:
            n = tr.buffer.size
            meta["buffer_size"] = n
            meta["buffer_cursor"] = tr.buffer.cursor
            arrays["buf/obs"] = tr.buffer.obs[:n]
            arrays["buf/actions"] = tr.buffer.actions[:n]
            arrays["buf/rewards"] = tr.buffer.rewards[:n]
            arrays["buf/next_obs"] = tr.buffer.next_obs[:n]
            arrays["buf/truncated"] = tr.buffer.truncated[:n]
    arrays["meta"] = np.frombuffer(
        json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def _read_meta(data):
    return json.loads(bytes(data["meta"]).decode())


def load_checkpoint(path):
    """Load a checkpoint; returns (policy, hyper or None, meta)."""
    with np.load(path) as data:
        meta = _read_meta(data)
        if meta["version"] != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{meta['version']}")
        net = _unpack_params("policy", data,
                             meta.get("actor_layer_norm", False))
        policy = GaussianPolicy(net=net, action_dim=meta["action_dim"])
        hyper = SACHyper.from_dict(meta["hyper"]) if "hyper" in meta else None
        return policy, hyper, meta


def resume_trainer(path):
    """Rebuild a full SACTrainer from a trainer checkpoint."""
    with np.load(path) as data:
        meta = _read_meta(data)
        if meta.get("kind") != "trainer":
            raise ValueError("not a trainer checkpoint")
        hyper = SACHyper.from_dict(meta["hyper"])
        tr = SACTrainer(meta["obs_dim"], meta["action_dim"], hyper)
        tr.policy = GaussianPolicy(
            net=_unpack_params("policy", data, meta["actor_layer_norm"]),
            action_dim=meta["action_dim"])
        tr.q1 = _unpack_params("q1", data, hyper.critic_layer_norm)
        tr.q2 = _unpack_params("q2", data, hyper.critic_layer_norm)
        tr.t1 = _unpack_params("t1", data, hyper.critic_layer_norm)
        tr.t2 = _unpack_params("t2", data, hyper.critic_layer_norm)
        for name, nets, opt_attr in (("opi", tr.policy.net, "opt_pi"),
                                     ("oq1", tr.q1, "opt_q1"),
                                     ("oq2", tr.q2, "opt_q2")):
            lr = hyper.policy_lr if name == "opi" else hyper.q_lr
            opt = Adam(nets.tensors(), lr)
            opt.t = meta[f"{name}_t"]
            opt.m = [np.array(data[f"{name}/m{i}"])
                     for i in range(len(opt.m))]
            opt.v = [np.array(data[f"{name}/v{i}"])
                     for i in range(len(opt.v))]
            setattr(tr, opt_attr, opt)
        n = meta.get("buffer_size", 0)
        if n:
            tr.buffer.obs[:n] = data["buf/obs"]
            tr.buffer.actions[:n] = data["buf/actions"]
            tr.buffer.rewards[:n] = data["buf/rewards"]
            tr.buffer.next_obs[:n] = data["buf/next_obs"]
            tr.buffer.truncated[:n] = data["buf/truncated"]
            tr.buffer.size = n
            tr.buffer.cursor = meta["buffer_cursor"]
        tr.env_steps = meta["env_steps"]
        tr.critic_updates = meta["critic_updates"]
        tr.rng_action.bit_generator.state = meta["rng_action"]
        tr.rng_replay.bit_generator.state = meta["rng_replay"]
        return tr
