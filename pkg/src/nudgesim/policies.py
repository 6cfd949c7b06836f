"""Nudge policies: fixed schedules and bandits.

Arms are indexed by position in the environment's action set. Every argmax
breaks ties toward the lowest index. ``decide`` works on a whole day's batch
of contexts against the current state; ``update`` is applied one reward at a
time, in user order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env_model import NO_NUDGE


@dataclass(frozen=True)
class ContextVector:
    user_id: str
    day: int
    values: tuple[float, ...]


@dataclass(frozen=True)
class Decision:
    user_id: str
    day: int
    action: str
    policy_name: str

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "day": self.day, "action": self.action, "policy_name": self.policy_name}


class Policy:
    name = "policy"
    binary_reward = False

    def __init__(self, action_set):
        self.action_set = tuple(action_set)
        self.n_arms = len(self.action_set)
        self.arm_index = {a: i for i, a in enumerate(self.action_set)}

    def choose(self, contexts, rng) -> list[int]:
        raise NotImplementedError

    def decide(self, contexts, rng) -> list[Decision]:
        if not contexts:
            return []
        arms = self.choose(contexts, rng)
        return [Decision(c.user_id, c.day, self.action_set[a], self.name) for c, a in zip(contexts, arms)]

    def update(self, decision: Decision, context: ContextVector, reward: float):
        pass

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, state: dict):
        pass

    def to_dict(self) -> dict:
        return {"spec": self.spec(), "action_set": list(self.action_set), "state": self.state_dict()}

    def spec(self) -> dict:
        return {"name": self.name}


class FixedPolicy(Policy):
    """``never_nudge``, ``always_nudge`` or ``every_k_days`` (nudge when ``day % k == offset``)."""

    def __init__(self, action_set, name="never_nudge", k=1, offset=0, nudge=None):
        super().__init__(action_set)
        self.name = name
        self.k = int(k)
        self.offset = int(offset)
        self.nudge = nudge or next(a for a in self.action_set if a != NO_NUDGE)
        self._off = self.arm_index[NO_NUDGE]
        self._on = self.arm_index[self.nudge]

    def choose(self, contexts, rng):
        if self.name == "never_nudge":
            return [self._off] * len(contexts)
        if self.name == "always_nudge":
            return [self._on] * len(contexts)
        return [self._on if c.day % self.k == self.offset % self.k else self._off for c in contexts]

    def spec(self):
        if self.name == "every_k_days":
            return {"name": self.name, "k": self.k, "offset": self.offset, "nudge": self.nudge}
        return {"name": self.name, "nudge": self.nudge}


class EpsilonGreedy(Policy):
    name = "epsilon_greedy"

    def __init__(self, action_set, epsilon=0.1):
        super().__init__(action_set)
        self.epsilon = float(epsilon)
        self.counts = [0] * self.n_arms
        self.values = [0.0] * self.n_arms

    def choose(self, contexts, rng):
        n = len(contexts)
        explore = rng.random(n) < self.epsilon
        random_arms = rng.integers(self.n_arms, size=n)
        best = int(np.argmax(self.values))
        return np.where(explore, random_arms, best).tolist()

    def update(self, decision, context, reward):
        a = self.arm_index[decision.action]
        self.counts[a] += 1
        self.values[a] += (reward - self.values[a]) / self.counts[a]

    def spec(self):
        return {"name": self.name, "epsilon": self.epsilon}

    def state_dict(self):
        return {"counts": list(self.counts), "values": list(self.values)}

    def load_state_dict(self, state):
        self.counts = [int(c) for c in state["counts"]]
        self.values = [float(v) for v in state["values"]]


class ThompsonBernoulli(Policy):
    """Beta-Bernoulli Thompson sampling; rewards are expected in [0, 1]."""

    name = "thompson_bernoulli"
    binary_reward = True

    def __init__(self, action_set, prior=(1.0, 1.0)):
        super().__init__(action_set)
        self.prior = (float(prior[0]), float(prior[1]))
        self.a = [self.prior[0]] * self.n_arms
        self.b = [self.prior[1]] * self.n_arms

    def choose(self, contexts, rng):
        draws = rng.beta(self.a, self.b, size=(len(contexts), self.n_arms))
        return np.argmax(draws, axis=1).tolist()

    def update(self, decision, context, reward):
        arm = self.arm_index[decision.action]
        self.a[arm] += reward
        self.b[arm] += 1.0 - reward

    def spec(self):
        return {"name": self.name, "prior": list(self.prior)}

    def state_dict(self):
        return {"a": list(self.a), "b": list(self.b)}

    def load_state_dict(self, state):
        self.a = [float(x) for x in state["a"]]
        self.b = [float(x) for x in state["b"]]


class LinUCB(Policy):
    """Disjoint LinUCB: one ridge regression per arm, optimism bonus ``alpha * sqrt(x' A^-1 x)``."""

    name = "lin_ucb"

    def __init__(self, action_set, n_features, alpha=1.0, ridge=1.0, intercept=True):
        super().__init__(action_set)
        self.alpha = float(alpha)
        self.ridge = float(ridge)
        self.intercept = bool(intercept)
        self.dim = int(n_features) + (1 if self.intercept else 0)
        self.A = np.stack([np.eye(self.dim) * self.ridge] * self.n_arms)
        self.A_inv = np.stack([np.eye(self.dim) / self.ridge] * self.n_arms)
        self.b = np.zeros((self.n_arms, self.dim))

    def _x(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=float)
        return np.concatenate(([1.0], x)) if self.intercept else x

    def theta(self) -> np.ndarray:
        return np.einsum("kij,kj->ki", self.A_inv, self.b)

    def scores(self, X: np.ndarray) -> np.ndarray:
        theta = self.theta()
        mean = X @ theta.T
        var = np.einsum("ni,kij,nj->nk", X, self.A_inv, X)
        return mean + self.alpha * np.sqrt(np.maximum(var, 0.0))

    def choose(self, contexts, rng):
        X = np.stack([self._x(c.values) for c in contexts])
        return np.argmax(self.scores(X), axis=1).tolist()

    def update(self, decision, context, reward):
        arm = self.arm_index[decision.action]
        x = self._x(context.values)
        self.A[arm] += np.outer(x, x)
        self.b[arm] += reward * x
        Ax = self.A_inv[arm] @ x
        self.A_inv[arm] -= np.outer(Ax, Ax) / (1.0 + x @ Ax)

    def spec(self):
        return {"name": self.name, "alpha": self.alpha, "ridge": self.ridge, "intercept": self.intercept}

    def state_dict(self):
        return {"n_features": self.dim - int(self.intercept), "A": self.A.tolist(), "A_inv": self.A_inv.tolist(), "b": self.b.tolist()}

    def load_state_dict(self, state):
        self.A = np.array(state["A"], dtype=float)
        self.A_inv = np.array(state["A_inv"], dtype=float)
        self.b = np.array(state["b"], dtype=float)


def make_policy(spec: dict, action_set, n_features: int = 0) -> Policy:
    spec = dict(spec)
    name = spec.pop("name")
    if name in ("never_nudge", "always_nudge", "every_k_days"):
        return FixedPolicy(action_set, name=name, **spec)
    if name == "epsilon_greedy":
        return EpsilonGreedy(action_set, **spec)
    if name == "thompson_bernoulli":
        return ThompsonBernoulli(action_set, **spec)
    if name == "lin_ucb":
        return LinUCB(action_set, n_features, **spec)
    raise ValueError(f"unknown policy {name!r}")


def policy_from_dict(d: dict) -> Policy:
    state = d["state"]
    policy = make_policy(d["spec"], d["action_set"], state.get("n_features", 0))
    policy.load_state_dict(state)
    return policy


def decide(policy: Policy, contexts, rng) -> list[Decision]:
    return policy.decide(contexts, rng)


def update(policy: Policy, decision: Decision, context: ContextVector, reward: float) -> Policy:
    policy.update(decision, context, reward)
    return policy
