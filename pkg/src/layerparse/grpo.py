"""Group Relative Policy Optimization over a factorized categorical protocol policy.

The policy emits a one-instance text protocol by picking, independently, a
string from a fixed vocabulary, an x and a y cell on a G x G grid, a font, and
a size.  Its parameters are the logits of those five categorical factors,
held separately for every training image.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from layerparse.protocol import (Alignment, Appearance, ColorSpec, Geometry, Relational, Semantic,
                                 TextInstance, TextProtocol)
from layerparse.raster import RasterRGBA, alpha_over
from layerparse.render import DEFAULT_GLYPHS, GlyphSource, render_text_layer
from layerparse.reward import RewardContext, context_from_protocol, parser_reward

FACTORS = ("text", "x", "y", "font", "size")


class StructureMismatch(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 16
    learning_rate: float = 1e-4
    total_steps: int = 2000
    batch_size: int = 32
    clip_eps: float = 0.2
    kl_beta: float = 0.01
    temperature: float = 0.8
    adv_eps: float = 1e-8
    inner_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be > 0")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.batch_size < 1 or self.inner_epochs < 1 or self.total_steps < 0:
            raise ValueError("batch_size and inner_epochs must be >= 1, total_steps >= 0")


@dataclass(frozen=True)
class ActionSpace:
    """Discretized protocol attributes; a choice tuple indexes each factor."""

    canvas: tuple[int, int]
    vocab: tuple[str, ...]
    grid: int
    fonts: tuple[str, ...]
    sizes: tuple[float, ...]
    fill: tuple[int, int, int] = (20, 20, 20)

    def labels(self) -> list[list]:
        xs = [self.cell_center(i, 0) for i in range(self.grid)]
        ys = [self.cell_center(i, 1) for i in range(self.grid)]
        return [list(self.vocab), xs, ys, list(self.fonts), list(self.sizes)]

    def sizes_per_factor(self) -> list[int]:
        return [len(self.vocab), self.grid, self.grid, len(self.fonts), len(self.sizes)]

    def cell_center(self, i: int, axis: int) -> float:
        return (i + 0.5) * self.canvas[axis] / self.grid

    def assemble(self, choices: Sequence[int], glyphs: GlyphSource = DEFAULT_GLYPHS) -> TextProtocol:
        """Protocol with one left-aligned instance whose box is centered on the chosen cell."""
        ti, xi, yi, fi, si = (int(c) for c in choices)
        text, font, size = self.vocab[ti], self.fonts[fi], float(self.sizes[si])
        w = sum(glyphs.advance(font, ord(c), size) for c in text) or size
        h = size * 1.2
        x = self.cell_center(xi, 0) - w / 2.0
        y = self.cell_center(yi, 1) - h / 2.0
        inst = TextInstance(Geometry(x, y, w, h), Semantic(text),
                            Appearance(font, size, ColorSpec.rgb(*self.fill)),
                            Relational(Alignment.LEFT, 0))
        return TextProtocol(self.canvas[0], self.canvas[1], (inst,))

    def to_json(self) -> dict:
        return {"canvas": list(self.canvas), "vocab": list(self.vocab), "grid": self.grid,
                "fonts": list(self.fonts), "sizes": list(self.sizes), "fill": list(self.fill)}

    @classmethod
    def from_json(cls, d: dict) -> ActionSpace:
        return cls(tuple(d["canvas"]), tuple(d["vocab"]), int(d["grid"]), tuple(d["fonts"]),
                   tuple(float(s) for s in d["sizes"]), tuple(d.get("fill", (20, 20, 20))))


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    shifted = z - m
    return shifted - math.log(np.exp(shifted).sum())


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class ToyPolicy:
    space: ActionSpace
    logits: dict[str, list[np.ndarray]]

    def __post_init__(self):
        sizes = self.space.sizes_per_factor()
        if any(n < 2 for n in sizes):
            raise ValueError("every factor needs at least two categories")
        for img, zs in self.logits.items():
            if [len(z) for z in zs] != sizes:
                raise StructureMismatch(f"logit shapes for {img!r} do not match the action space")
            if not all(np.all(np.isfinite(z)) for z in zs):
                raise ValueError(f"non-finite logits for {img!r}")

    @classmethod
    def uniform(cls, space: ActionSpace, image_ids: Sequence[str]) -> ToyPolicy:
        return cls(space, {i: [np.zeros(n) for n in space.sizes_per_factor()] for i in image_ids})

    def copy(self) -> ToyPolicy:
        return ToyPolicy(self.space, {k: [z.copy() for z in v] for k, v in self.logits.items()})

    def log_prob(self, image_id: str, choices: np.ndarray) -> np.ndarray:
        """Temperature-1 log-probability of each row of ``choices`` (K, F)."""
        choices = np.atleast_2d(choices)
        return sum(log_softmax(z)[choices[:, f]] for f, z in enumerate(self.logits[image_id]))

    def probs(self, image_id: str, temperature: float = 1.0) -> list[np.ndarray]:
        return [softmax(z / temperature) for z in self.logits[image_id]]

    def flat(self) -> np.ndarray:
        return np.concatenate([z for k in sorted(self.logits) for z in self.logits[k]])

    def with_flat(self, v: np.ndarray) -> ToyPolicy:
        out, pos = self.copy(), 0
        for k in sorted(out.logits):
            for z in out.logits[k]:
                z[...] = v[pos:pos + len(z)]
                pos += len(z)
        return out

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "factors": [{"name": n, "labels": lab} for n, lab in zip(FACTORS, self.space.labels())],
            "logits": {k: {n: [float(x) for x in z] for n, z in zip(FACTORS, v)}
                       for k, v in sorted(self.logits.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> ToyPolicy:
        space = ActionSpace.from_json(d["space"])
        logits = {k: [np.array(v[n], dtype=np.float64) for n in FACTORS]
                  for k, v in d["logits"].items()}
        return cls(space, logits)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path) -> ToyPolicy:
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class PolicyGroup:
    image_id: str
    choices: np.ndarray  # (K, F) int
    protocols: list[TextProtocol]
    logp: np.ndarray  # under the current parameters
    logp_old: np.ndarray  # under the rollout parameters
    rewards: np.ndarray = field(default=None)
    advantages: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.choices)


def _sample_categorical(rng: np.random.Generator, p: np.ndarray, n: int) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(p) - 1)


def sample_group(policy: ToyPolicy, image_id: str, cfg: GrpoConfig,
                 rng: np.random.Generator | int, glyphs: GlyphSource = DEFAULT_GLYPHS,
                 build_protocols: bool = True) -> PolicyGroup:
    """Draw ``cfg.group_size`` protocols from the tempered policy; rewards are left empty."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    K = cfg.group_size
    probs = policy.probs(image_id, cfg.temperature)
    choices = np.stack([_sample_categorical(rng, p, K) for p in probs], axis=1)
    logp = policy.log_prob(image_id, choices)
    protocols = [policy.space.assemble(c, glyphs) for c in choices] if build_protocols else []
    return PolicyGroup(image_id, choices, protocols, logp, logp.copy())


def group_advantages(rewards, eps: float = 1e-8) -> np.ndarray:
    """``(r - mean) / (population std + eps)``."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("a group needs at least one reward")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    d = r - r.mean()
    # second centering pass removes the rounding error of the mean, which the
    # small epsilon would otherwise amplify for nearly constant groups
    d -= d.mean()
    sigma = math.sqrt((d * d).mean())
    return d / (sigma + eps)


def clipped_surrogate(ratio: float, advantage: float, clip_eps: float) -> float:
    """``min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)``."""
    clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(ratio * advantage, clipped * advantage)


def _kl_factor(p_logits: np.ndarray, q_logits: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(p || q) for one categorical factor and its gradient w.r.t. p's logits."""
    lp, lq = log_softmax(p_logits), log_softmax(q_logits)
    p = np.exp(lp)
    d = lp - lq
    kl = float((p * d).sum())
    return kl, p * (d - kl)


def _check_structure(a: ToyPolicy, b: ToyPolicy, image_ids) -> None:
    if a.space.sizes_per_factor() != b.space.sizes_per_factor():
        raise StructureMismatch("factor sizes differ")
    for k in image_ids:
        if k not in a.logits or k not in b.logits:
            raise StructureMismatch(f"image {k!r} missing from one policy")


def kl_to_reference(policy: ToyPolicy, reference: ToyPolicy, image_ids=None) -> float:
    """Analytic KL(policy || reference), summed over factors and images."""
    ids = sorted(policy.logits) if image_ids is None else list(image_ids)
    if image_ids is None and set(policy.logits) != set(reference.logits):
        raise StructureMismatch("policies cover different images")
    _check_structure(policy, reference, ids)
    return sum(_kl_factor(z, q)[0] for k in ids
               for z, q in zip(policy.logits[k], reference.logits[k]))


def grpo_loss(policy: ToyPolicy, reference: ToyPolicy, groups: list[PolicyGroup],
              cfg: GrpoConfig) -> tuple[float, dict[str, list[np.ndarray]], dict]:
    """Total loss, its gradient w.r.t. every logit of the batch images, and ratio stats.

    Per image the loss is the negated sum of clipped surrogate terms over the
    group plus ``beta`` times the factor-summed KL to the reference; the batch
    loss averages over images.
    """
    B = len(groups)
    _check_structure(policy, reference, [g.image_id for g in groups])
    loss = 0.0
    grads: dict[str, list[np.ndarray]] = {}
    n_ratio = n_clipped = 0
    for g in groups:
        zs = policy.logits[g.image_id]
        logp = policy.log_prob(g.image_id, g.choices)
        rho = np.exp(logp - g.logp_old)
        A = g.advantages
        lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
        clipped = np.clip(rho, lo, hi)
        surr = np.minimum(rho * A, clipped * A)
        n_ratio += len(rho)
        n_clipped += int(np.count_nonzero((rho < lo) | (rho > hi)))
        # d(-surr)/d logp: the unclipped branch carries gradient, the clipped one is constant
        unclipped_active = rho * A <= clipped * A
        coef = np.where(unclipped_active, -rho * A, 0.0)
        img_loss = -float(surr.sum())
        gs = []
        for f, z in enumerate(zs):
            p = softmax(z)
            gz = np.bincount(g.choices[:, f], weights=coef, minlength=len(z)) - p * coef.sum()
            if cfg.kl_beta:
                kl, gkl = _kl_factor(z, reference.logits[g.image_id][f])
                img_loss += cfg.kl_beta * kl
                gz = gz + cfg.kl_beta * gkl
            gs.append(gz / B)
        loss += img_loss / B
        grads[g.image_id] = gs
    stats = {"clip_frac": n_clipped / max(n_ratio, 1)}
    return loss, grads, stats


RewardFn = Callable[[str, np.ndarray, TextProtocol], float]


def grpo_step(policy: ToyPolicy, reference: ToyPolicy, image_ids: Sequence[str], cfg: GrpoConfig,
              reward_fn: RewardFn, rng: np.random.Generator,
              glyphs: GlyphSource = DEFAULT_GLYPHS) -> tuple[ToyPolicy, dict]:
    """One rollout-score-update cycle over a batch of images.

    ``reward_fn(image_id, choices, protocol)`` scores one candidate; an
    exception there counts as reward 0.
    """
    if not image_ids:
        raise EmptyCorpus("batch is empty")
    groups = []
    for img in image_ids:
        g = sample_group(policy, img, cfg, rng, glyphs)
        rewards = []
        for c, proto in zip(g.choices, g.protocols):
            try:
                rewards.append(float(reward_fn(img, c, proto)))
            except Exception:  # noqa: BLE001 - unrenderable candidates rank last
                rewards.append(0.0)
        g.rewards = np.array(rewards)
        g.advantages = group_advantages(g.rewards, cfg.adv_eps)
        groups.append(g)

    new = policy.copy()
    clip_fracs = []
    for _ in range(cfg.inner_epochs):
        _, grads, st = grpo_loss(new, reference, groups, cfg)
        clip_fracs.append(st["clip_frac"])
        for img, gs in grads.items():
            for z, gz in zip(new.logits[img], gs):
                z -= cfg.learning_rate * gz
    all_r = np.concatenate([g.rewards for g in groups])
    all_a = np.concatenate([g.advantages for g in groups])
    stats = {
        "mean_reward": float(all_r.mean()),
        "mean_abs_adv": float(np.abs(all_a).mean()),
        "kl": kl_to_reference(new, reference),
        "clip_frac": float(np.mean(clip_fracs)),
    }
    return new, stats


def train(image_ids: Sequence[str], cfg: GrpoConfig, reward_fn: RewardFn,
          policy: ToyPolicy | None = None, space: ActionSpace | None = None,
          log_path=None, glyphs: GlyphSource = DEFAULT_GLYPHS) -> tuple[ToyPolicy, list[dict]]:
    """Run ``cfg.total_steps`` GRPO steps on seeded mini-batches of ``min(B, |corpus|)`` images.

    The reference policy is the initial policy.  Each log row holds
    ``step``, ``mean_reward``, ``kl`` and ``clip_frac``; with ``log_path`` the
    rows are also written as JSONL.
    """
    ids = list(image_ids)
    if not ids:
        raise EmptyCorpus("corpus is empty")
    if policy is None:
        if space is None:
            raise ValueError("need an initial policy or an action space")
        policy = ToyPolicy.uniform(space, ids)
    reference = policy.copy()
    rng = np.random.default_rng(cfg.seed)
    bsz = min(cfg.batch_size, len(ids))
    log = []
    fh = open(log_path, "w") if log_path is not None else None
    try:
        for step in range(1, cfg.total_steps + 1):
            batch = [ids[i] for i in rng.choice(len(ids), size=bsz, replace=False)]
            policy, st = grpo_step(policy, reference, batch, cfg, reward_fn, rng, glyphs)
            row = {"step": step, "mean_reward": st["mean_reward"], "kl": st["kl"],
                   "clip_frac": st["clip_frac"]}
            log.append(row)
            if fh is not None:
                fh.write(json.dumps(row) + "\n")
    finally:
        if fh is not None:
            fh.close()
    return policy, log


def expected_reward(policy: ToyPolicy, image_id: str, table: np.ndarray,
                    temperature: float = 1.0) -> float:
    """Exact expected reward given rewards for every joint choice, ``table[t, x, y, font, size]``."""
    p = policy.probs(image_id, temperature)
    return float(np.einsum("a,b,c,d,e,abcde->", *p, table))


def config_dict(cfg: GrpoConfig) -> dict:
    return asdict(cfg)


def replace_config(cfg: GrpoConfig, **kw) -> GrpoConfig:
    d = copy.copy(asdict(cfg))
    d.update(kw)
    return GrpoConfig(**d)


# ---------------------------------------------------------------------------
# Toy task: one design, a small vocabulary, a coarse position grid


@dataclass(frozen=True, eq=False)
class ToyTask:
    space: ActionSpace
    image_id: str
    design: RasterRGBA
    context: RewardContext
    target: tuple[int, ...]

    def reward(self, choices: Sequence[int], glyphs: GlyphSource = DEFAULT_GLYPHS) -> float:
        return parser_reward(self.design, self.space.assemble(choices, glyphs), self.context,
                             glyphs=glyphs).total


def make_toy_task(seed: int = 0, vocab_size: int = 8, grid: int = 8,
                  fonts: Sequence[str] = ("boxfont", "boxfont-wide", "boxfont-narrow", "boxfont-tall"),
                  sizes: Sequence[float] = (12.0, 16.0, 20.0, 24.0),
                  canvas: tuple[int, int] = (128, 128),
                  glyphs: GlyphSource = DEFAULT_GLYPHS) -> ToyTask:
    """A single design whose text is one instance expressible in the action space."""
    rng = np.random.default_rng(seed)
    words: list[str] = []
    while len(words) < vocab_size:
        n = int(rng.integers(3, 6))
        w = "".join(chr(ord("a") + int(i)) for i in rng.integers(0, 26, n))
        if w not in words:
            words.append(w)
    space = ActionSpace(tuple(canvas), tuple(words), grid, tuple(fonts), tuple(float(s) for s in sizes))
    n_text, _, _, n_font, n_size = space.sizes_per_factor()
    # keep the target cell away from the border so the text stays on canvas
    target = (int(rng.integers(0, n_text)), int(rng.integers(2, grid - 2)),
              int(rng.integers(2, grid - 2)), int(rng.integers(0, n_font)),
              int(rng.integers(0, n_size)))
    bg_rgb = tuple(int(v) for v in rng.integers(170, 256, 3))
    background = RasterRGBA.filled(canvas[0], canvas[1], bg_rgb + (255,))
    proto = space.assemble(target, glyphs)
    text = render_text_layer(proto, glyphs)
    design = alpha_over(text, background)
    ctx = context_from_protocol(design, text, proto)
    return ToyTask(space, f"toy_{seed:04d}", design, ctx, target)


def reward_table(task: ToyTask, glyphs: GlyphSource = DEFAULT_GLYPHS) -> np.ndarray:
    """Reward of every joint choice, indexed ``[text, x, y, font, size]``."""
    shape = task.space.sizes_per_factor()
    out = np.empty(shape)
    for idx in np.ndindex(*shape):
        out[idx] = task.reward(idx, glyphs)
    return out


def table_reward_fn(tables: dict[str, np.ndarray]) -> RewardFn:
    def fn(image_id, choices, protocol):
        return float(tables[image_id][tuple(int(c) for c in choices)])
    return fn
