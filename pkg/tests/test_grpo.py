import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerparse.grpo import (ActionSpace, EmptyCorpus, GrpoConfig, StructureMismatch, ToyPolicy,
                             clipped_surrogate, expected_reward, group_advantages, grpo_loss,
                             grpo_step, kl_to_reference, replace_config, sample_group,
                             table_reward_fn, train)

SPACE = ActionSpace((64, 64), ("aa", "bb", "cc", "dd"), 4, ("boxfont", "boxfont-wide"), (8.0, 12.0))


def random_policy(rng, ids=("img",), scale=1.0):
    return ToyPolicy(SPACE, {i: [rng.normal(0, scale, n) for n in SPACE.sizes_per_factor()] for i in ids})


def constant_reward(image_id, choices, protocol):
    return 0.5


def index_reward(image_id, choices, protocol):
    """Favors low text index and high x-bin; cheap and renderer-free."""
    return float(-choices[0] + choices[1])


# --- sampling -----------------------------------------------------------------

def test_group_size():
    g = sample_group(ToyPolicy.uniform(SPACE, ["img"]), "img", GrpoConfig(), 0)
    assert len(g) == 16 and len(g.protocols) == 16
    assert g.protocols[0].instances[0].semantic.text in SPACE.vocab
    np.testing.assert_array_equal(g.logp, g.logp_old)


def test_greedy_limit(rng):
    pol = random_policy(rng)
    g = sample_group(pol, "img", GrpoConfig(temperature=1e-6), rng)
    argmax = [int(np.argmax(z)) for z in pol.logits["img"]]
    assert (g.choices == argmax).all()


def test_uniform_sampling_frequencies():
    pol = ToyPolicy.uniform(SPACE, ["img"])
    g = sample_group(pol, "img", GrpoConfig(group_size=100_000), 5, build_protocols=False)
    freq = np.bincount(g.choices[:, 0], minlength=4) / 100_000
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_logp_uses_temperature_one(rng):
    pol = random_policy(rng)
    g = sample_group(pol, "img", GrpoConfig(group_size=4, temperature=0.3), rng)
    for c, lp in zip(g.choices, g.logp):
        direct = sum(math.log(np.exp(z[k]) / np.exp(z).sum()) for z, k in zip(pol.logits["img"], c))
        assert lp == pytest.approx(direct, abs=1e-12)


# --- advantages and surrogate ----------------------------------------------------

def test_advantage_examples():
    assert group_advantages([1, 1, 1, 1]).tolist() == [0.0, 0.0, 0.0, 0.0]
    a = group_advantages([0, 1], 1e-8)
    assert abs(a[0] + 1) <= 2e-8 and abs(a[1] - 1) <= 2e-8


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=32))
def test_advantage_centering(r):
    a = group_advantages(r)
    assert abs(a.sum()) <= 1e-9 * len(r)
    sigma = np.std(r)
    if sigma > 1e-3:
        assert np.std(a) == pytest.approx(sigma / (sigma + 1e-8), abs=1e-9)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=16), st.floats(-5, 5))
def test_advantage_shift_invariance(r, shift):
    if np.std(r) < 1e-3:
        return  # a shift can round away differences this small
    np.testing.assert_allclose(group_advantages(np.array(r) + shift), group_advantages(r),
                               rtol=0, atol=1e-6)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=16), st.floats(0.1, 10))
def test_advantage_scale_invariance_up_to_eps(r, scale):
    r = np.array(r)
    sigma = np.std(r)
    if sigma < 1e-3:
        return
    # scaling changes only the sigma / (sigma + eps) factor
    tol = 4e-8 / min(sigma, scale * sigma) * np.sqrt(len(r))
    np.testing.assert_allclose(group_advantages(scale * r), group_advantages(r), rtol=0, atol=tol)


def test_clipped_surrogate_examples():
    assert clipped_surrogate(1.0, 1.0, 0.2) == 1.0
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_surrogate(0.5, 1.0, 0.2) == 0.5
    assert clipped_surrogate(1.5, -1.0, 0.2) == -1.5


# --- KL -------------------------------------------------------------------------

def test_kl_examples():
    sp = ActionSpace((8, 8), ("a", "b"), 2, ("boxfont", "boxfont-wide"), (4.0, 5.0))
    zero = [np.zeros(2)] * 5
    p = ToyPolicy(sp, {"i": [z.copy() for z in zero]})
    q = ToyPolicy(sp, {"i": [np.log([0.25, 0.75])] + [z.copy() for z in zero[1:]]})
    assert kl_to_reference(p, p) == 0.0
    assert kl_to_reference(p, q) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-12)
    assert kl_to_reference(p, q) == pytest.approx(0.143841, abs=1e-6)


def test_kl_nonnegative(rng):
    for _ in range(1000):
        assert kl_to_reference(random_policy(rng, scale=3), random_policy(rng, scale=3)) >= 0.0


def test_kl_structure_mismatch(rng):
    with pytest.raises(StructureMismatch):
        kl_to_reference(random_policy(rng, ("a",)), random_policy(rng, ("b",)))
    other = ActionSpace((64, 64), ("aa", "bb"), 4, ("boxfont", "boxfont-wide"), (8.0, 12.0))
    with pytest.raises(StructureMismatch):
        kl_to_reference(random_policy(rng), ToyPolicy.uniform(other, ["img"]))


def test_policy_invariants():
    with pytest.raises(ValueError):
        ToyPolicy.uniform(ActionSpace((8, 8), ("only",), 2, ("boxfont", "x"), (1.0, 2.0)), ["i"])
    bad = ToyPolicy.uniform(SPACE, ["i"]).logits
    bad["i"][0][0] = math.nan
    with pytest.raises(ValueError):
        ToyPolicy(SPACE, bad)


# --- loss gradient ----------------------------------------------------------------

def filled_group(policy, image_id, cfg, rng):
    g = sample_group(policy, image_id, cfg, rng, build_protocols=False)
    g.rewards = rng.random(len(g))
    g.advantages = group_advantages(g.rewards)
    return g


def test_loss_gradient_matches_finite_differences(rng):
    ref = random_policy(rng, ("a", "b"))
    old = random_policy(rng, ("a", "b"))
    cfg = GrpoConfig(group_size=12, kl_beta=0.3, clip_eps=0.2)
    groups = [filled_group(old, i, cfg, rng) for i in ("a", "b")]
    # Move away from the rollout policy so some ratios are clipped and some are not.
    cur = old.with_flat(old.flat() + rng.normal(0, 0.15, old.flat().size))
    _, grads, stats = grpo_loss(cur, ref, groups, cfg)
    assert 0.0 < stats["clip_frac"] < 1.0
    analytic = np.concatenate([z for k in sorted(grads) for z in grads[k]])
    v, h = cur.flat(), 1e-6
    numeric = np.empty_like(v)
    for i in range(v.size):
        up, down = v.copy(), v.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (grpo_loss(cur.with_flat(up), ref, groups, cfg)[0]
                      - grpo_loss(cur.with_flat(down), ref, groups, cfg)[0]) / (2 * h)
    err = np.abs(analytic - numeric).max() / max(np.abs(analytic).max(), np.abs(numeric).max())
    assert err <= 1e-4


def test_on_policy_loss_is_weighted_logprob(rng):
    pol = random_policy(rng)
    cfg = GrpoConfig(group_size=8, kl_beta=0.0)
    g = filled_group(pol, "img", cfg, rng)
    loss, _, stats = grpo_loss(pol, pol, [g], cfg)
    assert stats["clip_frac"] == 0.0
    assert loss == pytest.approx(-(g.advantages * np.exp(g.logp - g.logp_old)).sum(), abs=1e-12)


# --- steps and training -------------------------------------------------------------

def test_constant_rewards_leave_parameters_unchanged():
    pol = ToyPolicy.uniform(SPACE, ["img"])
    new, stats = grpo_step(pol, pol.copy(), ["img"], GrpoConfig(learning_rate=1.0), constant_reward,
                           np.random.default_rng(0))
    assert np.array_equal(new.flat(), pol.flat())
    assert stats["mean_abs_adv"] == 0.0 and stats["kl"] == 0.0


def test_clip_fraction_on_and_off_policy():
    pol = ToyPolicy.uniform(SPACE, ["img"])
    _, on = grpo_step(pol, pol.copy(), ["img"], GrpoConfig(learning_rate=5.0), index_reward,
                      np.random.default_rng(0))
    assert on["clip_frac"] == 0.0
    _, off = grpo_step(pol, pol.copy(), ["img"], GrpoConfig(learning_rate=5.0, inner_epochs=4),
                       index_reward, np.random.default_rng(0))
    assert off["clip_frac"] > 0.0


def test_failing_reward_counts_as_zero():
    def flaky(image_id, choices, protocol):
        if choices[0] == 0:
            raise RuntimeError("cannot score")
        return 1.0

    pol = ToyPolicy.uniform(SPACE, ["img"])
    _, stats = grpo_step(pol, pol, ["img"], GrpoConfig(group_size=64), flaky, np.random.default_rng(1))
    assert 0.0 < stats["mean_reward"] < 1.0


def test_train_zero_steps_and_empty():
    pol = ToyPolicy.uniform(SPACE, ["img"])
    out, log = train(["img"], GrpoConfig(total_steps=0), index_reward, policy=pol)
    assert log == [] and np.array_equal(out.flat(), pol.flat())
    with pytest.raises(EmptyCorpus):
        train([], GrpoConfig(), index_reward, space=SPACE)


def test_train_is_deterministic(tmp_path):
    cfg = GrpoConfig(total_steps=15, batch_size=2, learning_rate=0.05, seed=3)
    a, la = train(["x", "y", "z"], cfg, index_reward, space=SPACE, log_path=tmp_path / "a.jsonl")
    b, lb = train(["x", "y", "z"], cfg, index_reward, space=SPACE, log_path=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert la == lb and np.array_equal(a.flat(), b.flat())
    rows = [json.loads(x) for x in (tmp_path / "a.jsonl").read_text().splitlines()]
    assert [r["step"] for r in rows] == list(range(1, 16))
    assert set(rows[0]) == {"step", "mean_reward", "kl", "clip_frac"}


def test_checkpoint_round_trip(tmp_path, rng):
    pol = random_policy(rng, ("a", "b"))
    pol.save(tmp_path / "p.json")
    back = ToyPolicy.load(tmp_path / "p.json")
    assert back.space == pol.space and np.array_equal(back.flat(), pol.flat())
    d = json.loads((tmp_path / "p.json").read_text())
    assert [f["name"] for f in d["factors"]] == ["text", "x", "y", "font", "size"]
    assert d["factors"][0]["labels"] == list(SPACE.vocab)


def test_config_defaults():
    c = GrpoConfig()
    assert (c.group_size, c.learning_rate, c.total_steps, c.batch_size) == (16, 1e-4, 2000, 32)
    assert (c.clip_eps, c.kl_beta, c.temperature, c.adv_eps, c.inner_epochs) == (0.2, 0.01, 0.8, 1e-8, 1)
    for bad in [dict(group_size=0), dict(clip_eps=0.0), dict(temperature=0.0)]:
        with pytest.raises(ValueError):
            replace_config(c, **bad)


# --- toy task -----------------------------------------------------------------------

def test_toy_task_target_is_optimal(toy):
    task, table = toy
    assert table[task.target] == pytest.approx(1.0, abs=1e-6)
    assert table.max() == table[task.target]
    assert ((0.0 <= table) & (table <= 1.0)).all()


def test_reward_rises_over_first_fifty_steps(toy):
    task, table = toy
    fn = table_reward_fn({task.image_id: table})
    rises = 0
    for seed in range(20):
        start = ToyPolicy.uniform(task.space, [task.image_id])
        end, _ = train([task.image_id], GrpoConfig(total_steps=50, seed=seed), fn, policy=start)
        rises += expected_reward(end, task.image_id, table, 0.8) > expected_reward(
            start, task.image_id, table, 0.8)
    assert rises >= 18


def test_kl_penalty_limits_drift(toy):
    task, table = toy
    fn = table_reward_fn({task.image_id: table})
    start = ToyPolicy.uniform(task.space, [task.image_id])
    kls = []
    for beta in (0.0, 0.01):
        end, _ = train([task.image_id], GrpoConfig(total_steps=100, learning_rate=0.05, kl_beta=beta,
                                                   seed=4), fn, policy=start)
        kls.append(kl_to_reference(end, start))
    assert kls[0] >= kls[1]
