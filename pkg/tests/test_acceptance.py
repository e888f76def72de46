"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import hashlib
import math
import time

import numpy as np
import pytest

from layerparse.eval import evaluate, generate_corpus, ground_truth_predictions
from layerparse.grpo import (GrpoConfig, ToyPolicy, clipped_surrogate, expected_reward,
                             group_advantages, kl_to_reference, table_reward_fn, train)
from layerparse.lta import LtaParams, lta_forward, lta_grad_check
from layerparse.protocol import ColorKind, ColorSpec
from layerparse.raster import BinaryMask, RasterRGBA, iou, mask_from_alpha, masked_l1
from layerparse.render import bezier_point, render_text_layer
from layerparse.reward import (RewardContext, RewardWeights, context_from_protocol, levenshtein_sim,
                               parser_reward, r_pix)
from test_render import GOLDEN, GOLDEN_SHA256, de_casteljau, random_bending


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_round_trip(report):
    t0 = time.perf_counter()
    corpus = generate_corpus(42, 200, (512, 512))
    worst = 0.0
    for it in corpus:
        ctx = context_from_protocol(it.design, it.text_layer, it.text_protocol)
        worst = max(worst, abs(parser_reward(it.design, it.text_protocol, ctx).total - 1.0))
    r = evaluate(ground_truth_predictions(corpus), corpus)
    elapsed = time.perf_counter() - t0
    perfect = (r.t_iou == r.s_iou == r.font_accuracy == r.attr_accuracy == 1.0
               and r.rgb_l1_text == r.rgb_l1_sticker == r.rgb_l1_bg == r.rgb_l1_avg == 0.0)
    ok = worst <= 1e-6 and perfect and elapsed <= 120
    report(1, ok, f"max |reward-1| = {worst:.2e}, perfect report = {perfect}, {elapsed:.1f}s")


def l1_oracle(img, layer, mask):
    """Per-pixel loop: plain difference, or distance to the admissible interval on partial pixels."""
    num = 0.0
    for y in range(img.height):
        for x in range(img.width):
            m = bool(mask.bits[y, x])
            a = int(layer.pixels[y, x, 3]) / 255
            for c in range(3):
                i = int(img.pixels[y, x, c]) / 255
                lo = int(layer.pixels[y, x, c]) / 255 * a
                if m and 0 < a < 1:
                    d = max(lo - i, 0.0) + max(i - (lo + 1 - a), 0.0)
                    num += max(d - 0.5 / 255, 0.0)
                else:
                    num += abs((i if m else 0.0) - lo)
    return num / (3 * mask.popcount() + 1e-8)


def lev_oracle(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    n = max(len(a), len(b))
    return 1.0 if n == 0 else 1.0 - d[len(a)][len(b)] / n


def test_criterion_2_reward_oracles(report):
    rng = np.random.default_rng(2)
    pix_err = 0.0
    for _ in range(100):
        img = RasterRGBA(rng.integers(0, 256, (8, 8, 4), dtype=np.uint8))
        layer_px = rng.integers(0, 256, (8, 8, 4), dtype=np.uint8)
        layer_px[..., 3] = rng.choice([0, 255, 77, 200], (8, 8))
        layer = RasterRGBA(layer_px)
        ctx = RewardContext(img, BinaryMask(rng.random((8, 8)) < 0.5))
        expected = math.exp(-l1_oracle(img, layer, mask_from_alpha(layer)))
        pix_err = max(pix_err, abs(r_pix(ctx, layer) - expected))

    iou_bad = 0
    for _ in range(1000):
        shape = tuple(rng.integers(1, 12, 2))
        a, b = rng.random(shape) < rng.random(), rng.random(shape) < rng.random()
        inter = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x and y)
        union = sum(1 for x, y in zip(a.ravel(), b.ravel()) if x or y)
        iou_bad += iou(BinaryMask(a), BinaryMask(b)) != (1.0 if union == 0 else inter / union)

    alphabet = list("abcdeé日 ")
    lev_bad = 0
    for _ in range(10_000):
        a = "".join(rng.choice(alphabet, int(rng.integers(0, 33))))
        b = "".join(rng.choice(alphabet, int(rng.integers(0, 33))))
        lev_bad += levenshtein_sim(a, b) != lev_oracle(a, b)
    ok = pix_err <= 1e-12 and iou_bad == 0 and lev_bad == 0
    report(2, ok, f"r_pix max err {pix_err:.1e}, iou mismatches {iou_bad}, levenshtein mismatches {lev_bad}")


def test_criterion_3_advantages(report):
    rng = np.random.default_rng(3)
    K = 16
    worst_sum = worst_shift = 0.0
    for _ in range(1000):
        r = rng.random(K)
        a = group_advantages(r)
        worst_sum = max(worst_sum, abs(a.sum()))
        shifted = group_advantages(r + rng.uniform(-3, 3))
        worst_shift = max(worst_shift, np.abs(shifted - a).max())
    constant_ok = all(not group_advantages(np.full(K, v)).any() for v in rng.uniform(-10, 10, 100))
    ok = worst_sum <= 1e-9 * K and constant_ok and worst_shift <= 1e-12
    report(3, ok, f"max |sum A| {worst_sum:.1e}, constant groups zero = {constant_ok}, "
                  f"max shift change {worst_shift:.1e}")


def test_criterion_4_clipping(report, toy):
    eps = 0.2
    bad = 0
    for rho in np.linspace(0.01, 3.0, 100):
        for A in np.linspace(-2.0, 2.0, 100):
            clipped = min(max(rho, 1 - eps), 1 + eps)
            bad += clipped_surrogate(float(rho), float(A), eps) != min(rho * A, clipped * A)
    task, table = toy
    _, log = train([task.image_id], GrpoConfig(total_steps=30, learning_rate=0.5, seed=1),
                   table_reward_fn({task.image_id: table}),
                   policy=ToyPolicy.uniform(task.space, [task.image_id]))
    on_policy_clip = max(r["clip_frac"] for r in log)
    ok = bad == 0 and on_policy_clip == 0.0
    report(4, ok, f"grid mismatches {bad} of 10000, max on-policy clip fraction {on_policy_clip}")


def _runs(task, table, **overrides):
    fn = table_reward_fn({task.image_id: table})
    out = []
    for seed in range(20):
        start = ToyPolicy.uniform(task.space, [task.image_id])
        cfg = GrpoConfig(total_steps=500, seed=seed, **overrides)
        end, log = train([task.image_id], cfg, fn, policy=start)
        out.append({
            "initial": expected_reward(start, task.image_id, table, cfg.temperature),
            "final": expected_reward(end, task.image_id, table, cfg.temperature),
            "kl": kl_to_reference(end, start),
        })
    return out


def test_criterion_5_grpo_learning(report, toy):
    task, table = toy
    t0 = time.perf_counter()
    base = _runs(task, table)
    k8, k1 = _runs(task, table, group_size=8), _runs(task, table, group_size=1)
    elapsed = time.perf_counter() - t0
    learned = sum(r["initial"] <= 0.5 and r["final"] >= 0.9 for r in base)
    k_wins = sum(a["final"] >= b["final"] for a, b in zip(k8, k1))
    ok = learned >= 18 and k_wins >= 16 and elapsed <= 300
    finals = [r["final"] for r in base]
    report(5, ok, f"learned in {learned}/20 seeds (final expected reward "
                  f"{min(finals):.4f}..{max(finals):.4f} from {base[0]['initial']:.4f}), "
                  f"K=8 >= K=1 in {k_wins}/20, {elapsed:.1f}s")


def test_criterion_6_kl_direction(report, toy):
    task, table = toy
    with_kl, without = _runs(task, table), _runs(task, table, kl_beta=0.0)
    below = sum(a["kl"] < b["kl"] for a, b in zip(with_kl, without))
    report(6, below >= 18, f"beta=0.01 KL strictly below beta=0 in {below}/20 seeds")


def test_criterion_7_lta(report):
    errs = [max(lta_grad_check(4, 8, 2, 0).values()), max(lta_grad_check(16, 32, 4, 0).values())]
    rng = np.random.default_rng(7)
    tokens = rng.standard_normal((3, 6, 8))
    p = LtaParams(*(rng.standard_normal((8, 8)) for _ in range(4)), 2, rng.standard_normal(3))
    base = lta_forward(tokens, p)
    local = True
    for n in range(6):
        moved = tokens.copy()
        moved[:, n] += rng.standard_normal((3, 8))
        diff = lta_forward(moved, p) - base
        local &= not np.delete(diff, n, axis=1).any()
    p.alpha = np.full(3, -30.0)
    gate_err = np.abs(lta_forward(tokens, p) - tokens).max()
    ok = max(errs) <= 1e-4 and local and gate_err <= 1e-9
    report(7, ok, f"grad check {errs[0]:.1e} / {errs[1]:.1e}, locality exact = {local}, "
                  f"closed gate err {gate_err:.1e}")


def test_criterion_8_render_determinism(report):
    a, b = render_text_layer(GOLDEN), render_text_layer(GOLDEN)
    same = a.tobytes() == b.tobytes()
    golden = hashlib.sha256(a.tobytes()).hexdigest() == GOLDEN_SHA256
    rng = np.random.default_rng(8)
    worst = 0.0
    ends = True
    for _ in range(1000):
        bend = random_bending(rng)
        t = float(rng.random())
        p, q = bezier_point(bend, t), de_casteljau(bend.points, t)
        worst = max(worst, abs(p[0] - q[0]), abs(p[1] - q[1]))
        ends &= bezier_point(bend, 0.0) == bend.p0 and bezier_point(bend, 1.0) == bend.p3
    ok = same and golden and worst <= 1e-12 and ends
    report(8, ok, f"repeat identical = {same}, golden hash = {golden}, "
                  f"bezier max err {worst:.1e}, endpoints exact = {ends}")


def _recolor(c: ColorSpec) -> ColorSpec:
    r, g, b = c.stops[0] if c.kind is ColorKind.LINEAR_GRADIENT else c.solid
    return ColorSpec.rgb(255 - r, 255 - g, (b + 128) % 256)


def test_criterion_9_weight_sensitivity(report):
    from dataclasses import replace

    corpus = generate_corpus(9, 20, (192, 160))
    hold = strict = 0
    for it in corpus:
        pred = replace(it.text_protocol, instances=tuple(
            replace(i, appearance=replace(i.appearance, fill=_recolor(i.appearance.fill)))
            for i in it.text_protocol.instances))
        assert mask_from_alpha(render_text_layer(pred)) == it.text_mask
        ctx = context_from_protocol(it.design, it.text_layer, it.text_protocol)
        hold += parser_reward(it.design, pred, ctx, RewardWeights(0, 1, 1)).total == 1.0
        strict += parser_reward(it.design, pred, ctx, RewardWeights(1, 1, 1)).total < 1.0
    report(9, hold == 20 and strict == 20,
           f"0:1:1 total = 1 on {hold}/20, 1:1:1 total < 1 on {strict}/20")
