"""Score a few perturbed protocols against a ground-truth design with the parser reward."""

from dataclasses import replace

from layerparse.eval import generate_item
from layerparse.protocol import ColorSpec
from layerparse.reward import RewardWeights, context_from_protocol, parser_reward

item = generate_item(3, 0, 256, 192)
gt = item.text_protocol
ctx = context_from_protocol(item.design, item.text_layer, gt)


def edit(**kw):
    first = gt.instances[0]
    parts = {k: replace(getattr(first, k), **v) for k, v in kw.items()}
    return replace(gt, instances=(replace(first, **parts),) + gt.instances[1:])


g = gt.instances[0].geometry
cases = {
    "ground truth": gt,
    "typo": edit(semantic={"text": gt.instances[0].semantic.text[::-1]}),
    "shifted 12px": edit(geometry={"x": g.x + 12}),
    "wrong color": edit(appearance={"fill": ColorSpec.rgb(0, 255, 0)}),
}
for name, pred in cases.items():
    full = parser_reward(item.design, pred, ctx)
    no_pix = parser_reward(item.design, pred, ctx, RewardWeights(0, 1, 1))
    print(f"{name:13s}  r_pix={full.r_pix:.3f} r_loc={full.r_loc:.3f} r_sem={full.r_sem:.3f}"
          f"  total={full.total:.3f}  total(0:1:1)={no_pix.total:.3f}")
