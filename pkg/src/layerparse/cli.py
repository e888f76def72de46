"""Batch command line: ``layerparse <command> [flags]``.

Machine-readable results go to stdout as JSON; diagnostics go to stderr.
Exit codes: 0 success, 1 validation or domain error, 2 I/O error, 3 internal
failure.  ``LAYERPARSE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from layerparse import grpo, lta
from layerparse.eval import AttrThresholds, CorpusKnobs, MissingPrediction, evaluate, generate_corpus
from layerparse.eval.io import load_corpus, load_predictions, save_corpus
from layerparse.protocol import ProtocolError, RangeError, parse_protocol, validate
from layerparse.raster import DimensionMismatch, RasterRGBA, read_png, write_png
from layerparse.render import FontNotFound, get_glyph_source, render_text_layer
from layerparse.render.bezier import DegenerateCurve
from layerparse.reward import RewardWeights, context_from_protocol, parser_reward

log = logging.getLogger("layerparse")

OK, DOMAIN, IO, INTERNAL = 0, 1, 2, 3


class DomainError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _read_protocol(path):
    return parse_protocol(Path(path).read_bytes())


def _read_png(path) -> RasterRGBA:
    try:
        return read_png(path)
    except OSError:
        raise
    except Exception as e:  # Pillow raises assorted errors for undecodable files
        raise OSError(f"cannot decode {path}: {e}") from e


def cmd_validate(args) -> int:
    try:
        p = _read_protocol(args.protocol)
    except RangeError as e:
        for v in e.violations:
            print(v, file=sys.stderr)
        return DOMAIN
    violations = validate(p)
    for v in violations:
        print(v, file=sys.stderr)
    return DOMAIN if violations else OK


def cmd_render(args) -> int:
    glyphs = get_glyph_source(args.font_source)
    p = _read_protocol(args.protocol)
    img = render_text_layer(p, glyphs)
    write_png(img, args.out)
    _emit({"out": str(args.out), "width": img.width, "height": img.height})
    return OK


def cmd_compose(args) -> int:
    from layerparse.eval import compose_layers

    bg = _read_png(args.bg)
    sticker = _read_png(args.sticker) if args.sticker else None
    text = _read_png(args.text) if args.text else None
    out = compose_layers(bg, sticker, text)
    write_png(out, args.out)
    _emit({"out": str(args.out), "width": out.width, "height": out.height})
    return OK


def _size(s: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in s.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {s!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("canvas dimensions must be positive")
    return w, h


def cmd_gen_corpus(args) -> int:
    if args.count < 1:
        raise DomainError("--count must be >= 1")
    knobs = CorpusKnobs(args.min_instances, args.max_instances, args.curved_fraction,
                        args.max_stickers)
    items = generate_corpus(args.seed, args.count, args.size, knobs)
    save_corpus(items, args.out)
    _emit({"out": str(args.out), "count": len(items), "seed": args.seed})
    return OK


def _weights(s: str) -> RewardWeights:
    parts = s.split(",")
    if len(parts) != 3:
        raise DomainError(f"--weights needs three comma-separated numbers, got {s!r}")
    try:
        return RewardWeights(*(float(x) for x in parts))
    except ValueError as e:
        raise DomainError(str(e)) from None


def cmd_reward(args) -> int:
    w = _weights(args.weights)
    design = _read_png(args.input)
    pred = _read_protocol(args.protocol)
    ref = Path(args.ref)
    ref_layer = _read_png(ref / "text.png")
    ref_proto = _read_protocol(ref / "protocol.json")
    ctx = context_from_protocol(design, ref_layer, ref_proto)
    b = parser_reward(design, pred, ctx, w)
    _emit(b.to_json())
    return OK


def cmd_evaluate(args) -> int:
    th = AttrThresholds()
    if args.thresholds:
        th = AttrThresholds.from_dict(json.loads(Path(args.thresholds).read_text()))
    corpus = load_corpus(args.corpus)
    preds = load_predictions(args.pred)
    report = evaluate(preds, corpus, th)
    Path(args.out).write_text(json.dumps(report.to_json(), sort_keys=True, indent=1))
    _emit({k: getattr(report, k) for k in report.KEYS})
    return OK


def corpus_space(items, grid: int = 8, vocab_size: int = 8) -> grpo.ActionSpace:
    """Action space covering a corpus: each item's first string plus filler words."""
    sizes = {it.design.shape for it in items}
    if len(sizes) != 1:
        raise DomainError("grpo-train needs a corpus with one canvas size")
    (h, w), = sizes
    words = []
    for it in items:
        if it.text_protocol.instances:
            t = it.text_protocol.instances[0].semantic.text
            if t not in words:
                words.append(t)
    filler = grpo.make_toy_task(0, vocab_size=max(vocab_size, 2)).space.vocab
    for f in filler:
        if len(words) >= vocab_size:
            break
        if f not in words:
            words.append(f)
    scale = min(w, h) / 128.0
    return grpo.ActionSpace((w, h), tuple(words), grid,
                            ("boxfont", "boxfont-wide", "boxfont-narrow", "boxfont-tall"),
                            tuple(round(s * scale, 3) for s in (12.0, 16.0, 20.0, 24.0)))


def _cached_reward_fn(by_id: dict) -> grpo.RewardFn:
    """Reward against ``by_id[image_id] = (design, context)``, memoized per choice tuple."""
    cache: dict = {}

    def fn(image_id, choices, protocol):
        key = (image_id, tuple(int(c) for c in choices))
        if key not in cache:
            design, ctx = by_id[image_id]
            cache[key] = parser_reward(design, protocol, ctx).total
        return cache[key]
    return fn


def cmd_grpo_train(args) -> int:
    cfg = grpo.GrpoConfig(group_size=args.group, learning_rate=args.lr, total_steps=args.steps,
                          batch_size=args.batch, clip_eps=args.clip, kl_beta=args.kl,
                          temperature=args.temp, inner_epochs=args.inner_epochs, seed=args.seed)
    if args.corpus:
        items = load_corpus(args.corpus)
        if not items:
            raise DomainError(f"no corpus items under {args.corpus}")
        space = corpus_space(items)
        ids = [it.id for it in items]
        fn = _cached_reward_fn({
            it.id: (it.design, context_from_protocol(it.design, it.text_layer, it.text_protocol))
            for it in items})
    else:
        task = grpo.make_toy_task(args.seed)
        space, ids = task.space, [task.image_id]
        fn = _cached_reward_fn({task.image_id: (task.design, task.context)})
    policy, rows = grpo.train(ids, cfg, fn, space=space, log_path=args.log)
    if args.out:
        policy.save(args.out)
    last = rows[-1] if rows else {"mean_reward": None, "kl": 0.0, "clip_frac": 0.0}
    _emit({"steps": cfg.total_steps, "images": len(ids), "final_mean_reward": last["mean_reward"],
           "kl": last["kl"], "clip_frac": last["clip_frac"]})
    return OK


def cmd_lta_check(args) -> int:
    if args.heads < 1 or args.d % args.heads:
        raise DomainError(f"--d {args.d} is not divisible by --heads {args.heads}")
    if args.n < 1 or args.d < 1:
        raise DomainError("--n and --d must be positive")
    report = lta.lta_grad_check(args.n, args.d, args.heads, args.seed)
    worst = max(report.values())
    _emit({"n": args.n, "d": args.d, "heads": args.heads, "seed": args.seed,
           "errors": report, "max_error": worst, "pass": worst <= args.tol})
    return OK if worst <= args.tol else INTERNAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="layerparse", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a protocol file")
    s.add_argument("--protocol", required=True)
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("render", help="render a protocol to a text-layer PNG")
    s.add_argument("--protocol", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--font-source", default="boxfont")
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("compose", help="composite text over sticker over background")
    s.add_argument("--bg", required=True)
    s.add_argument("--sticker")
    s.add_argument("--text")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_compose)

    s = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=_size, default=(512, 512))
    s.add_argument("--out", required=True)
    d = CorpusKnobs()
    s.add_argument("--min-instances", type=int, default=d.min_instances)
    s.add_argument("--max-instances", type=int, default=d.max_instances)
    s.add_argument("--curved-fraction", type=float, default=d.curved_fraction)
    s.add_argument("--max-stickers", type=int, default=d.max_stickers)
    s.set_defaults(fn=cmd_gen_corpus)

    s = sub.add_parser("reward", help="score a protocol against a design")
    s.add_argument("--input", required=True)
    s.add_argument("--protocol", required=True)
    s.add_argument("--ref", required=True, help="corpus item directory with text.png and protocol.json")
    s.add_argument("--weights", default="1,1,1")
    s.set_defaults(fn=cmd_reward)

    s = sub.add_parser("evaluate", help="score predicted layers against a corpus")
    s.add_argument("--pred", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--thresholds")
    s.set_defaults(fn=cmd_evaluate)

    c = grpo.GrpoConfig()
    s = sub.add_parser("grpo-train", help="train the toy policy with GRPO")
    s.add_argument("--corpus", help="corpus directory (default: built-in toy task)")
    s.add_argument("--steps", type=int, default=c.total_steps)
    s.add_argument("--group", type=int, default=c.group_size)
    s.add_argument("--lr", type=float, default=c.learning_rate)
    s.add_argument("--batch", type=int, default=c.batch_size)
    s.add_argument("--clip", type=float, default=c.clip_eps)
    s.add_argument("--kl", type=float, default=c.kl_beta)
    s.add_argument("--temp", type=float, default=c.temperature)
    s.add_argument("--inner-epochs", type=int, default=c.inner_epochs)
    s.add_argument("--seed", type=int, default=c.seed)
    s.add_argument("--out")
    s.add_argument("--log")
    s.set_defaults(fn=cmd_grpo_train)

    s = sub.add_parser("lta-check", help="finite-difference check of attention gradients")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--d", type=int, default=8)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(fn=cmd_lta_check)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LAYERPARSE_LOG", "WARNING").upper(),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return DOMAIN if e.code else OK
    try:
        return args.fn(args)
    except (DomainError, ProtocolError, FontNotFound, DegenerateCurve, DimensionMismatch,
            MissingPrediction, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return DOMAIN
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return IO
    except Exception:  # noqa: BLE001
        traceback.print_exc(file=sys.stderr)
        return INTERNAL


if __name__ == "__main__":
    sys.exit(main())
