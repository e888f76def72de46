"""Corpus and prediction directories on disk.

Corpus layout, one directory per item::

    <root>/<id>/design.png  bg.png  sticker.png  text.png  protocol.json  meta.json

A prediction directory mirrors it with ``protocol.json``, ``sticker.png`` and
``bg.png`` per item.
"""

from __future__ import annotations

import json
from pathlib import Path

from layerparse.eval.corpus import CorpusItem
from layerparse.eval.metrics import ItemPrediction
from layerparse.protocol import parse_protocol, serialize_protocol
from layerparse.raster import mask_from_alpha, read_png, write_png


def save_item(item: CorpusItem, root) -> Path:
    d = Path(root) / item.id
    d.mkdir(parents=True, exist_ok=True)
    write_png(item.design, d / "design.png")
    write_png(item.background, d / "bg.png")
    write_png(item.sticker, d / "sticker.png")
    write_png(item.text_layer, d / "text.png")
    (d / "protocol.json").write_bytes(serialize_protocol(item.text_protocol))
    (d / "meta.json").write_text(json.dumps(item.meta, sort_keys=True))
    return d


def save_corpus(items, root) -> None:
    Path(root).mkdir(parents=True, exist_ok=True)
    for it in items:
        save_item(it, root)


def load_item(d) -> CorpusItem:
    d = Path(d)
    text = read_png(d / "text.png")
    sticker = read_png(d / "sticker.png")
    meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").exists() else {}
    return CorpusItem(
        id=d.name,
        design=read_png(d / "design.png"),
        background=read_png(d / "bg.png"),
        sticker=sticker,
        text_protocol=parse_protocol((d / "protocol.json").read_bytes()),
        text_layer=text,
        text_mask=mask_from_alpha(text),
        sticker_mask=mask_from_alpha(sticker),
        meta=meta,
    )


def item_dirs(root) -> list[Path]:
    return sorted(p for p in Path(root).iterdir() if p.is_dir())


def load_corpus(root) -> list[CorpusItem]:
    return [load_item(d) for d in item_dirs(root)]


def save_prediction(item_id: str, pred: ItemPrediction, root) -> None:
    d = Path(root) / item_id
    d.mkdir(parents=True, exist_ok=True)
    (d / "protocol.json").write_bytes(serialize_protocol(pred.protocol))
    write_png(pred.sticker, d / "sticker.png")
    write_png(pred.background, d / "bg.png")


def load_predictions(root) -> dict[str, ItemPrediction]:
    out = {}
    for d in item_dirs(root):
        out[d.name] = ItemPrediction(parse_protocol((d / "protocol.json").read_bytes()),
                                     read_png(d / "sticker.png"), read_png(d / "bg.png"))
    return out
