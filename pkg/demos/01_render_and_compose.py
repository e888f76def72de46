"""Render a text protocol, composite it over a synthetic design, and save the layers as PNG."""

import sys
from pathlib import Path

from layerparse.eval import compose_layers, generate_item
from layerparse.protocol import serialize_protocol
from layerparse.raster import write_png
from layerparse.render import render_text_layer

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

item = generate_item(7, 0, 320, 240)
print(serialize_protocol(item.text_protocol).decode()[:300], "...")

text = render_text_layer(item.text_protocol)
design = compose_layers(item.background, item.sticker, text)
assert design == item.design  # the renderer reproduces the stored text layer exactly

for name, img in [("background", item.background), ("sticker", item.sticker),
                  ("text", text), ("design", design)]:
    write_png(img, out / f"{name}.png")
print(f"wrote 4 layers to {out}/")
