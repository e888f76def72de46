import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_instance
from layerparse.cli import build_parser, main
from layerparse.eval.io import save_corpus
from layerparse.protocol import TextProtocol, serialize_protocol
from layerparse.raster import RasterRGBA, read_png, write_png


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, small_corpus):
    root = tmp_path_factory.mktemp("corpus")
    save_corpus(small_corpus, root)
    return root


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_protocol(path, p):
    path.write_bytes(serialize_protocol(p))
    return path


def test_validate(tmp_path, capsys, corpus_dir):
    code, out, err = run(capsys, "validate", "--protocol", corpus_dir / "item_0000" / "protocol.json")
    assert (code, out, err) == (0, "", "")
    d = json.loads((corpus_dir / "item_0000" / "protocol.json").read_text())
    d["instances"][0]["geometry"]["theta"] = 7.0
    (tmp_path / "bad.json").write_text(json.dumps(d))
    code, out, err = run(capsys, "validate", "--protocol", tmp_path / "bad.json")
    assert code == 1 and out == ""
    assert len(err.strip().splitlines()) == 1 and "theta" in err
    assert run(capsys, "validate", "--protocol", tmp_path / "missing.json")[0] == 2
    (tmp_path / "junk.json").write_text("{")
    assert run(capsys, "validate", "--protocol", tmp_path / "junk.json")[0] == 1


def test_render(tmp_path, capsys):
    empty = write_protocol(tmp_path / "e.json", TextProtocol(30, 20, ()))
    code, out, _ = run(capsys, "render", "--protocol", empty, "--out", tmp_path / "e.png")
    assert code == 0 and json.loads(out)["width"] == 30
    assert not read_png(tmp_path / "e.png").pixels.any()

    p = write_protocol(tmp_path / "p.json", TextProtocol(120, 40, (make_instance(italic=True),)))
    run(capsys, "render", "--protocol", p, "--out", tmp_path / "a.png")
    run(capsys, "render", "--protocol", p, "--out", tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    bad = write_protocol(tmp_path / "f.json", TextProtocol(120, 40, (make_instance(font="Arial"),)))
    code, _, err = run(capsys, "render", "--protocol", bad, "--out", tmp_path / "f.png")
    assert code == 1 and "Arial" in err
    code, _, _ = run(capsys, "render", "--protocol", p, "--out", tmp_path / "x.png",
                     "--font-source", "ttf")
    assert code == 1


def test_compose(tmp_path, capsys, corpus_dir):
    item = corpus_dir / "item_0003"
    code, _, _ = run(capsys, "compose", "--bg", item / "bg.png", "--sticker", item / "sticker.png",
                     "--text", item / "text.png", "--out", tmp_path / "d.png")
    assert code == 0
    assert (tmp_path / "d.png").read_bytes() == (item / "design.png").read_bytes()

    code, _, _ = run(capsys, "compose", "--bg", item / "bg.png", "--text", item / "text.png",
                     "--out", tmp_path / "n.png")
    write_png(RasterRGBA.transparent(160, 120), tmp_path / "clear.png")
    run(capsys, "compose", "--bg", item / "bg.png", "--sticker", tmp_path / "clear.png",
        "--text", item / "text.png", "--out", tmp_path / "c.png")
    assert code == 0 and read_png(tmp_path / "n.png") == read_png(tmp_path / "c.png")

    write_png(RasterRGBA.transparent(5, 5), tmp_path / "small.png")
    code, _, _ = run(capsys, "compose", "--bg", item / "bg.png", "--text", tmp_path / "small.png",
                     "--out", tmp_path / "m.png")
    assert code == 1


def tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_gen_corpus(tmp_path, capsys):
    args = ["gen-corpus", "--seed", 9, "--count", 3, "--size", "96x64", "--max-stickers", 2]
    assert run(capsys, *args, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    assert len(list((tmp_path / "a").iterdir())) == 3
    meta = json.loads((tmp_path / "a" / "item_0000" / "meta.json").read_text())
    assert meta["seed"] == 9 and meta["knobs"]["max_stickers"] == 2
    assert run(capsys, "gen-corpus", "--count", 0, "--out", tmp_path / "z")[0] == 1
    assert run(capsys, "gen-corpus", "--count", 1, "--size", "ax3", "--out", tmp_path / "z")[0] == 1
    for item in sorted((tmp_path / "a").iterdir()):
        run(capsys, "compose", "--bg", item / "bg.png", "--sticker", item / "sticker.png",
            "--text", item / "text.png", "--out", tmp_path / "d.png")
        assert read_png(tmp_path / "d.png") == read_png(item / "design.png")


def test_reward(capsys, corpus_dir):
    item = corpus_dir / "item_0001"
    base = ["reward", "--input", item / "design.png", "--protocol", item / "protocol.json",
            "--ref", item]
    code, out, _ = run(capsys, *base)
    r = json.loads(out)
    assert code == 0 and r["total"] == pytest.approx(1.0, abs=1e-6)
    assert r["weights"] == [1 / 3, 1 / 3, 1 / 3]
    code, out, _ = run(capsys, *base, "--weights", "2,0,2")
    assert json.loads(out)["weights"] == [0.5, 0.0, 0.5]
    assert run(capsys, *base, "--weights", "-1,1,1")[0] == 1
    assert run(capsys, *base, "--weights", "1,1")[0] == 1


def test_evaluate(tmp_path, capsys, corpus_dir):
    code, out, _ = run(capsys, "evaluate", "--pred", corpus_dir, "--corpus", corpus_dir,
                       "--out", tmp_path / "report.json")
    summary = json.loads(out)
    assert code == 0 and summary["t_iou"] == 1.0 and summary["rgb_l1_avg"] == 0.0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["font_accuracy"] == pytest.approx(np.mean([r["font_accuracy"] for r in report["items"]]))

    (tmp_path / "th.json").write_text(json.dumps({"font_size_rel": 0.2}))
    assert run(capsys, "evaluate", "--pred", corpus_dir, "--corpus", corpus_dir,
               "--out", tmp_path / "r2.json", "--thresholds", tmp_path / "th.json")[0] == 0

    pred = tmp_path / "pred"
    for d in sorted(corpus_dir.iterdir())[:-1]:
        (pred / d.name).mkdir(parents=True)
        for f in ("protocol.json", "sticker.png", "bg.png"):
            (pred / d.name / f).write_bytes((d / f).read_bytes())
    code, _, err = run(capsys, "evaluate", "--pred", pred, "--corpus", corpus_dir,
                       "--out", tmp_path / "r3.json")
    assert code == 1 and sorted(corpus_dir.iterdir())[-1].name in err


def test_grpo_train_defaults():
    args = build_parser().parse_args(["grpo-train"])
    assert (args.steps, args.group, args.lr, args.batch) == (2000, 16, 1e-4, 32)
    assert (args.clip, args.kl, args.temp, args.inner_epochs) == (0.2, 0.01, 0.8, 1)


def test_grpo_train(tmp_path, capsys, corpus_dir):
    code, out, _ = run(capsys, "grpo-train", "--steps", 0, "--out", tmp_path / "p0.json")
    assert code == 0 and json.loads(out)["steps"] == 0
    logits = json.loads((tmp_path / "p0.json").read_text())["logits"]
    assert all(v == 0.0 for factors in logits.values() for z in factors.values() for v in z)

    for name in ("a", "b"):
        run(capsys, "grpo-train", "--steps", 3, "--group", 4, "--lr", 0.5, "--seed", 2,
            "--out", tmp_path / f"{name}.json", "--log", tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 3

    code, out, _ = run(capsys, "grpo-train", "--corpus", corpus_dir, "--steps", 2, "--group", 4,
                       "--batch", 2)
    assert code == 0 and json.loads(out)["images"] == 6
    assert run(capsys, "grpo-train", "--steps", 1, "--group", 0)[0] == 1


def test_lta_check(capsys):
    code, out, _ = run(capsys, "lta-check")
    report = json.loads(out)
    assert code == 0 and report["max_error"] <= 1e-4 and report["pass"]
    assert run(capsys, "lta-check", "--seed", 3)[1] == run(capsys, "lta-check", "--seed", 3)[1]
    code, out, err = run(capsys, "lta-check", "--d", 9, "--heads", 2)
    assert code == 1 and out == "" and "divisible" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "layerparse.cli", "lta-check", "--n", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["n"] == 2
