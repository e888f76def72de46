import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from layerparse.eval import generate_corpus
from layerparse.protocol import (Alignment, Appearance, Bending, ColorSpec, Direction, Geometry,
                                 Relational, Semantic, ShadowSpec, TextInstance, TextProtocol)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(text="HELLO", x=10.0, y=10.0, w=120.0, h=30.0, z=0, font="boxfont", size=20.0,
                  **kw) -> TextInstance:
    """Small instance builder; keyword arguments override appearance/relational/geometry fields."""
    geo = {k: kw.pop(k) for k in ("theta", "bending") if k in kw}
    rel = {k: kw.pop(k) for k in ("alignment",) if k in kw}
    sem = {k: kw.pop(k) for k in ("direction",) if k in kw}
    kw.setdefault("fill", ColorSpec.rgb(200, 30, 40))
    return TextInstance(Geometry(x, y, w, h, **geo), Semantic(text, **sem),
                        Appearance(font, size, **kw), Relational(rel.get("alignment", Alignment.LEFT), z))


def full_instance(z=0) -> TextInstance:
    return TextInstance(
        Geometry(12.5, 40.0, 200.0, 60.0, 0.25,
                 Bending((10.0, 90.0), (60.0, 20.0), (140.0, 20.0), (200.0, 90.0), 1)),
        Semantic("Grand Opening", Direction.RTL),
        Appearance("boxfont-wide", 18.5, ColorSpec.gradient((255, 0, 0), (0, 0, 255), 1.5),
                   2.0, ColorSpec.rgb(10, 20, 30), ShadowSpec((0, 0, 0), math.pi / 4, 3.0, 2.0),
                   1.4, 0.5, True, True, True),
        Relational(Alignment.CENTER, z))


@pytest.fixture
def simple_protocol():
    return TextProtocol(160, 80, (make_instance(),))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(7, 6, (160, 120))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy():
    """The single-image GRPO task with its exhaustive reward table."""
    from layerparse.grpo import make_toy_task, reward_table

    task = make_toy_task(0)
    return task, reward_table(task)
