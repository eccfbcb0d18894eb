import xml.etree.ElementTree as ET

import numpy as np
import pytest

from twoitem.plotting import clip_halfplane, plot_partition, plot_sweep, region_polygons
from twoitem.solver import assemble_mechanism

from conftest import steep_custom


def test_clip_halfplane():
    square = [(0, 0), (1, 0), (1, 1), (0, 1)]
    tri = clip_halfplane(square, 1.0, 1.0, 1.0)
    assert {(float(x), float(y)) for x, y in tri} == {(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)}
    assert clip_halfplane(square, 1.0, 1.0, 3.0) == []


def test_uniform_partition_is_symmetric(uniform_mech):
    polys = region_polygons(uniform_mech)
    d1 = np.array(polys["D1"])
    d2 = np.array(polys["D2"])
    np.testing.assert_allclose(d1[:, ::-1], d2, atol=1e-14)
    bundle = {tuple(np.round(v, 12)) for v in polys["Bundle"]}
    assert bundle == {tuple(np.round(v[::-1], 12)) for v in polys["Bundle"]}


def test_mixed_partition_layout(mixed_mech):
    polys = region_polygons(mixed_mech)
    assert set(polys) == {"D1", "D2", "Bundle"}
    d1 = np.array(polys["D1"])
    # left edge of the item-1 region follows s1(t) = (2 - t) / (3 - t)
    t = d1[:-2, 1]
    np.testing.assert_allclose(d1[:-2, 0], (2 - t) / (3 - t), atol=1e-14)
    d2 = np.array(polys["D2"])
    np.testing.assert_allclose(d2[:-2, 1], float(mixed_mech.s2(0.0)), atol=1e-14)


def test_full_bundle_partition_has_only_the_diagonal():
    steep = steep_custom()
    mech = assemble_mechanism(steep, steep)
    assert set(region_polygons(mech)) == {"Bundle"}


def test_svg_is_valid_and_deterministic(mixed_mech, tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_partition(mixed_mech, a)
    plot_partition(mixed_mech, b)
    assert a.read_bytes() == b.read_bytes()
    root = ET.parse(a).getroot()
    assert root.tag.endswith("svg")
    text = a.read_text()
    for label in ("item 1 sold", "item 2 sold", "bundle"):
        assert label in text


def test_full_bundle_plot(tmp_path):
    steep = steep_custom()
    out = tmp_path / "fb.svg"
    plot_partition(assemble_mechanism(steep, steep), out)
    assert "bundle" in out.read_text()


def test_sweep_plot(tmp_path):
    rows = [{"param": 0.5, "s0": 0.64, "p": 0.78, "revenue": 0.48, "classification": "Exact"},
            {"param": 1.2, "s0": 0.61, "p": 0.68, "revenue": float("nan"), "classification": "Unsupported"}]
    out = tmp_path / "s.svg"
    plot_sweep(rows, "lambda", out)
    ET.parse(out)
