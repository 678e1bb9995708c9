import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearmhd.svg import line_plot, write_line_plot


def polylines(text):
    root = ET.fromstring(text)
    return {p.get("data-series"): p.get("points").split()
            for p in root.iter() if p.tag.endswith("polyline")}


def test_vertex_counts_and_names():
    x = np.linspace(0, 1, 7)
    text = line_plot(x, {"a": x ** 2, 'b "quoted" <tag>': np.ones(7)}, title="t & u")
    lines = polylines(text)
    assert set(lines) == {"a", 'b "quoted" <tag>'}
    assert all(len(v) == 7 for v in lines.values())


def test_log_scale_handles_nonpositive():
    x = np.arange(4.0)
    lines = polylines(line_plot(x, {"s": [1.0, 0.0, -2.0, np.nan]}, log_y=True))
    pts = [tuple(map(float, p.split(","))) for p in lines["s"]]
    assert len(pts) == 4 and all(np.isfinite(pts).ravel())


def test_shape_mismatch():
    with pytest.raises(ValueError):
        line_plot([0, 1, 2], {"s": [1, 2]})


def test_write(tmp_path):
    path = tmp_path / "p.svg"
    write_line_plot(path, [0, 1], {"s": [3, 4]})
    assert ET.parse(path).getroot().tag.endswith("svg")


@settings(max_examples=30)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_always_valid_xml(values):
    x = np.arange(len(values), dtype=float)
    assert len(polylines(line_plot(x, {"v": values}))["v"]) == len(values)
