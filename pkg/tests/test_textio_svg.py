import numpy as np
from hypothesis import given, strategies as st

from repdyn import svg
from repdyn.textio import format_float


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert float(format_float(x)) == x


def test_mean_ci():
    m, lo, hi = svg.mean_ci([1.0, 2.0, 3.0, float("nan")])
    assert m == 2.0 and lo < 2.0 < hi
    assert abs((hi - m) - 1.959963984540054 * 1.0 / np.sqrt(3)) < 1e-12
    assert svg.mean_ci([4.0]) == (4.0, 4.0, 4.0)


def test_render_is_deterministic_and_wellformed(tmp_path):
    import xml.etree.ElementTree as ET

    panel = svg.Panel("t", "x", "y", series=[svg.Series("a", [1, 2, 3], [0.5, 0.25, 0.1], [0.4, 0.2, 0.05], [0.6, 0.3, 0.2])])
    a, b = svg.render([panel]), svg.render([panel])
    assert a == b
    ET.fromstring(a)


def test_plot_convergence_from_csv(tmp_path):
    csv_path = tmp_path / "convergence.csv"
    csv_path.write_text("seed,rule,step,dist_svd,dist_inv,loss\n"
                        "0,mc,0,0.9,0.8,1\n0,mc,10,0.1,0.2,0.5\n1,mc,0,0.7,0.9,1\n1,mc,10,0.05,,0.4\n")
    out = svg.plot_directory(str(tmp_path))
    assert out == [str(tmp_path / "convergence.svg")]
    assert "<svg" in (tmp_path / "convergence.svg").read_text()
