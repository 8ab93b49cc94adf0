import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from erecho.core import SweepCurve
from erecho.io import DatasetError, format_dataset, parse_dataset, read_dataset, trace_to_curve, write_dataset
from erecho.sim import SimConfig, simulate, two_pulse_sequence
from erecho.presets import CHIP3H

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(float, st.integers(0, 20), elements=finite), st.booleans())
def test_round_trip_exact(x, with_sigma):
    y = x[::-1].copy()
    sigma = np.abs(x) + 1.0 if with_sigma else None
    curve = SweepCurve(x, y, sigma=sigma, x_unit="s", y_unit="a.u.", label="run 1",
                       x_name="tau", y_name="echo_area", meta={"kind": "two_pulse", "n": 3})
    back = parse_dataset(format_dataset(curve))
    assert np.array_equal(back.abscissa, curve.abscissa)
    assert np.array_equal(back.ordinate, curve.ordinate)
    assert (back.sigma is None) == (sigma is None)
    if sigma is not None:
        assert np.array_equal(back.sigma, sigma)
    assert back.label == "run 1" and back.meta == {"kind": "two_pulse", "n": 3}
    assert (back.x_name, back.y_name, back.x_unit, back.y_unit) == ("tau", "echo_area", "s", "a.u.")


def test_units_converted_to_si():
    text = "# kind: manual\ntau(us), gamma(kHz), sigma(kHz)\n1, 2, 0.5\n3, 4, 0.5\n"
    c = parse_dataset(text)
    assert np.allclose(c.abscissa, [1e-6, 3e-6])
    assert np.allclose(c.ordinate, [2e3, 4e3])
    assert np.allclose(c.sigma, [500.0, 500.0])
    assert (c.x_unit, c.y_unit) == ("s", "Hz")


@pytest.mark.parametrize("tag", ["1", "a.u.", "counts", "%", "arb"])
def test_dimensionless_and_free_labels_kept(tag):
    c = parse_dataset(f"x(s), y({tag})\n1, 2\n")
    assert c.y_unit == tag and c.ordinate[0] == 2.0


def test_string_metadata_that_looks_like_json():
    c = SweepCurve(np.array([1.0]), np.array([2.0]), meta={"note": "42", "x_scale": "log"})
    back = parse_dataset(format_dataset(c))
    assert back.meta == {"note": "42", "x_scale": "log"}


@pytest.mark.parametrize("text,needle", [
    ("x, y\n1, 2\n", "<string>:1: header column 'x'"),
    ("# only comments\n", "no header"),
    ("x(s)\n1\n", "at least two columns"),
    ("x(s), y(1)\n1, 2\n3\n", "<string>:3: expected 2 values, got 1"),
    ("x(s), y(1)\n1, two\n", "<string>:2:"),
    ("x(s), y(s)\n1, 2\n", None),
])
def test_parse_errors_name_the_line(text, needle):
    if needle is None:
        parse_dataset(text)
        return
    with pytest.raises(DatasetError, match=needle.replace("(", r"\(").replace(")", r"\)")):
        parse_dataset(text)


def test_incompatible_sigma_unit_rejected():
    with pytest.raises(DatasetError):
        parse_dataset("x(s), y(kHz), sigma(s)\n1, 2, 3\n")


def test_file_round_trip(tmp_path):
    c = SweepCurve(np.array([1e-6, 2e-6]), np.array([1.0, 0.5]), x_unit="s", y_unit="a.u.")
    p = write_dataset(c, tmp_path / "d.csv")
    assert p.read_bytes().endswith(b"\n") and b"\r" not in p.read_bytes()
    assert np.array_equal(read_dataset(p).ordinate, c.ordinate)
    with pytest.raises(DatasetError, match="d.csv"):
        (tmp_path / "d.csv").write_text("bad\n")
        read_dataset(tmp_path / "d.csv")


def test_trace_to_curve_keeps_markers():
    tr = simulate(CHIP3H.__class__(**{**CHIP3H.__dict__, "bath": None}),
                  two_pulse_sequence(1e-6), SimConfig(n_ions=500))
    c = trace_to_curve(tr)
    assert c.meta["kind"] == "trace"
    assert c.meta["markers"][0][0] == "primary_echo"
    back = parse_dataset(format_dataset(c))
    assert back.meta["markers"] == c.meta["markers"]
