import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from renormlab import output


@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_ppm_round_trip(rgb):
    assert np.array_equal(output.read_ppm(output.ppm_bytes(rgb)), rgb)


def test_ppm_header():
    data = output.ppm_bytes(np.zeros((2, 5, 3), np.uint8))
    assert data.startswith(b"P6\n5 2\n255\n") and len(data) == 11 + 30
    with pytest.raises(ValueError):
        output.ppm_bytes(np.zeros((2, 5), np.uint8))
    with pytest.raises(ValueError):
        output.read_ppm(b"P3\n1 1\n255\n\x00\x00\x00")


def test_csv_config_and_notes():
    cfg = {"depth": 3, "family": "rigid:rho=0.5"}
    text = output.csv_text(["a", "b"], [[1, 2.5]], cfg, ["truncated: x"])
    assert output.read_csv_config(text) == cfg
    assert text.splitlines()[1:] == ["a,b", "1,2.5", "# truncated: x"]
    assert output.read_csv_config(output.csv_text(["a"], [])) is None


def test_json_is_canonical():
    obj = output.report("k", {"z": 1, "a": np.float64(0.1)}, {"v": np.arange(3)})
    text = output.dumps(obj)
    assert text == output.dumps(json.loads(text))
    assert json.loads(text)["schema_version"] == output.SCHEMA_VERSION
    with pytest.raises(TypeError):
        output.dumps({"x": object()})
