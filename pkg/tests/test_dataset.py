import numpy as np
import pytest

from vocovar.dataset import dumps, load_dataset, loads, save_dataset
from vocovar.errors import ParseError, ValidationError

from helpers import small_scene

MINIMAL = """vocovar-dataset v1
# meta source hand-written
K 320 320 320 240 640 480
F 0 1 0 0 0 0 0 0
F 1 1 0 0 0 0.1 0 0
S 0 330.5 240.0 0.5
M 0 1 0 314.5 240.0
"""


def test_minimal_file():
    ds = loads(MINIMAL)
    assert ds.num_keyframes == 2
    assert sum(len(k.samples) for k in ds.keyframes) == 1
    assert len(ds.measurements) == 1
    assert ds.meta == {"source": "hand-written"}
    m = ds.measurements[0]
    assert (m.frame_i, m.frame_j, m.sample_index, m.target, m.sigma) == (0, 1, 0, (314.5, 240.0), None)
    np.testing.assert_array_equal(ds.keyframe(1).pose.t, [0.1, 0, 0])


def test_measurement_with_sigma():
    ds = loads(MINIMAL.replace("M 0 1 0 314.5 240.0", "M 0 1 0 314.5 240.0 2.0 0.1 3.0"))
    np.testing.assert_array_equal(ds.measurements[0].sigma_matrix(), [[2.0, 0.1], [0.1, 3.0]])


def test_measurement_out_of_range_is_named():
    text = MINIMAL.replace("F 1 1 0 0 0 0.1 0 0", "F 1 1 0 0 0 0.1 0 0\nF 2 1 0 0 0 0.2 0 0")
    text += "M 5 1 0 1.0 2.0\n"
    with pytest.raises(ValidationError, match=r"line 9: measurement 1 \(5->1\)"):
        loads(text)


@pytest.mark.parametrize(
    "mutate, exc, where",
    [
        (lambda t: t.replace("v1", "v7"), ValidationError, "line 1"),
        (lambda t: t.replace("vocovar-dataset", "other"), ParseError, "line 1"),
        (lambda t: t.replace("S 0 330.5 240.0 0.5", "S 0 330.5 abc 0.5"), ParseError, "line 6, field 4"),
        (lambda t: t.replace("S 0 330.5 240.0 0.5", "S 0 330.5 240.0"), ParseError, "line 6"),
        (lambda t: t.replace("S 0 330.5 240.0 0.5", "S 0 330.5 240.0 -0.5"), ValidationError, "line 6"),
        (lambda t: t.replace("S 0 330.5", "Q 0 330.5"), ParseError, "line 6, field 1"),
        (lambda t: t.replace("F 1 ", "F 3 "), ValidationError, "dense"),
        (lambda t: t.replace("K 320 320 320", "K -1 320 320"), ValidationError, "line 3"),
        (lambda t: t.replace("F 0 ", "K 320 320 320 240 640 480\nF 0 "), ParseError, "line 4: duplicate K"),
        (lambda t: t.replace("M 0 1 0", "M 0 1 4"), ValidationError, "missing sample"),
        (lambda t: t.replace("M 0 1 0", "M 1 1 0"), ValidationError, "itself"),
        (lambda t: t + "M 0 1 0 1 1 1 5 1\n", ValidationError, "positive definite"),
        (lambda t: t.replace("F 0 1 0 0 0", "F 0 0 0 0 0"), ValidationError, "line 4"),
        (lambda t: "\n".join(l for l in t.splitlines() if not l.startswith("K")), ValidationError, "K"),
        (lambda t: "", ParseError, "empty"),
    ],
)
def test_diagnostics(mutate, exc, where):
    with pytest.raises(exc, match=where):
        loads(mutate(MINIMAL))


def test_roundtrip_is_field_for_field(tmp_path):
    ds, _ = small_scene(seed=3, n=5, samples=6, sigma=0.7)
    p = tmp_path / "d.txt"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert back.meta == ds.meta
    assert back.intrinsics == ds.intrinsics
    for a, b in zip(ds.keyframes, back.keyframes):
        assert a.id == b.id
        np.testing.assert_allclose(b.pose.matrix(), a.pose.matrix(), atol=1e-15)
        assert a.samples == b.samples
    for a, b in zip(ds.measurements, back.measurements):
        assert (a.frame_i, a.frame_j, a.sample_index, a.target, a.sigma) == (
            b.frame_i, b.frame_j, b.sample_index, b.target, b.sigma)
    assert dumps(back) == dumps(ds)


def test_not_utf8(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_bytes(b"\xff\xfe\x00")
    with pytest.raises(ParseError):
        load_dataset(p)


def test_prefix_and_filter():
    ds, _ = small_scene(seed=4, n=5, samples=4)
    pre = ds.prefix(3)
    assert pre.num_keyframes == 3
    assert all(m.frame_i < 3 and m.frame_j < 3 for m in pre.measurements)
    fwd = ds.filter_measurements(lambda m: m.frame_i < m.frame_j)
    assert all(m.frame_i < m.frame_j for m in fwd.measurements)
    assert ds.sample_offsets() == [0, 4, 8, 12, 16]
