import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from centerpercept.annotations import SchemaError, dump_frames, load_frames, parse_frames
from centerpercept.synth import SceneConfig, generate_scenes
from centerpercept.tensorfile import TensorFormatError, from_bytes, read_tensor, to_bytes, write_tensor


class TestTensorFile:
    @given(arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=6),
                  elements=st.floats(width=32, allow_nan=True)))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_bit_exact(self, arr):
        back = from_bytes(to_bytes(arr))
        assert back.shape == arr.shape and back.dtype == np.float32
        assert back.tobytes() == arr.tobytes()

    def test_header_layout(self):
        data = to_bytes(np.zeros((2, 3), np.float32))
        assert data[:4] == b"TNS1" and data[4] == 0 and data[5] == 2 and data[6:8] == b"\0\0"
        assert struct.unpack("<2Q", data[8:24]) == (2, 3)
        assert len(data) == 24 + 4 * 6

    def test_file_round_trip(self, tmp_path, rng):
        arr = rng.random((10, 80, 160)).astype(np.float32)
        write_tensor(tmp_path / "a.tns", arr)
        assert np.array_equal(read_tensor(tmp_path / "a.tns"), arr)

    @pytest.mark.parametrize("mutate,needle", [
        (lambda d: b"XXXX" + d[4:], "byte 0"),
        (lambda d: d[:4] + b"\x07" + d[5:], "byte 4"),
        (lambda d: d[:6] + b"\x01\x00" + d[8:], "offset 6"),
        (lambda d: d[:-4], "byte"),
        (lambda d: d[:5], "truncated"),
        (lambda d: d[:12], "truncated dims"),
    ])
    def test_errors_carry_offsets(self, mutate, needle):
        data = to_bytes(np.ones((2, 2), np.float32))
        with pytest.raises(TensorFormatError, match=needle):
            from_bytes(mutate(data), "t.tns")


def _frame(**over):
    f = {
        "name": "f0", "width": 640, "height": 320,
        "tags": {"weather": "clear", "scene": "highway", "timeofday": "daytime"},
        "boxes": [{"x1": 1, "y1": 2, "x2": 30, "y2": 40, "category": "car", "occluded": True}],
        "lanes": [{"category": "crosswalk", "points": [[10, 10], [20, 300]]}],
    }
    f.update(over)
    return f


class TestAnnotations:
    def test_parse(self):
        (f,) = parse_frames(json.dumps([_frame()]))
        assert f.boxes[0].occluded and f.boxes[0].x2 == 30 and len(f.lanes) == 1
        assert f.tags is not None

    def test_json_syntax_error_has_line(self):
        with pytest.raises(SchemaError, match=r"a\.json:2:\d+ \(byte \d+\)"):
            parse_frames('[\n{"name": }]', "a.json")

    @pytest.mark.parametrize("frame,needle", [
        (_frame(width="big"), r"\$\[0\]\.width"),
        (_frame(boxes=[{"x1": 0, "y1": 0, "x2": 1, "y2": 1, "category": "unicorn"}]), r"\$\[0\]\.boxes\[0\]\.category"),
        (_frame(lanes=[{"category": "crosswalk", "points": [[1, 1]]}]), r"\$\[0\]\.lanes\[0\]\.points"),
        (_frame(boxes=[{"x1": 10, "y1": 0, "x2": 5, "y2": 1, "category": "car"}]), r"boxes\[0\]"),
        (_frame(boxes=[{"x1": 0, "y1": 0, "x2": 900, "y2": 1, "category": "car"}]), r"boxes\[0\]"),
    ])
    def test_schema_errors_name_path(self, frame, needle):
        with pytest.raises(SchemaError, match=needle):
            parse_frames(json.dumps([frame]))

    def test_duplicate_names(self):
        with pytest.raises(SchemaError, match="unique"):
            parse_frames(json.dumps([_frame(), _frame()]))

    def test_dump_load_round_trip(self, tmp_path):
        scenes = generate_scenes(SceneConfig(seed=4), 5)
        dump_frames(scenes, tmp_path / "s.json")
        back = load_frames(tmp_path / "s.json")
        assert [f.name for f in back] == [s.name for s in scenes]
        for a, b in zip(back, scenes):
            assert a.boxes == b.boxes and a.tags == b.tags
            for la, lb in zip(a.lanes, b.lanes):
                assert la.class_id == lb.class_id
                np.testing.assert_allclose(la.as_array(), lb.as_array())
