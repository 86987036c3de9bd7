import numpy as np
import pytest

from crowdtwin.points import (
    Attribute,
    AttributeSchema,
    CANONICAL_SCHEMA,
    CloudError,
    POSITION_ONLY_SCHEMA,
    PointCloud,
)
from crowdtwin.plyio import (
    PlyFormatError,
    PlyTruncationError,
    PlyUnsupportedTypeError,
    estimate_size,
    parse_ply,
    write_ply,
)

from conftest import random_full_cloud


def test_canonical_schema_width():
    # 12 + 4 + 4 + 4 + 36 bytes
    assert CANONICAL_SCHEMA.point_byte_width == 60
    widths = [a.byte_width for a in CANONICAL_SCHEMA]
    assert widths == [12, 4, 4, 4, 12, 12, 12]


def test_empty_cloud_round_trip():
    cloud = PointCloud.empty()
    for fmt in ("binary", "text"):
        data = write_ply(cloud, fmt)
        back = parse_ply(data)
        assert len(back) == 0
        assert back.schema == CANONICAL_SCHEMA


def test_zero_vertex_header_parses():
    raw = (
        b"ply\nformat ascii 1.0\nelement vertex 0\n"
        b"property float x\nproperty float y\nproperty float z\nend_header\n"
    )
    cloud = parse_ply(raw)
    assert len(cloud) == 0
    assert cloud.schema == POSITION_ONLY_SCHEMA


def test_single_point_binary_bit_identical(rng):
    cloud = random_full_cloud(rng, 1)
    data = write_ply(cloud, "binary")
    header_end = data.index(b"end_header\n") + len(b"end_header\n")
    assert len(data) - header_end == 60
    back = parse_ply(data)
    assert back == cloud
    assert write_ply(back, "binary") == data


def test_text_three_point_fixture_against_independent_reader():
    # hand-written fixture; the independent reader below shares no code
    # with the codec
    raw = (
        b"ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\n"
        b"property float x\nproperty float y\nproperty float z\nend_header\n"
        b"0.5 -1.25 3\n"
        b"10 20.125 -30\n"
        b"0.1 0.2 0.3\n"
    )
    cloud = parse_ply(raw)
    assert len(cloud) == 3

    def naive_reader(data: bytes):
        lines = data.decode().splitlines()
        body_at = lines.index("end_header") + 1
        n = next(int(l.split()[-1]) for l in lines if l.startswith("element vertex"))
        return np.array(
            [[np.float32(v) for v in line.split()] for line in lines[body_at : body_at + n]],
            dtype=np.float32,
        )

    expected = naive_reader(raw)
    assert np.array_equal(cloud.positions, expected)
    # re-serializing yields value-equal coordinates
    again = parse_ply(write_ply(cloud, "text"))
    assert np.array_equal(again.positions, expected)


def test_binary_round_trip_random(rng):
    cloud = random_full_cloud(rng, 257)
    data = write_ply(cloud, "binary")
    assert parse_ply(data) == cloud
    assert write_ply(parse_ply(data), "binary") == data


def test_text_round_trip_exact(rng):
    cloud = random_full_cloud(rng, 123)
    back = parse_ply(write_ply(cloud, "text"))
    assert back == cloud  # bit-exact via shortest round-trip decimals


def test_unknown_property_preserved_as_float32():
    raw = (
        b"ply\nformat ascii 1.0\nelement vertex 2\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"property float intensity\nend_header\n"
        b"1 2 3 0.5\n4 5 6 0.75\n"
    )
    cloud = parse_ply(raw)
    assert "intensity" in cloud.schema
    attr = cloud.schema.get("intensity")
    assert attr.kind == "float32" and attr.arity == 1
    assert np.allclose(cloud.data["intensity"][:, 0], [0.5, 0.75])
    assert parse_ply(write_ply(cloud, "binary")) == cloud


def test_unsupported_type_error_names_property():
    raw = (
        b"ply\nformat ascii 1.0\nelement vertex 1\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"property double weight\nend_header\n1 2 3 4\n"
    )
    with pytest.raises(PlyUnsupportedTypeError, match="weight"):
        parse_ply(raw)


def test_malformed_header_reports_byte_offset():
    raw = b"ply\nformat ascii 1.0\nelement vertex 1\nbogus line here\nend_header\n"
    with pytest.raises(PlyFormatError) as err:
        parse_ply(raw)
    assert err.value.byte_offset == raw.index(b"bogus")


def test_big_endian_rejected():
    raw = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n"
    with pytest.raises(PlyFormatError, match="format"):
        parse_ply(raw)


def test_truncated_binary_body(rng):
    cloud = random_full_cloud(rng, 10)
    data = write_ply(cloud, "binary")
    with pytest.raises(PlyTruncationError) as err:
        parse_ply(data[:-30])
    assert err.value.expected == 600
    assert err.value.available == 570


def test_truncated_text_body():
    raw = (
        b"ply\nformat ascii 1.0\nelement vertex 2\n"
        b"property float x\nproperty float y\nproperty float z\nend_header\n"
        b"1 2 3\n"
    )
    with pytest.raises(PlyTruncationError):
        parse_ply(raw)


def test_confidence_out_of_range_rejected_not_clamped():
    raw = (
        b"ply\nformat ascii 1.0\nelement vertex 1\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"property uint confidence\nend_header\n"
        b"1 2 3 7\n"
    )
    with pytest.raises(CloudError, match="confidence"):
        parse_ply(raw)


def test_paper_size_table():
    # 1,033,942 points: 59.16 MiB total, 11.83 MiB positions, 3.94 MiB RGBA
    n = 1_033_942
    assert estimate_size(CANONICAL_SCHEMA, n, "binary") == 62_036_520
    assert round(62_036_520 / 2**20, 2) == 59.16
    assert estimate_size(POSITION_ONLY_SCHEMA, n, "binary") == 12_407_304
    assert round(12_407_304 / 2**20, 2) == 11.83
    rgba = AttributeSchema((Attribute("position", "float32", 3), Attribute("color", "uint8", 4)))
    color_bytes = estimate_size(rgba, n, "binary") - estimate_size(POSITION_ONLY_SCHEMA, n, "binary")
    assert color_bytes == 4_135_768
    assert round(color_bytes / 2**20, 2) == 3.94
    assert estimate_size(CANONICAL_SCHEMA, 0, "binary") == 0


def test_binary_body_length_matches_estimate(rng):
    for n in (0, 1, 17, 301):
        cloud = random_full_cloud(rng, n)
        data = write_ply(cloud, "binary")
        body = len(data) - (data.index(b"end_header\n") + len(b"end_header\n"))
        assert body == estimate_size(cloud.schema, n, "binary")


def test_text_estimate_is_upper_bound(rng):
    cloud = random_full_cloud(rng, 200)
    data = write_ply(cloud, "text")
    body = len(data) - (data.index(b"end_header\n") + len(b"end_header\n"))
    assert body <= estimate_size(cloud.schema, 200, "text")
