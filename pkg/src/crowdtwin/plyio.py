"""PLY reader/writer for the device point format.

Supports `format ascii 1.0` and `format binary_little_endian 1.0` with a
single vertex element. Property groups are mapped onto the canonical
attribute names; unrecognized properties are preserved as opaque float32
attributes. Big-endian files are rejected (the capture devices emit
little-endian only).
"""

from __future__ import annotations

import numpy as np

from .points import (
    CANONICAL_ATTRIBUTES,
    Attribute,
    AttributeSchema,
    CloudError,
    PointCloud,
)

FORMAT_TEXT = "text"
FORMAT_BINARY = "binary"

# header scalar name -> internal kind
_HEADER_KINDS = {
    "float": "float32",
    "float32": "float32",
    "uchar": "uint8",
    "uint8": "uint8",
    "uint": "uint32",
    "uint32": "uint32",
}
_KIND_HEADER_NAMES = {"float32": "float", "uint8": "uchar", "uint32": "uint"}

# canonical attribute -> ordered PLY property names
_ATTR_PROPERTIES = {
    "position": ("x", "y", "z"),
    "color": ("red", "green", "blue", "alpha"),
    "confidence": ("confidence",),
    "depth": ("depth",),
    "orientation": ("roll", "pitch", "yaw"),
    "angular_velocity": ("avx", "avy", "avz"),
    "device_position": ("px", "py", "pz"),
}

# worst-case ascii widths per value, including one separator byte
_TEXT_VALUE_WIDTHS = {"float32": 49, "uint8": 4, "uint32": 11}


class PlyError(CloudError):
    """Base class for PLY codec failures."""


class PlyFormatError(PlyError):
    """Malformed header; carries the byte offset of the offending line."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class PlyTruncationError(PlyError):
    """Body shorter than the header promises."""

    def __init__(self, expected: int, available: int, unit: str = "bytes"):
        super().__init__(f"truncated body: expected {expected} {unit}, found {available}")
        self.expected = expected
        self.available = available


class PlyUnsupportedTypeError(PlyError):
    """Property declared with a scalar type the codec does not carry."""

    def __init__(self, type_name: str, prop_name: str):
        super().__init__(f"unsupported scalar type {type_name!r} for property {prop_name!r}")
        self.property_name = prop_name


def _parse_header(raw: bytes):
    """Returns (format, vertex_count, [(kind, prop_name)...], body_offset)."""
    offset = 0
    lines = []
    view = raw
    while True:
        nl = view.find(b"\n", offset)
        if nl < 0:
            raise PlyFormatError("header not terminated by end_header", offset)
        line = view[offset:nl]
        lines.append((line.rstrip(b"\r"), offset))
        if lines[-1][0] == b"end_header":
            body_offset = nl + 1
            break
        offset = nl + 1
        if offset > 65536:
            raise PlyFormatError("header exceeds 64 KiB", offset)

    if not lines or lines[0][0] != b"ply":
        raise PlyFormatError("missing 'ply' magic line", 0)

    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    saw_element = False
    for line, off in lines[1:-1]:
        if not line:
            raise PlyFormatError("blank line in header", off)
        fields = line.split()
        keyword = fields[0]
        if keyword == b"comment":
            continue
        if keyword == b"format":
            if fmt is not None:
                raise PlyFormatError("duplicate format line", off)
            if line == b"format ascii 1.0":
                fmt = FORMAT_TEXT
            elif line == b"format binary_little_endian 1.0":
                fmt = FORMAT_BINARY
            else:
                raise PlyFormatError(f"unsupported format declaration {line.decode(errors='replace')!r}", off)
        elif keyword == b"element":
            if saw_element:
                raise PlyFormatError("only a single vertex element is supported", off)
            if len(fields) != 3 or fields[1] != b"vertex":
                raise PlyFormatError("expected 'element vertex <count>'", off)
            try:
                count = int(fields[2])
            except ValueError:
                raise PlyFormatError("vertex count is not an integer", off) from None
            if count < 0:
                raise PlyFormatError("vertex count is negative", off)
            saw_element = True
        elif keyword == b"property":
            if not saw_element:
                raise PlyFormatError("property declared before element", off)
            if len(fields) != 3:
                raise PlyFormatError("expected 'property <type> <name>'", off)
            type_name = fields[1].decode()
            prop_name = fields[2].decode()
            if type_name == "list":
                raise PlyFormatError("list properties are not supported", off)
            if type_name not in _HEADER_KINDS:
                raise PlyUnsupportedTypeError(type_name, prop_name)
            props.append((_HEADER_KINDS[type_name], prop_name))
        else:
            raise PlyFormatError(f"unknown header keyword {keyword.decode(errors='replace')!r}", off)

    if fmt is None:
        raise PlyFormatError("missing format line", 0)
    if count is None:
        raise PlyFormatError("missing 'element vertex' line", 0)
    if not props:
        raise PlyFormatError("vertex element declares no properties", 0)
    names = [p for _, p in props]
    if len(set(names)) != len(names):
        raise PlyFormatError("duplicate property names", 0)
    return fmt, count, props, body_offset


def _schema_from_properties(props: list[tuple[str, str]]) -> tuple[AttributeSchema, list[tuple[Attribute, list[int]]]]:
    """Group declared properties into canonical attributes.

    Returns the schema plus, per attribute, the column indices of its
    member properties in declaration order. A property run only forms a
    canonical attribute when names and scalar kinds both match; anything
    else becomes an opaque float32 scalar attribute.
    """
    groups: list[tuple[Attribute, list[int]]] = []
    i = 0
    while i < len(props):
        matched = False
        for attr in CANONICAL_ATTRIBUTES:
            member_names = _ATTR_PROPERTIES[attr.name]
            k = len(member_names)
            run = props[i : i + k]
            if len(run) == k and tuple(p for _, p in run) == member_names and all(
                kind == attr.kind for kind, _ in run
            ):
                groups.append((attr, list(range(i, i + k))))
                i += k
                matched = True
                break
        if not matched:
            _, name = props[i]
            groups.append((Attribute(name, "float32", 1), [i]))
            i += 1
    schema = AttributeSchema(tuple(attr for attr, _ in groups))
    return schema, groups


def _parse_binary_body(raw: bytes, count: int, props, groups) -> dict[str, np.ndarray]:
    dtype = np.dtype([(f"c{i}", SCALAR_DTYPE_CODES[kind]) for i, (kind, _) in enumerate(props)])
    expected = dtype.itemsize * count
    if len(raw) < expected:
        raise PlyTruncationError(expected, len(raw))
    table = np.frombuffer(raw[:expected], dtype=dtype)
    data = {}
    for attr, cols in groups:
        stacked = np.column_stack([table[f"c{c}"] for c in cols])
        data[attr.name] = stacked.astype(attr.dtype, copy=False)
    return data


SCALAR_DTYPE_CODES = {"float32": "<f4", "uint8": "u1", "uint32": "<u4"}


def _parse_text_body(raw: bytes, count: int, props, groups) -> dict[str, np.ndarray]:
    tokens = raw.split()
    ncols = len(props)
    expected = count * ncols
    if len(tokens) < expected:
        raise PlyTruncationError(expected, len(tokens), unit="values")
    if len(tokens) > expected:
        raise PlyFormatError(f"body has {len(tokens)} values, expected {expected}", 0)
    columns: list[np.ndarray] = []
    for c, (kind, name) in enumerate(props):
        col_tokens = tokens[c::ncols]
        if kind == "float32":
            try:
                col = np.array(col_tokens, dtype=np.float32)
            except ValueError:
                raise PlyFormatError(f"non-numeric value in property {name!r}", 0) from None
        else:
            try:
                ints = np.array(col_tokens, dtype=np.int64)
            except ValueError:
                raise PlyFormatError(f"non-integer value in property {name!r}", 0) from None
            limit = 255 if kind == "uint8" else 4294967295
            if len(ints) and (ints.min() < 0 or ints.max() > limit):
                raise PlyFormatError(f"value out of range for {kind} property {name!r}", 0)
            col = ints.astype(SCALAR_DTYPE_CODES[kind])
        columns.append(col)
    data = {}
    for attr, cols in groups:
        stacked = np.column_stack([columns[c] for c in cols])
        data[attr.name] = stacked.astype(attr.dtype, copy=False)
    return data


def parse_ply(raw: bytes) -> PointCloud:
    """Parse PLY bytes into a point cloud.

    Raises PlyFormatError / PlyTruncationError / PlyUnsupportedTypeError on
    malformed input; confidence values outside {0, 1, 2} are rejected.
    """
    fmt, count, props, body_offset = _parse_header(raw)
    schema, groups = _schema_from_properties(props)
    body = raw[body_offset:]
    if fmt == FORMAT_BINARY:
        data = _parse_binary_body(body, count, props, groups)
    else:
        data = _parse_text_body(body, count, props, groups)
    return PointCloud(schema=schema, data=data)


def _header_lines(cloud: PointCloud, fmt: str) -> list[str]:
    fmt_decl = "format ascii 1.0" if fmt == FORMAT_TEXT else "format binary_little_endian 1.0"
    lines = ["ply", fmt_decl, f"element vertex {len(cloud)}"]
    for attr in cloud.schema:
        type_name = _KIND_HEADER_NAMES[attr.kind]
        if attr.name in _ATTR_PROPERTIES:
            names = _ATTR_PROPERTIES[attr.name]
        else:
            if attr.arity != 1:
                raise PlyError(f"opaque attribute {attr.name!r} must be scalar to serialize")
            names = (attr.name,)
        for prop_name in names:
            lines.append(f"property {type_name} {prop_name}")
    lines.append("end_header")
    return lines


def _format_float_column(col: np.ndarray) -> list[str]:
    # shortest decimal that round-trips to the same float32
    fmt = np.format_float_positional
    return [fmt(v, unique=True, trim="-") for v in col]


def write_ply(cloud: PointCloud, fmt: str = FORMAT_BINARY) -> bytes:
    """Serialize a cloud; the output parses back to an equal cloud."""
    if fmt not in (FORMAT_TEXT, FORMAT_BINARY):
        raise PlyError(f"unknown format {fmt!r}")
    header = ("\n".join(_header_lines(cloud, fmt)) + "\n").encode("ascii")
    n = len(cloud)
    if fmt == FORMAT_BINARY:
        fields = []
        for attr in cloud.schema:
            for k in range(attr.arity):
                fields.append((f"{attr.name}_{k}", SCALAR_DTYPE_CODES[attr.kind]))
        table = np.empty(n, dtype=np.dtype(fields))
        for attr in cloud.schema:
            col = cloud.data[attr.name]
            for k in range(attr.arity):
                table[f"{attr.name}_{k}"] = col[:, k]
        return header + table.tobytes()

    columns: list[list[str]] = []
    for attr in cloud.schema:
        col = cloud.data[attr.name]
        for k in range(attr.arity):
            if attr.kind == "float32":
                columns.append(_format_float_column(col[:, k]))
            else:
                columns.append([str(int(v)) for v in col[:, k]])
    body = "\n".join(" ".join(row) for row in zip(*columns))
    if n:
        body += "\n"
    return header + body.encode("ascii")


def estimate_size(schema: AttributeSchema, count: int, fmt: str = FORMAT_BINARY) -> int:
    """Body size in bytes: exact for binary, an upper bound for text."""
    if count < 0:
        raise PlyError("count must be non-negative")
    if fmt == FORMAT_BINARY:
        return count * schema.point_byte_width
    if fmt == FORMAT_TEXT:
        per_point = sum(_TEXT_VALUE_WIDTHS[a.kind] * a.arity for a in schema)
        return count * per_point
    raise PlyError(f"unknown format {fmt!r}")


def read_ply_file(path) -> PointCloud:
    with open(path, "rb") as fh:
        return parse_ply(fh.read())


def write_ply_file(path, cloud: PointCloud, fmt: str = FORMAT_BINARY) -> None:
    with open(path, "wb") as fh:
        fh.write(write_ply(cloud, fmt))
