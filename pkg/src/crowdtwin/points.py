"""Point cloud data model.

A cloud is a set of per-point attribute columns backed by numpy arrays.
The canonical attribute layout mirrors what the capture devices emit:
position, RGBA color, confidence, depth, orientation (roll/pitch/yaw),
angular velocity, and the device's self-localized position -- 60 bytes
per point in packed binary form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

FRAME_SESSION = "session-local"
FRAME_UDT = "udt-global"
FRAMES = (FRAME_SESSION, FRAME_UDT)

SCALAR_WIDTHS = {"float32": 4, "uint8": 1, "uint32": 4}
SCALAR_DTYPES = {
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
    "uint32": np.dtype("<u4"),
}

CONFIDENCE_LEVELS = (0, 1, 2)


class CloudError(Exception):
    """Base class for point-cloud domain errors."""


class SchemaError(CloudError):
    """Invalid attribute schema or records that do not conform to it."""


@dataclass(frozen=True)
class Attribute:
    """One named per-point value group: `arity` scalars of one kind."""

    name: str
    kind: str  # float32 | uint8 | uint32
    arity: int

    def __post_init__(self):
        if self.kind not in SCALAR_WIDTHS:
            raise SchemaError(f"unsupported scalar kind {self.kind!r} for attribute {self.name!r}")
        if self.arity < 1:
            raise SchemaError(f"attribute {self.name!r} must have positive arity")

    @property
    def byte_width(self) -> int:
        return SCALAR_WIDTHS[self.kind] * self.arity

    @property
    def dtype(self) -> np.dtype:
        return SCALAR_DTYPES[self.kind]


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute list; the order is the serialization order."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names: {names}")
        if "position" not in names:
            raise SchemaError("every schema must contain a position attribute")

    def __iter__(self) -> Iterator[Attribute]:
        return iter(self.attributes)

    def __contains__(self, name: str) -> bool:
        return any(a.name == name for a in self.attributes)

    def get(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def point_byte_width(self) -> int:
        """Packed binary bytes per point."""
        return sum(a.byte_width for a in self.attributes)


POSITION = Attribute("position", "float32", 3)
COLOR = Attribute("color", "uint8", 4)
CONFIDENCE = Attribute("confidence", "uint32", 1)
DEPTH = Attribute("depth", "float32", 1)
ORIENTATION = Attribute("orientation", "float32", 3)
ANGULAR_VELOCITY = Attribute("angular_velocity", "float32", 3)
DEVICE_POSITION = Attribute("device_position", "float32", 3)

CANONICAL_ATTRIBUTES = (
    POSITION,
    COLOR,
    CONFIDENCE,
    DEPTH,
    ORIENTATION,
    ANGULAR_VELOCITY,
    DEVICE_POSITION,
)

#: The full device schema: 12 + 4 + 4 + 4 + 36 = 60 bytes per point.
CANONICAL_SCHEMA = AttributeSchema(CANONICAL_ATTRIBUTES)

POSITION_ONLY_SCHEMA = AttributeSchema((POSITION,))


@dataclass(frozen=True)
class PointRecord:
    """A single point's values, keyed by attribute name."""

    values: Mapping[str, tuple]

    def __getitem__(self, name: str):
        return self.values[name]


@dataclass
class PointCloud:
    """Column-oriented point cloud.

    `data` maps attribute name to an (n, arity) array of the attribute's
    dtype (shape (n,) is normalized to (n, 1) on construction).
    """

    schema: AttributeSchema
    data: dict[str, np.ndarray]
    frame: str = FRAME_SESSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise CloudError(f"unknown frame {self.frame!r}")
        n = None
        for attr in self.schema:
            if attr.name not in self.data:
                raise SchemaError(f"missing data for attribute {attr.name!r}")
            col = np.asarray(self.data[attr.name], dtype=attr.dtype)
            if col.ndim == 1:
                col = col.reshape(-1, 1)
            if col.ndim != 2 or col.shape[1] != attr.arity:
                raise SchemaError(
                    f"attribute {attr.name!r} expects arity {attr.arity}, got shape {col.shape}"
                )
            if n is None:
                n = col.shape[0]
            elif col.shape[0] != n:
                raise SchemaError(
                    f"attribute {attr.name!r} has {col.shape[0]} rows, expected {n}"
                )
            self.data[attr.name] = col
        extra = set(self.data) - set(self.schema.names)
        if extra:
            raise SchemaError(f"data columns not in schema: {sorted(extra)}")
        self._validate_domains()

    def _validate_domains(self):
        if "confidence" in self.schema and len(self) > 0:
            conf = self.data["confidence"]
            if conf.min() < 0 or conf.max() > 2:
                bad = int(conf[(conf < 0) | (conf > 2)].flat[0])
                raise CloudError(f"confidence value {bad} outside {{0, 1, 2}}")
        if "depth" in self.schema and len(self) > 0:
            depth = self.data["depth"]
            if not np.all(np.isfinite(depth)) or depth.min() < 0:
                raise CloudError("depth values must be finite and >= 0")

    def __len__(self) -> int:
        return int(self.data["position"].shape[0])

    @property
    def positions(self) -> np.ndarray:
        return self.data["position"]

    def record(self, i: int) -> PointRecord:
        return PointRecord({name: tuple(self.data[name][i].tolist()) for name in self.schema.names})

    def records(self) -> Iterator[PointRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def select(self, index) -> "PointCloud":
        """New cloud with rows picked by a boolean mask or index array."""
        return PointCloud(
            schema=self.schema,
            data={name: self.data[name][index] for name in self.schema.names},
            frame=self.frame,
            meta=dict(self.meta),
        )

    def with_positions(self, positions: np.ndarray) -> "PointCloud":
        data = {name: self.data[name] for name in self.schema.names}
        data["position"] = np.asarray(positions, dtype=np.float32).reshape(len(self), 3)
        return PointCloud(schema=self.schema, data=data, frame=self.frame, meta=dict(self.meta))

    def project(self, names) -> "PointCloud":
        """Keep only the named attributes (position always survives)."""
        keep = [a for a in self.schema if a.name == "position" or a.name in names]
        return PointCloud(
            schema=AttributeSchema(tuple(keep)),
            data={a.name: self.data[a.name] for a in keep},
            frame=self.frame,
            meta=dict(self.meta),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if self.schema != other.schema or self.frame != other.frame:
            return False
        return all(
            np.array_equal(self.data[name], other.data[name]) for name in self.schema.names
        )

    @staticmethod
    def empty(schema: AttributeSchema = CANONICAL_SCHEMA, frame: str = FRAME_SESSION) -> "PointCloud":
        data = {a.name: np.zeros((0, a.arity), dtype=a.dtype) for a in schema}
        return PointCloud(schema=schema, data=data, frame=frame)

    @staticmethod
    def from_positions(
        positions: np.ndarray,
        frame: str = FRAME_SESSION,
        **extra_columns: np.ndarray,
    ) -> "PointCloud":
        """Build a cloud from a position array plus optional canonical columns."""
        positions = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
        attrs = [POSITION]
        data: dict[str, np.ndarray] = {"position": positions}
        for attr in CANONICAL_ATTRIBUTES[1:]:
            if attr.name in extra_columns:
                attrs.append(attr)
                data[attr.name] = np.asarray(extra_columns.pop(attr.name), dtype=attr.dtype)
        if extra_columns:
            raise SchemaError(f"unknown columns: {sorted(extra_columns)}")
        return PointCloud(schema=AttributeSchema(tuple(attrs)), data=data, frame=frame)
