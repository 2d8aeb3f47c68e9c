"""Point-cloud file I/O.

Supported formats:

* ``ply-ascii`` / ``ply-binary-le`` -- PLY with float32/float64 x, y, z
  vertex properties. Other scalar properties are skipped with a warning;
  non-vertex elements are ignored. Writers emit float64 so that a
  save/load round trip reproduces coordinates bit-exactly.
* ``xyz-text`` -- one ``x y z`` triple per line, whitespace separated.

A nonzero sensor origin is carried in a ``comment sensor_origin x y z``
header line (PLY only) and restored on load.
"""

import warnings

import numpy as np

from ..errors import ParseError
from .cloud import PointCloud

FORMATS = ("ply-ascii", "ply-binary-le", "xyz-text")

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FLOAT_TYPES = {"float", "float32", "double", "float64"}


class _Element:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, dtype code) tuples; dtype None for list props


def _parse_ply_header(data, path):
    lines = []
    offset = 0
    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise ParseError("header not terminated by end_header", path=path, offset=offset)
        lines.append((offset, data[offset:end].rstrip(b"\r").decode("ascii", "replace")))
        offset = end + 1
        if lines[-1][1].strip() == "end_header":
            break
    if lines[0][1].strip() != "ply":
        raise ParseError("missing 'ply' magic line", path=path, offset=0)

    binary = None
    elements = []
    sensor_origin = None
    for line_offset, line in lines[1:-1]:
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format":
            if len(tokens) < 2:
                raise ParseError("malformed format line", path=path, offset=line_offset)
            if tokens[1] == "ascii":
                binary = False
            elif tokens[1] == "binary_little_endian":
                binary = True
            else:
                raise ParseError(f"unsupported PLY format '{tokens[1]}'",
                                 path=path, offset=line_offset)
        elif tokens[0] == "comment":
            if len(tokens) == 5 and tokens[1] == "sensor_origin":
                try:
                    sensor_origin = np.array([float(v) for v in tokens[2:5]])
                except ValueError:
                    pass
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError("malformed element line", path=path, offset=line_offset)
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError(f"bad element count '{tokens[2]}'",
                                 path=path, offset=line_offset) from None
            elements.append(_Element(tokens[1], count))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError("property before any element", path=path, offset=line_offset)
            if tokens[1] == "list":
                elements[-1].properties.append((tokens[-1], None))
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_TYPES:
                    raise ParseError(f"unsupported property line '{line}'",
                                     path=path, offset=line_offset)
                elements[-1].properties.append((tokens[2], tokens[1]))
        elif tokens[0] in ("obj_info",):
            continue
        else:
            raise ParseError(f"unrecognized header line '{line}'",
                             path=path, offset=line_offset)
    if binary is None:
        raise ParseError("header missing format line", path=path, offset=0)
    return binary, elements, sensor_origin, offset


def _vertex_layout(element, path):
    names = [name for name, _ in element.properties]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"vertex element lacks '{axis}' property", path=path)
        ptype = dict(element.properties)[axis]
        if ptype not in _FLOAT_TYPES:
            raise ParseError(f"vertex '{axis}' must be float32/float64, got '{ptype}'",
                             path=path)
    skipped = [name for name, ptype in element.properties
               if name not in ("x", "y", "z") or ptype is None]
    if skipped:
        warnings.warn(f"skipping PLY vertex properties: {', '.join(skipped)}",
                      stacklevel=3)


def _load_ply(data, path):
    binary, elements, sensor_origin, data_start = _parse_ply_header(data, path)
    offset = data_start
    points = None
    for element in elements:
        is_vertex = element.name == "vertex"
        has_list = any(code is None for _, code in element.properties)
        if is_vertex:
            if has_list:
                raise ParseError("list properties in vertex element are unsupported",
                                 path=path, offset=offset)
            _vertex_layout(element, path)
        if binary:
            if has_list and not is_vertex:
                if points is not None:
                    break  # vertices already read; trailing elements are ignored
                raise ParseError(
                    f"cannot skip element '{element.name}' with list properties",
                    path=path, offset=offset)
            dtype = np.dtype([(name if code else f"_pad{i}",
                               "<" + _PLY_TYPES[code] if code else "u1")
                              for i, (name, code) in enumerate(element.properties)])
            nbytes = dtype.itemsize * element.count
            if offset + nbytes > len(data):
                raise ParseError(
                    f"truncated payload for element '{element.name}': "
                    f"need {nbytes} bytes, have {len(data) - offset}",
                    path=path, offset=len(data))
            if is_vertex:
                rows = np.frombuffer(data, dtype=dtype, count=element.count, offset=offset)
                points = np.stack([rows["x"].astype(np.float64),
                                   rows["y"].astype(np.float64),
                                   rows["z"].astype(np.float64)], axis=1)
            offset += nbytes
        else:
            names = [name for name, _ in element.properties]
            rows = np.empty((element.count, 3)) if is_vertex else None
            if is_vertex:
                xi, yi, zi = (names.index(a) for a in ("x", "y", "z"))
            for row in range(element.count):
                end = data.find(b"\n", offset)
                if end < 0:
                    end = len(data)
                    if offset >= end:
                        raise ParseError(
                            f"truncated payload for element '{element.name}' "
                            f"(row {row} of {element.count})",
                            path=path, offset=offset)
                line = data[offset:end].split()
                if is_vertex:
                    if len(line) < len(names):
                        raise ParseError(
                            f"vertex row {row} has {len(line)} values, expected {len(names)}",
                            path=path, offset=offset)
                    try:
                        rows[row] = (float(line[xi]), float(line[yi]), float(line[zi]))
                    except ValueError as exc:
                        raise ParseError(f"bad vertex value: {exc}",
                                         path=path, offset=offset) from None
                offset = end + 1
            if is_vertex:
                points = rows
    if points is None:
        raise ParseError("no vertex element in PLY file", path=path)
    if sensor_origin is None:
        sensor_origin = np.zeros(3)
    return PointCloud(points, sensor_origin)


def _load_xyz(data, path):
    rows = []
    offset = 0
    length = len(data)
    while offset < length:
        end = data.find(b"\n", offset)
        if end < 0:
            end = length
        line = data[offset:end].split()
        if line:
            if len(line) != 3:
                raise ParseError(f"expected 3 values per line, got {len(line)}",
                                 path=path, offset=offset)
            try:
                rows.append((float(line[0]), float(line[1]), float(line[2])))
            except ValueError as exc:
                raise ParseError(f"bad coordinate: {exc}", path=path, offset=offset) from None
        offset = end + 1
    return PointCloud(np.array(rows) if rows else np.empty((0, 3)))


def load_point_cloud(path, format: str | None = None) -> PointCloud:
    """Read a point cloud; ``format=None`` sniffs PLY magic vs. plain text."""
    with open(path, "rb") as fh:
        data = fh.read()
    if format is None:
        format = "ply-ascii" if data[:3] == b"ply" else "xyz-text"
    if format in ("ply-ascii", "ply-binary-le"):
        return _load_ply(data, path)
    if format == "xyz-text":
        return _load_xyz(data, path)
    raise ValueError(f"unknown format '{format}', expected one of {FORMATS}")


def _ply_header(cloud, binary):
    lines = ["ply",
             "format binary_little_endian 1.0" if binary else "format ascii 1.0"]
    if np.any(cloud.sensor_origin != 0.0):
        lines.append("comment sensor_origin "
                     + " ".join(f"{v:.17g}" for v in cloud.sensor_origin))
    lines += [f"element vertex {len(cloud)}",
              "property double x",
              "property double y",
              "property double z",
              "end_header"]
    return ("\n".join(lines) + "\n").encode("ascii")


def save_point_cloud(cloud: PointCloud, path, format: str = "ply-binary-le") -> None:
    """Write a point cloud so that load(save(cloud)) reproduces it exactly."""
    if format == "ply-binary-le":
        payload = cloud.points.astype("<f8").tobytes(order="C")
        with open(path, "wb") as fh:
            fh.write(_ply_header(cloud, binary=True))
            fh.write(payload)
    elif format == "ply-ascii":
        with open(path, "wb") as fh:
            fh.write(_ply_header(cloud, binary=False))
            for p in cloud.points:
                fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n".encode("ascii"))
    elif format == "xyz-text":
        with open(path, "w", encoding="ascii") as fh:
            for p in cloud.points:
                fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    else:
        raise ValueError(f"unknown format '{format}', expected one of {FORMATS}")
