"""Versioned weight files and training checkpoints.

Weight file layout: magic ``SNET``, u32 format version, u32 header length,
UTF-8 JSON architecture descriptor, then float32 little-endian parameter
blobs in layer order (kernel, bias per conv layer, projection weight, bias).

A checkpoint is a weight file followed by an ``ADAM`` block holding the
optimizer step count and the float64 first/second-moment arrays.
"""

import hashlib
import json
import struct

import numpy as np

from ..errors import ParseError
from .network import ArchConfig, ConvSpec, NetworkWeights, init_weights

WEIGHTS_MAGIC = b"SNET"
ADAM_MAGIC = b"ADAM"
FORMAT_VERSION = 1


def _arch_to_json(w: NetworkWeights) -> bytes:
    doc = {
        "arch": {
            "conv_layers": [
                {"out_channels": s.out_channels, "kernel": list(s.kernel),
                 "stride": list(s.stride), "activation": s.activation}
                for s in w.arch.conv_layers
            ],
            "descriptor_dim": w.arch.descriptor_dim,
            "padding": w.arch.padding,
            "leaky_slope": w.arch.leaky_slope,
        },
        "input_shape": list(w.input_shape),
        "seed": w.seed,
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def _arch_from_json(blob: bytes, path):
    try:
        doc = json.loads(blob.decode("utf-8"))
        arch = ArchConfig(
            conv_layers=tuple(
                ConvSpec(s["out_channels"], tuple(s["kernel"]),
                         tuple(s["stride"]), s["activation"])
                for s in doc["arch"]["conv_layers"]),
            descriptor_dim=doc["arch"]["descriptor_dim"],
            padding=doc["arch"]["padding"],
            leaky_slope=doc["arch"]["leaky_slope"],
        )
        return arch, tuple(doc["input_shape"]), doc["seed"]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad architecture descriptor: {exc}", path=path) from exc


def serialize_weights(w: NetworkWeights) -> bytes:
    header = _arch_to_json(w)
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header]
    for arr in w.param_arrays():
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    return b"".join(chunks)


def save_weights(w: NetworkWeights, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_weights(w))


def _deserialize_weights(data: bytes, path):
    if data[:4] != WEIGHTS_MAGIC:
        raise ParseError("bad weights magic", path=path, offset=0)
    if len(data) < 12:
        raise ParseError("truncated weights header", path=path, offset=len(data))
    version, header_len = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported weights format version {version}",
                         path=path, offset=4)
    header_end = 12 + header_len
    if len(data) < header_end:
        raise ParseError("truncated architecture descriptor", path=path,
                         offset=len(data))
    arch, input_shape, seed = _arch_from_json(data[12:header_end], path)
    skeleton = init_weights(seed, arch, input_shape)
    offset = header_end
    arrays = []
    for ref in skeleton.param_arrays():
        nbytes = 4 * ref.size
        if offset + nbytes > len(data):
            raise ParseError("truncated parameter blob", path=path, offset=len(data))
        arrays.append(np.frombuffer(data, dtype="<f4", count=ref.size,
                                    offset=offset).astype(np.float64)
                      .reshape(ref.shape))
        offset += nbytes
    return skeleton.with_params(arrays), offset


def load_weights(path) -> NetworkWeights:
    with open(path, "rb") as fh:
        data = fh.read()
    weights, _ = _deserialize_weights(data, path)
    return weights


def weights_hash(w: NetworkWeights) -> str:
    """Content hash of the serialized weights, quoted in reports."""
    return hashlib.sha256(serialize_weights(w)).hexdigest()


def save_checkpoint(w: NetworkWeights, adam_state, path) -> None:
    """Weight file plus optimizer state so training can resume exactly."""
    chunks = [serialize_weights(w), ADAM_MAGIC,
              struct.pack("<Q", adam_state.step)]
    for arr in adam_state.m + adam_state.v:
        chunks.append(np.asarray(arr).astype("<f8").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    from ..training.optim import AdamState

    with open(path, "rb") as fh:
        data = fh.read()
    weights, offset = _deserialize_weights(data, path)
    if data[offset:offset + 4] != ADAM_MAGIC:
        raise ParseError("missing optimizer state block", path=path, offset=offset)
    offset += 4
    if offset + 8 > len(data):
        raise ParseError("truncated optimizer step", path=path, offset=len(data))
    (step,) = struct.unpack("<Q", data[offset:offset + 8])
    offset += 8
    moments = []
    for ref in weights.param_arrays() * 2:
        nbytes = 8 * ref.size
        if offset + nbytes > len(data):
            raise ParseError("truncated optimizer state blob", path=path,
                             offset=len(data))
        moments.append(np.frombuffer(data, dtype="<f8", count=ref.size,
                                     offset=offset).reshape(ref.shape).copy())
        offset += nbytes
    n = len(weights.param_arrays())
    return weights, AdamState(step=step, m=moments[:n], v=moments[n:])
