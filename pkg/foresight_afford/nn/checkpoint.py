# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Checkpoint files.

Layout, little-endian::

    magic "FACK" | u16 version | f32 width | u16 in_channels | u8 role | i32 stage
    u32 lineage length | lineage JSON (utf-8)
    u32 tensor count | per tensor: u16 name length, name, u8 ndim, u32 dims
    float32 weight blobs in manifest order
    sha256 of everything above
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import CheckpointFormatError, MissingCheckpoint
from .model import NETS, AffordanceNet

logger = logging.getLogger(__name__)

MAGIC = b"FACK"
VERSION = 1
_HEADER = struct.Struct("<4sHfHBi")
_ROLES = ["pick", "place"]
_DIGEST = hashlib.sha256().digest_size


def encode_checkpoint(net: AffordanceNet) -> bytes:
    lineage = dict(net.lineage, checksum=net.checksum())
    blob = json.dumps(lineage, sort_keys=True).encode("utf-8")
    params = net.parameters()
    parts = [
        _HEADER.pack(MAGIC, VERSION, net.width, net.in_channels, _ROLES.index(net.ROLE), net.stage),
        struct.pack("<I", len(blob)),
        blob,
        struct.pack("<I", len(params)),
    ]
    for name, value in params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", value.ndim) + struct.pack("<{}I".format(value.ndim), *value.shape))
    for value in params.values():
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(data: bytes) -> AffordanceNet:
    if len(data) < _HEADER.size + _DIGEST:
        raise CheckpointFormatError("checkpoint is truncated")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointFormatError("checkpoint checksum mismatch")
    magic, version, width, in_channels, role, stage = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (magic {!r})".format(magic))
    if version != VERSION:
        raise CheckpointFormatError("unsupported checkpoint version {}".format(version))
    if role >= len(_ROLES):
        raise CheckpointFormatError("unknown network role {}".format(role))
    offset = _HEADER.size

    def unpack(fmt: str) -> Tuple:
        nonlocal offset
        values = struct.unpack_from(fmt, body, offset)
        offset += struct.calcsize(fmt)
        return values

    try:
        (size,) = unpack("<I")
        lineage = json.loads(body[offset:offset + size].decode("utf-8"))
        offset += size
        (count,) = unpack("<I")
        manifest: List[Tuple[str, Tuple[int, ...]]] = []
        for _ in range(count):
            (length,) = unpack("<H")
            name = body[offset:offset + length].decode("utf-8")
            offset += length
            (ndim,) = unpack("<B")
            manifest.append((name, tuple(unpack("<{}I".format(ndim)))))
    except (struct.error, UnicodeDecodeError, ValueError) as err:
        raise CheckpointFormatError("corrupt checkpoint header: {}".format(err)) from err

    # float32 round trip of the stored width
    width = float(np.float32(width))
    net = NETS[_ROLES[role]](in_channels=in_channels, width=round(width, 6))
    params = net.parameters()
    if [(name, params[name].shape) for name in params] != manifest:
        raise CheckpointFormatError(
            "layer manifest does not match a {} network of width {}".format(_ROLES[role], width)
        )
    for name, shape in manifest:
        n = int(np.prod(shape))
        if offset + 4 * n > len(body):
            raise CheckpointFormatError("weight blob of {} is truncated".format(name))
        params[name][...] = np.frombuffer(body, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += 4 * n
    if offset != len(body):
        raise CheckpointFormatError("{} trailing bytes after the weights".format(len(body) - offset))
    net.stage = stage
    lineage.pop("checksum", None)
    net.lineage = lineage
    return net


def save_checkpoint(net: AffordanceNet, path: Union[str, Path]) -> str:
    """Write ``net`` to ``path`` and return its content id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(net))
    logger.info("saved %s checkpoint %s (stage %d) to %s", net.ROLE, net.checksum(), net.stage, path)
    return net.checksum()


def load_checkpoint(path: Union[str, Path]) -> AffordanceNet:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint("checkpoint {} does not exist".format(path))
    return decode_checkpoint(path.read_bytes())
