"""Little-endian tensor archive (``LODT``) for model graphs.

Layout::

    b"LODT" | u32 version | u32 layer_count
    per layer:
        u32 id_len | id (UTF-8) | u8 component | u8 activation
        u32 rows | u32 cols | u8 has_bias
        rows*cols f64 (row-major) | [rows f64 bias]

No padding. ``save_model`` also writes ``<path>.manifest`` with one
``id<TAB>tag<TAB>rows<TAB>cols`` line per layer.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, StructuralError
from .graph import Activation, ComponentTag, LayerSpec, ModelGraph

MAGIC = b"LODT"
VERSION = 1


def dumps_model(g: ModelGraph) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(g))]
    for layer in g:
        name = layer.layer_id.encode("utf-8")
        rows, cols = layer.shape
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(
            struct.pack(
                "<BBIIB",
                int(layer.component),
                int(layer.activation),
                rows,
                cols,
                layer.bias is not None,
            )
        )
        parts.append(layer.weight.values.astype("<f8").tobytes())
        if layer.bias is not None:
            parts.append(layer.bias.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated archive: need {n} bytes for {what}, "
                f"{len(self.data) - self.pos} left",
                offset=self.pos,
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_model(data: bytes) -> ModelGraph:
    r = _Reader(memoryview(data).tobytes())
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, not a LODT archive", offset=0)
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported archive version {version}", offset=4)
    layers = []
    prev_rows = None
    for _ in range(count):
        start = r.pos
        (id_len,) = r.unpack("<I", "layer id length")
        try:
            layer_id = r.take(id_len, "layer id").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("layer id is not valid UTF-8", offset=start + 4) from None
        tag_pos = r.pos
        tag, act, rows, cols, has_bias = r.unpack("<BBIIB", "layer header")
        if tag not in ComponentTag._value2member_map_:
            raise FormatError(f"unknown component tag {tag}", offset=tag_pos)
        if act not in Activation._value2member_map_:
            raise FormatError(f"unknown activation code {act}", offset=tag_pos + 1)
        if rows == 0 or cols == 0:
            raise FormatError(f"layer {layer_id!r} has empty shape {rows}x{cols}", offset=tag_pos + 2)
        if has_bias not in (0, 1):
            raise FormatError(f"bad has_bias flag {has_bias}", offset=tag_pos + 10)
        if prev_rows is not None and cols != prev_rows:
            raise FormatError(
                f"layer {layer_id!r} expects {cols} inputs but the previous layer produces {prev_rows}",
                offset=tag_pos + 6,
            )
        prev_rows = rows
        weight = np.frombuffer(r.take(8 * rows * cols, f"weights of {layer_id!r}"), dtype="<f8")
        bias = None
        if has_bias:
            bias = np.frombuffer(r.take(8 * rows, f"bias of {layer_id!r}"), dtype="<f8")
        layers.append(
            LayerSpec.from_array(
                layer_id,
                weight.reshape(rows, cols).astype(np.float64),
                ComponentTag(tag),
                Activation(act),
                None if bias is None else bias.astype(np.float64),
            )
        )
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after last layer", offset=r.pos)
    try:
        return ModelGraph(layers)
    except StructuralError as exc:
        raise FormatError(f"inconsistent archive: {exc}") from None


def manifest_text(g: ModelGraph) -> str:
    return "".join(
        f"{layer.layer_id}\t{layer.component.name}\t{layer.shape[0]}\t{layer.shape[1]}\n"
        for layer in g
    )


def save_model(g: ModelGraph, path, manifest=True):
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(dumps_model(g))
    if manifest:
        with open(path + ".manifest", "w", encoding="utf-8") as fh:
            fh.write(manifest_text(g))
    return path


def load_model(path) -> ModelGraph:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
