"""
二进制容器格式的读写

- HMAP：深度图（相机坐标系）或高度图（世界坐标系）栅格
- TSEQ：触觉序列，每帧附带力代理值
- TFEA：特征向量，16 字节头部包含滤波器组配置哈希
- TMDL：训练好的模型参数

所有整数与浮点数均为小端序。
"""
import os
from struct import Struct
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.errors import FormatError

HMAP_MAGIC = b"HMAP\x01"
TSEQ_MAGIC = b"TSEQ\x01"
TFEA_MAGIC = b"TFEA"
TMDL_MAGIC = b"TMDL\x01"

FRAME_CAMERA = 0
FRAME_WORLD = 1

_HMAP_HEADER = Struct('<IIfB')
_TSEQ_COUNT = Struct('<H')
_TSEQ_FRAME = Struct('<fII')
_TFEA_HEADER = Struct('<I8s')
_TMDL_KIND = Struct('<B')
_TMDL_DIMS = Struct('<III')
_U16 = Struct('<H')
_U32 = Struct('<I')
_U8 = Struct('<B')

MODEL_KIND_PROPERTY = 0
MODEL_KIND_GRIP = 1


class RasterRecord(NamedTuple):
    """HMAP 文件内容"""
    values: np.ndarray
    mpp: float
    frame: int


class ModelBlob(NamedTuple):
    """TMDL 文件内容"""
    bank_hash: bytes
    kind: int
    head_dims: Tuple[int, ...]
    in_dim: int
    hidden: int
    frames: int
    tensors: Dict[str, np.ndarray]


class _Reader:
    """带边界检查的顺序读取器"""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"Truncated {self.what} data at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype='<f4').copy()

    def expect(self, magic: bytes) -> None:
        head = self.take(len(magic))
        if head != magic:
            if head[:4] == magic[:4]:
                raise FormatError(f"Unsupported {self.what} version {head[4:]!r}")
            raise FormatError(f"Bad {self.what} magic {head!r}")

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{len(self.data) - self.offset} trailing bytes in {self.what} data")


def _f32(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype='<f4').tobytes()


# ---------------------------------------------------------------- HMAP

def encode_hmap(values: np.ndarray, mpp: float, frame: int) -> bytes:
    """
    编码栅格

    :param values: 形状为 (H, W) 的数组，单位为米；相机深度中无效像素存为 0
    :type values: np.ndarray
    :param mpp: 每像素对应的米数
    :type mpp: float
    :param frame: ``FRAME_CAMERA`` 或 ``FRAME_WORLD``
    :type frame: int
    :rtype: bytes
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError(f"HMAP raster must be 2-D, got shape {values.shape}")
    if frame not in (FRAME_CAMERA, FRAME_WORLD):
        raise FormatError(f"Unknown HMAP frame tag {frame}")
    h, w = values.shape
    return HMAP_MAGIC + _HMAP_HEADER.pack(w, h, float(mpp), frame) + _f32(values)


def decode_hmap(data: bytes) -> RasterRecord:
    reader = _Reader(data, 'HMAP')
    reader.expect(HMAP_MAGIC)
    w, h, mpp, frame = reader.unpack(_HMAP_HEADER)
    if frame not in (FRAME_CAMERA, FRAME_WORLD):
        raise FormatError(f"Unknown HMAP frame tag {frame}")
    values = reader.floats(w * h).reshape(h, w)
    reader.finish()
    return RasterRecord(values, float(mpp), int(frame))


def write_hmap(path: str, values: np.ndarray, mpp: float, frame: int) -> None:
    _write(path, encode_hmap(values, mpp, frame))


def read_hmap(path: str) -> RasterRecord:
    return decode_hmap(_read(path))


# ---------------------------------------------------------------- TSEQ

def encode_tseq(frames: Sequence[np.ndarray], forces: Sequence[float]) -> bytes:
    """
    编码触觉序列

    :param frames: 每帧 (H, W) 形变栅格，单位毫米
    :param forces: 每帧力代理值
    :rtype: bytes
    """
    if len(frames) != len(forces):
        raise FormatError(f"{len(frames)} frames but {len(forces)} force values")
    if len(frames) > 0xFFFF:
        raise FormatError("Too many frames for a TSEQ container")
    parts = [TSEQ_MAGIC, _TSEQ_COUNT.pack(len(frames))]
    for frame, force in zip(frames, forces):
        frame = np.asarray(frame)
        h, w = frame.shape
        parts.append(_TSEQ_FRAME.pack(float(force), w, h))
        parts.append(_f32(frame))
    return b''.join(parts)


def decode_tseq(data: bytes) -> Tuple[List[np.ndarray], List[float]]:
    reader = _Reader(data, 'TSEQ')
    reader.expect(TSEQ_MAGIC)
    (count,) = reader.unpack(_TSEQ_COUNT)
    frames, forces = [], []
    for _ in range(count):
        force, w, h = reader.unpack(_TSEQ_FRAME)
        frames.append(reader.floats(w * h).reshape(h, w))
        forces.append(float(force))
    reader.finish()
    return frames, forces


def write_tseq(path: str, frames: Sequence[np.ndarray], forces: Sequence[float]) -> None:
    _write(path, encode_tseq(frames, forces))


def read_tseq(path: str) -> Tuple[List[np.ndarray], List[float]]:
    return decode_tseq(_read(path))


# ---------------------------------------------------------------- TFEA

def encode_features(values: np.ndarray, bank_hash: bytes) -> bytes:
    """特征向量（可为多行，按行展平存储）"""
    if len(bank_hash) != 8:
        raise FormatError("Bank hash must be 8 bytes")
    flat = np.asarray(values, dtype=np.float64).ravel()
    return TFEA_MAGIC + _TFEA_HEADER.pack(flat.size, bank_hash) + _f32(flat)


def decode_features(data: bytes, bank_hash: Optional[bytes] = None) -> np.ndarray:
    reader = _Reader(data, 'TFEA')
    reader.expect(TFEA_MAGIC)
    length, stored_hash = reader.unpack(_TFEA_HEADER)
    if bank_hash is not None and stored_hash != bank_hash:
        raise FormatError(f"Feature file was built with bank {stored_hash.hex()}, expected {bank_hash.hex()}")
    values = reader.floats(length)
    reader.finish()
    return values


def write_features(path: str, values: np.ndarray, bank_hash: bytes) -> None:
    _write(path, encode_features(values, bank_hash))


def read_features(path: str, bank_hash: Optional[bytes] = None) -> np.ndarray:
    return decode_features(_read(path), bank_hash)


# ---------------------------------------------------------------- TMDL

def encode_model(blob: ModelBlob) -> bytes:
    if len(blob.bank_hash) != 8:
        raise FormatError("Bank hash must be 8 bytes")
    parts = [TMDL_MAGIC, blob.bank_hash, _TMDL_KIND.pack(blob.kind), _U16.pack(len(blob.head_dims))]
    parts.extend(_U16.pack(d) for d in blob.head_dims)
    parts.append(_TMDL_DIMS.pack(blob.in_dim, blob.hidden, blob.frames))
    parts.append(_U32.pack(len(blob.tensors)))
    for name, tensor in blob.tensors.items():
        encoded = name.encode('utf-8')
        tensor = np.asarray(tensor)
        parts.append(_U16.pack(len(encoded)) + encoded)
        parts.append(_U8.pack(tensor.ndim))
        parts.extend(_U32.pack(d) for d in tensor.shape)
        parts.append(_f32(tensor))
    return b''.join(parts)


def decode_model(data: bytes, bank_hash: Optional[bytes] = None) -> ModelBlob:
    reader = _Reader(data, 'TMDL')
    reader.expect(TMDL_MAGIC)
    stored_hash = reader.take(8)
    if bank_hash is not None and stored_hash != bank_hash:
        raise FormatError(f"Model was trained with bank {stored_hash.hex()}, expected {bank_hash.hex()}")
    (kind,) = reader.unpack(_TMDL_KIND)
    (n_heads,) = reader.unpack(_U16)
    head_dims = tuple(reader.unpack(_U16)[0] for _ in range(n_heads))
    in_dim, hidden, frames = reader.unpack(_TMDL_DIMS)
    (n_tensors,) = reader.unpack(_U32)
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = reader.unpack(_U16)
        name = reader.take(name_len).decode('utf-8')
        (ndim,) = reader.unpack(_U8)
        shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
        tensors[name] = reader.floats(int(np.prod(shape, dtype=np.int64))).reshape(shape)
    reader.finish()
    return ModelBlob(stored_hash, int(kind), head_dims, int(in_dim), int(hidden), int(frames), tensors)


def write_model(path: str, blob: ModelBlob) -> None:
    _write(path, encode_model(blob))


def read_model(path: str, bank_hash: Optional[bytes] = None) -> ModelBlob:
    return decode_model(_read(path), bank_hash)


def _read(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


def _write(path: str, data: bytes) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)
