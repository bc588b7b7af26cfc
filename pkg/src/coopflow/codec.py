"""Self-describing portable binary records.

Every message carries its full descriptor, so a reader needs no side channel
to interpret the payload. Metadata is always little-endian; payload numerics
follow the byte-order bit in the flags byte.

Wire layout:

    magic "PBO1" | version 0x01 | flags u8 | name-len u8 | name |
    field-count u16le | (name-len u8, name, kind u8, size u8)* | payload

Payload values are packed in declared field order with no padding. STRING and
BYTES fields are length-prefixed with a u32 in the payload byte order.
"""
from __future__ import annotations

import base64
import hashlib
import math
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from .errors import (
    BadMagicError,
    FormatMismatchError,
    InvalidDescriptorError,
    InvalidUtf8Error,
    MalformedDescriptorError,
    NonConformingRecordError,
    OverflowingNarrowError,
    TrailingBytesError,
    TruncatedMessageError,
    TypeMismatchError,
    UnsupportedVersionError,
)

MAGIC = b"PBO1"
VERSION = 1

Value = Union[int, float, str, bytes]
Record = "dict[str, Value]"


class FieldKind(str, Enum):
    SINT = "sint"
    UINT = "uint"
    FLOAT = "float"
    STRING = "string"
    BYTES = "bytes"


_WIRE_CODE = {
    FieldKind.SINT: 0x01,
    FieldKind.UINT: 0x02,
    FieldKind.FLOAT: 0x03,
    FieldKind.STRING: 0x04,
    FieldKind.BYTES: 0x05,
}
_CODE_KIND = {v: k for k, v in _WIRE_CODE.items()}

_INT_SIZES = (1, 2, 4, 8)
_FLOAT_SIZES = (4, 8)


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    kind: FieldKind
    size: int  # bytes; 0 for STRING/BYTES (length-prefixed)


@dataclass(frozen=True)
class FormatDescriptor:
    name: str
    fields: tuple[FieldDescriptor, ...] = field(default_factory=tuple)

    def field_map(self) -> "dict[str, FieldDescriptor]":
        return {f.name: f for f in self.fields}


@dataclass(frozen=True)
class DecodeReport:
    """What field matching did: source-only names dropped, target-only names
    defaulted, and (name, from-spec, to-spec) for representation changes."""

    dropped: tuple[str, ...] = ()
    defaulted: tuple[str, ...] = ()
    converted: tuple[tuple[str, str, str], ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.dropped or self.defaulted or self.converted)


def _field_spec(fd: FieldDescriptor) -> str:
    return f"{fd.kind.value}{fd.size}" if fd.size else fd.kind.value


def validate_descriptor(desc: FormatDescriptor) -> None:
    """Raise InvalidDescriptor unless desc satisfies every structural rule."""
    if not isinstance(desc.name, str) or not desc.name:
        raise InvalidDescriptorError("format name must be a non-empty string")
    if len(desc.name.encode("utf-8")) > 255:
        raise InvalidDescriptorError("format name exceeds 255 bytes")
    if len(desc.fields) > 0xFFFF:
        raise InvalidDescriptorError("format exceeds 65535 fields")
    seen: set[str] = set()
    for fd in desc.fields:
        if not isinstance(fd.name, str) or not fd.name:
            raise InvalidDescriptorError("field name must be a non-empty string")
        if len(fd.name.encode("utf-8")) > 255:
            raise InvalidDescriptorError(f"field name '{fd.name}' exceeds 255 bytes")
        if fd.name in seen:
            raise InvalidDescriptorError(f"duplicate field name '{fd.name}'")
        seen.add(fd.name)
        if not isinstance(fd.kind, FieldKind):
            raise InvalidDescriptorError(f"field '{fd.name}' has unknown kind")
        if fd.kind in (FieldKind.SINT, FieldKind.UINT):
            if fd.size not in _INT_SIZES:
                raise InvalidDescriptorError(f"field '{fd.name}': integer size must be 1, 2, 4 or 8")
        elif fd.kind is FieldKind.FLOAT:
            if fd.size not in _FLOAT_SIZES:
                raise InvalidDescriptorError(f"field '{fd.name}': float size must be 4 or 8")
        else:
            if fd.size != 0:
                raise InvalidDescriptorError(f"field '{fd.name}': {fd.kind.value} size must be 0")


def _descriptor_bytes(desc: FormatDescriptor) -> bytes:
    """Canonical serialization: the metadata section after the flags byte."""
    out = bytearray()
    name = desc.name.encode("utf-8")
    out.append(len(name))
    out += name
    out += struct.pack("<H", len(desc.fields))
    for fd in desc.fields:
        fname = fd.name.encode("utf-8")
        out.append(len(fname))
        out += fname
        out.append(_WIRE_CODE[fd.kind])
        out.append(fd.size)
    return bytes(out)


def format_id(desc: FormatDescriptor) -> str:
    """First 8 bytes of SHA-256 over the canonical serialization, as hex."""
    validate_descriptor(desc)
    return hashlib.sha256(_descriptor_bytes(desc)).hexdigest()[:16]


class FormatRegistry:
    """Descriptor store keyed by format id. Registration is idempotent and
    safe under concurrent use; name collisions are allowed (lookup is by id)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._by_id: dict[str, FormatDescriptor] = {}

    def register(self, desc: FormatDescriptor) -> str:
        fid = format_id(desc)
        with self._lock:
            self._by_id.setdefault(fid, desc)
        return fid

    def get(self, fid: str) -> "FormatDescriptor | None":
        with self._lock:
            return self._by_id.get(fid)

    def __len__(self) -> int:
        with self._lock:
            return len(self._by_id)


def register_format(registry: FormatRegistry, desc: FormatDescriptor) -> str:
    return registry.register(desc)


# --- value conformance ---

def _int_bounds(kind: FieldKind, size: int) -> "tuple[int, int]":
    if kind is FieldKind.SINT:
        return -(1 << (8 * size - 1)), (1 << (8 * size - 1)) - 1
    return 0, (1 << (8 * size)) - 1


def _is_binary32(v: float) -> bool:
    if math.isnan(v):
        return True  # any NaN survives a 4-byte trip
    try:
        packed = struct.pack("<f", v)
    except (OverflowError, struct.error):
        return False
    return struct.unpack("<f", packed)[0] == v


def _check_value(fd: FieldDescriptor, v: Value) -> None:
    if fd.kind in (FieldKind.SINT, FieldKind.UINT):
        if not isinstance(v, int) or isinstance(v, bool):
            raise NonConformingRecordError(f"field '{fd.name}' expects an integer")
        lo, hi = _int_bounds(fd.kind, fd.size)
        if not lo <= v <= hi:
            raise NonConformingRecordError(
                f"field '{fd.name}' value {v} outside [{lo}, {hi}]")
    elif fd.kind is FieldKind.FLOAT:
        if not isinstance(v, float):
            raise NonConformingRecordError(f"field '{fd.name}' expects a float")
        if fd.size == 4 and not _is_binary32(v):
            raise NonConformingRecordError(
                f"field '{fd.name}' value {v!r} is not exactly representable in 4 bytes")
    elif fd.kind is FieldKind.STRING:
        if not isinstance(v, str):
            raise NonConformingRecordError(f"field '{fd.name}' expects a string")
        try:
            v.encode("utf-8")
        except UnicodeEncodeError:
            raise NonConformingRecordError(f"field '{fd.name}' is not encodable as UTF-8")
    else:
        if not isinstance(v, (bytes, bytearray)):
            raise NonConformingRecordError(f"field '{fd.name}' expects bytes")


def check_conforms(desc: FormatDescriptor, rec: "Record") -> None:
    """Raise NonConformingRecord unless rec matches desc field for field."""
    names = [fd.name for fd in desc.fields]
    got = list(rec.keys())
    if got != names:
        raise NonConformingRecordError(
            f"record fields {got} do not match descriptor fields {names}")
    for fd in desc.fields:
        _check_value(fd, rec[fd.name])


# --- encode / decode ---

def encode(desc: FormatDescriptor, rec: "Record", order: str = "little") -> bytes:
    if order not in ("little", "big"):
        raise ValueError(f"order must be 'little' or 'big', not {order!r}")
    validate_descriptor(desc)
    check_conforms(desc, rec)
    flags = 0 if order == "little" else 1
    out = bytearray(MAGIC)
    out.append(VERSION)
    out.append(flags)
    out += _descriptor_bytes(desc)
    fc = "<" if order == "little" else ">"
    for fd in desc.fields:
        v = rec[fd.name]
        if fd.kind in (FieldKind.SINT, FieldKind.UINT):
            out += v.to_bytes(fd.size, order, signed=fd.kind is FieldKind.SINT)
        elif fd.kind is FieldKind.FLOAT:
            out += struct.pack(fc + ("f" if fd.size == 4 else "d"), v)
        else:
            raw = v.encode("utf-8") if fd.kind is FieldKind.STRING else bytes(v)
            out += len(raw).to_bytes(4, order)
            out += raw
    return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedMessageError(
                f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]


def decode(data: bytes) -> "tuple[FormatDescriptor, Record]":
    desc, rec, _ = decode_with_order(data)
    return desc, rec


def decode_with_order(data: bytes) -> "tuple[FormatDescriptor, Record, str]":
    cur = _Cursor(bytes(data))
    magic = cur.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, got {magic!r}")
    version = cur.u8()
    if version != VERSION:
        raise UnsupportedVersionError(f"version {version} not supported")
    flags = cur.u8()
    if flags & 0xFE:
        raise MalformedDescriptorError(f"reserved flag bits set: {flags:#04x}")
    order = "big" if flags & 0x01 else "little"
    name_len = cur.u8()
    try:
        name = cur.take(name_len).decode("utf-8")
    except UnicodeDecodeError:
        raise InvalidUtf8Error("format name is not valid UTF-8")
    (field_count,) = struct.unpack("<H", cur.take(2))
    fields: list[FieldDescriptor] = []
    seen: set[str] = set()
    for _ in range(field_count):
        fname_len = cur.u8()
        if fname_len == 0:
            raise MalformedDescriptorError("field name must be non-empty")
        try:
            fname = cur.take(fname_len).decode("utf-8")
        except UnicodeDecodeError:
            raise InvalidUtf8Error("field name is not valid UTF-8")
        if fname in seen:
            raise MalformedDescriptorError(f"duplicate field name '{fname}'")
        seen.add(fname)
        code = cur.u8()
        kind = _CODE_KIND.get(code)
        if kind is None:
            raise MalformedDescriptorError(f"unknown field kind {code:#04x}")
        size = cur.u8()
        fd = FieldDescriptor(fname, kind, size)
        if kind in (FieldKind.SINT, FieldKind.UINT):
            if size not in _INT_SIZES:
                raise MalformedDescriptorError(f"field '{fname}': bad integer size {size}")
        elif kind is FieldKind.FLOAT:
            if size not in _FLOAT_SIZES:
                raise MalformedDescriptorError(f"field '{fname}': bad float size {size}")
        elif size != 0:
            raise MalformedDescriptorError(f"field '{fname}': {kind.value} size must be 0")
        fields.append(fd)
    desc = FormatDescriptor(name, tuple(fields))
    fc = "<" if order == "little" else ">"
    rec: dict[str, Value] = {}
    for fd in fields:
        if fd.kind in (FieldKind.SINT, FieldKind.UINT):
            rec[fd.name] = int.from_bytes(
                cur.take(fd.size), order, signed=fd.kind is FieldKind.SINT)
        elif fd.kind is FieldKind.FLOAT:
            (rec[fd.name],) = struct.unpack(
                fc + ("f" if fd.size == 4 else "d"), cur.take(fd.size))
        else:
            length = int.from_bytes(cur.take(4), order)
            raw = cur.take(length)
            if fd.kind is FieldKind.STRING:
                try:
                    rec[fd.name] = raw.decode("utf-8")
                except UnicodeDecodeError:
                    raise InvalidUtf8Error(f"field '{fd.name}' payload is not valid UTF-8")
            else:
                rec[fd.name] = raw
    if cur.pos != len(cur.data):
        raise TrailingBytesError(f"{len(cur.data) - cur.pos} bytes after payload")
    return desc, rec, order


# --- conversion ---

def _int_to_binary32(n: int) -> float:
    """Round an integer to the nearest binary32 value, ties to even.

    Rounding through binary64 first can double-round (e.g. 2**60 + 2**36 + 1),
    so round directly on the integer bits.
    """
    if n == 0:
        return 0.0
    m = abs(n)
    bits = m.bit_length()
    if bits <= 24:
        result = float(m)
    else:
        drop = bits - 24
        head = m >> drop
        rem = m & ((1 << drop) - 1)
        half = 1 << (drop - 1)
        if rem > half or (rem == half and head & 1):
            head += 1
        if head << drop >= 1 << 128:
            raise OverflowingNarrowError("", "integer overflows 4-byte float")
        result = float(head) * (2.0 ** drop)
    return -result if n < 0 else result


def _narrow_float(name: str, v: float) -> float:
    if math.isnan(v):
        return v
    try:
        narrowed = struct.unpack("<f", struct.pack("<f", v))[0]
    except (OverflowError, struct.error):
        raise OverflowingNarrowError(name, "overflows 4-byte float")
    if math.isinf(narrowed) and not math.isinf(v):
        raise OverflowingNarrowError(name, "overflows 4-byte float")
    return narrowed


def convert(rec: "Record", src: FormatDescriptor, dst: FormatDescriptor) -> "tuple[Record, DecodeReport]":
    """Match fields by exact name and coerce values toward dst.

    Widening is exact. Narrowing integers must preserve the value; narrowing
    floats rounds to nearest-even and treats a finite value landing on
    infinity as unrepresentable. Integers convert to floats (nearest-even);
    every other cross-kind pairing is an error. Target-only fields get zero
    values, source-only fields are dropped.
    """
    validate_descriptor(src)
    validate_descriptor(dst)
    check_conforms(src, rec)
    src_fields = src.field_map()
    out: dict[str, Value] = {}
    dropped: list[str] = []
    defaulted: list[str] = []
    converted: list[tuple[str, str, str]] = []
    for dfd in dst.fields:
        sfd = src_fields.get(dfd.name)
        if sfd is None:
            if dfd.kind in (FieldKind.SINT, FieldKind.UINT):
                out[dfd.name] = 0
            elif dfd.kind is FieldKind.FLOAT:
                out[dfd.name] = 0.0
            elif dfd.kind is FieldKind.STRING:
                out[dfd.name] = ""
            else:
                out[dfd.name] = b""
            defaulted.append(dfd.name)
            continue
        v = rec[sfd.name]
        if sfd.kind == dfd.kind and sfd.size == dfd.size:
            out[dfd.name] = v
            continue
        changed = (dfd.name, _field_spec(sfd), _field_spec(dfd))
        if sfd.kind in (FieldKind.SINT, FieldKind.UINT) and dfd.kind in (FieldKind.SINT, FieldKind.UINT):
            lo, hi = _int_bounds(dfd.kind, dfd.size)
            if not lo <= v <= hi:
                raise OverflowingNarrowError(dfd.name, f"{v} outside [{lo}, {hi}]")
            out[dfd.name] = v
        elif sfd.kind is FieldKind.FLOAT and dfd.kind is FieldKind.FLOAT:
            out[dfd.name] = _narrow_float(dfd.name, v) if dfd.size == 4 else v
        elif sfd.kind in (FieldKind.SINT, FieldKind.UINT) and dfd.kind is FieldKind.FLOAT:
            out[dfd.name] = _int_to_binary32(v) if dfd.size == 4 else float(v)
        elif sfd.kind is FieldKind.FLOAT and dfd.kind in (FieldKind.SINT, FieldKind.UINT):
            raise TypeMismatchError(dfd.name, "float does not convert to integer")
        else:
            raise TypeMismatchError(
                dfd.name, f"{sfd.kind.value} does not convert to {dfd.kind.value}")
        converted.append(changed)
    dst_names = {fd.name for fd in dst.fields}
    for sfd in src.fields:
        if sfd.name not in dst_names:
            dropped.append(sfd.name)
    return out, DecodeReport(tuple(dropped), tuple(defaulted), tuple(converted))


def decode_as(data: bytes, dst: FormatDescriptor) -> "tuple[Record, DecodeReport]":
    src, rec = decode(data)
    return convert(rec, src, dst)


# --- JSON bridges ---

_DESCRIPTOR_KEYS = {"name", "fields"}
_FIELD_KEYS = {"name", "kind", "size"}


def descriptor_from_json(obj: object) -> FormatDescriptor:
    """Parse {"name": ..., "fields": [{"name", "kind", "size"}, ...]}.

    Shape errors raise here; semantic rules (sizes per kind, duplicates)
    are validate_descriptor's job.
    """
    from .errors import MalformedDefinitionError, UnknownKeyError

    if not isinstance(obj, dict):
        raise MalformedDefinitionError("format descriptor must be an object")
    extra = set(obj) - _DESCRIPTOR_KEYS
    if extra:
        raise UnknownKeyError(f"unknown key '{sorted(extra)[0]}' in format descriptor")
    name = obj.get("name")
    if not isinstance(name, str):
        raise MalformedDefinitionError("format descriptor needs a string 'name'")
    raw_fields = obj.get("fields")
    if not isinstance(raw_fields, list):
        raise MalformedDefinitionError(f"format '{name}' needs a 'fields' array")
    fields = []
    for entry in raw_fields:
        if not isinstance(entry, dict):
            raise MalformedDefinitionError(f"format '{name}': each field must be an object")
        extra = set(entry) - _FIELD_KEYS
        if extra:
            raise UnknownKeyError(
                f"unknown key '{sorted(extra)[0]}' in field of format '{name}'")
        fname = entry.get("name")
        kind_s = entry.get("kind")
        size = entry.get("size")
        if not isinstance(fname, str):
            raise MalformedDefinitionError(f"format '{name}': field needs a string 'name'")
        try:
            kind = FieldKind(kind_s)
        except ValueError:
            raise MalformedDefinitionError(
                f"format '{name}': field '{fname}' has unknown kind {kind_s!r}")
        if not isinstance(size, int) or isinstance(size, bool):
            raise MalformedDefinitionError(
                f"format '{name}': field '{fname}' needs an integer 'size'")
        fields.append(FieldDescriptor(fname, kind, size))
    return FormatDescriptor(name, tuple(fields))


def descriptor_to_json(desc: FormatDescriptor) -> dict:
    return {
        "name": desc.name,
        "fields": [
            {"name": fd.name, "kind": fd.kind.value, "size": fd.size}
            for fd in desc.fields
        ],
    }


def build_record(desc: FormatDescriptor, values: "dict[str, object]", allow_extra: bool = False) -> "Record":
    """Construct a conforming record from loosely typed (JSON) values.

    Integer values are accepted for float fields; 4-byte float fields round
    the value to nearest-even rather than demanding an exact representation.
    Bytes fields accept base64 text. With allow_extra, surplus keys are
    ignored (used to project one output map onto several edge formats).
    """
    known = {fd.name for fd in desc.fields}
    extra = set(values) - known
    if extra and not allow_extra:
        raise FormatMismatchError(
            f"unexpected field '{sorted(extra)[0]}' for format '{desc.name}'")
    rec: dict[str, Value] = {}
    for fd in desc.fields:
        if fd.name not in values:
            raise FormatMismatchError(
                f"format '{desc.name}' requires field '{fd.name}'")
        v = values[fd.name]
        if fd.kind in (FieldKind.SINT, FieldKind.UINT):
            if not isinstance(v, int) or isinstance(v, bool):
                raise FormatMismatchError(f"field '{fd.name}' expects an integer")
            rec[fd.name] = v
        elif fd.kind is FieldKind.FLOAT:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise FormatMismatchError(f"field '{fd.name}' expects a number")
            if fd.size == 4:
                try:
                    rec[fd.name] = (
                        _int_to_binary32(v) if isinstance(v, int) else _narrow_float(fd.name, v)
                    )
                except OverflowingNarrowError:
                    raise FormatMismatchError(f"field '{fd.name}' overflows a 4-byte float")
            else:
                try:
                    rec[fd.name] = float(v)
                except OverflowError:
                    raise FormatMismatchError(f"field '{fd.name}' overflows an 8-byte float")
        elif fd.kind is FieldKind.STRING:
            if not isinstance(v, str):
                raise FormatMismatchError(f"field '{fd.name}' expects a string")
            rec[fd.name] = v
        else:
            if isinstance(v, (bytes, bytearray)):
                rec[fd.name] = bytes(v)
            elif isinstance(v, str):
                try:
                    rec[fd.name] = base64.b64decode(v, validate=True)
                except Exception:
                    raise FormatMismatchError(f"field '{fd.name}' is not valid base64")
            else:
                raise FormatMismatchError(f"field '{fd.name}' expects bytes or base64 text")
    check_conforms(desc, rec)
    return rec


def record_to_jsonable(desc: FormatDescriptor, rec: "Record") -> dict:
    """JSON-safe view of a record: bytes become base64 text."""
    out: dict[str, object] = {}
    for fd in desc.fields:
        v = rec[fd.name]
        out[fd.name] = base64.b64encode(v).decode("ascii") if isinstance(v, bytes) else v
    return out
