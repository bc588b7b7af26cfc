"""Wire format: golden vectors, malformed input handling, conversion rules."""

import math
import struct

import pytest

from coopflow.codec import (
    DecodeReport,
    FieldDescriptor,
    FieldKind,
    FormatDescriptor,
    FormatRegistry,
    build_record,
    check_conforms,
    convert,
    decode,
    decode_as,
    decode_with_order,
    descriptor_from_json,
    descriptor_to_json,
    encode,
    format_id,
    record_to_jsonable,
    validate_descriptor,
)
from coopflow.errors import (
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
    UnknownKeyError,
    UnsupportedVersionError,
)
from oracles import format_id_oracle


def fd(name, kind, size):
    return FieldDescriptor(name, FieldKind(kind), size)


P_SINT4 = FormatDescriptor("P", (fd("x", "sint", 4),))

# magic, version 1, flags 0, name "P", one field: "x" sint size 4, payload 7
GOLDEN_LE = bytes([
    0x50, 0x42, 0x4F, 0x31, 0x01, 0x00,
    0x01, 0x50,
    0x01, 0x00,
    0x01, 0x78, 0x01, 0x04,
    0x07, 0x00, 0x00, 0x00,
])
# same message with flags bit0 set: payload byte-swapped, metadata unchanged
GOLDEN_BE = bytes([
    0x50, 0x42, 0x4F, 0x31, 0x01, 0x01,
    0x01, 0x50,
    0x01, 0x00,
    0x01, 0x78, 0x01, 0x04,
    0x00, 0x00, 0x00, 0x07,
])

MIXED = FormatDescriptor("m", (
    fd("a", "sint", 2), fd("b", "float", 8), fd("c", "string", 0)))
MIXED_REC = {"a": -2, "b": 1.5, "c": "hé"}
# -2 as two bytes, 1.5 as binary64 (0x3FF8000000000000), "hé" utf-8 with a
# u32 byte-length prefix in payload order
MIXED_LE = bytes([
    0x50, 0x42, 0x4F, 0x31, 0x01, 0x00,
    0x01, 0x6D,
    0x03, 0x00,
    0x01, 0x61, 0x01, 0x02,
    0x01, 0x62, 0x03, 0x08,
    0x01, 0x63, 0x04, 0x00,
    0xFE, 0xFF,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF8, 0x3F,
    0x03, 0x00, 0x00, 0x00, 0x68, 0xC3, 0xA9,
])
MIXED_BE = bytes([
    0x50, 0x42, 0x4F, 0x31, 0x01, 0x01,
    0x01, 0x6D,
    0x03, 0x00,
    0x01, 0x61, 0x01, 0x02,
    0x01, 0x62, 0x03, 0x08,
    0x01, 0x63, 0x04, 0x00,
    0xFF, 0xFE,
    0x3F, 0xF8, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
    0x00, 0x00, 0x00, 0x03, 0x68, 0xC3, 0xA9,
])

BYTES_FMT = FormatDescriptor("B", (fd("k", "bytes", 0),))
BYTES_LE = bytes([
    0x50, 0x42, 0x4F, 0x31, 0x01, 0x00,
    0x01, 0x42,
    0x01, 0x00,
    0x01, 0x6B, 0x05, 0x00,
    0x02, 0x00, 0x00, 0x00, 0x00, 0xFF,
])


class TestGoldenVectors:
    def test_encode_little(self):
        assert encode(P_SINT4, {"x": 7}, "little") == GOLDEN_LE

    def test_encode_big(self):
        assert encode(P_SINT4, {"x": 7}, "big") == GOLDEN_BE

    def test_decode_little(self):
        desc, rec, order = decode_with_order(GOLDEN_LE)
        assert (desc, rec, order) == (P_SINT4, {"x": 7}, "little")

    def test_decode_big(self):
        desc, rec, order = decode_with_order(GOLDEN_BE)
        assert (desc, rec, order) == (P_SINT4, {"x": 7}, "big")

    def test_mixed_vectors(self):
        assert encode(MIXED, MIXED_REC, "little") == MIXED_LE
        assert encode(MIXED, MIXED_REC, "big") == MIXED_BE
        assert decode(MIXED_LE) == (MIXED, MIXED_REC)
        assert decode(MIXED_BE) == (MIXED, MIXED_REC)

    def test_bytes_vector(self):
        assert encode(BYTES_FMT, {"k": b"\x00\xff"}, "little") == BYTES_LE
        assert decode(BYTES_LE) == (BYTES_FMT, {"k": b"\x00\xff"})

    def test_float4_payload(self):
        f = FormatDescriptor("F", (fd("f", "float", 4),))
        blob = encode(f, {"f": 0.5}, "little")
        assert blob.endswith(bytes([0x00, 0x00, 0x00, 0x3F]))
        assert decode(blob) == (f, {"f": 0.5})

    def test_record_key_order_preserved(self):
        desc, rec = decode(MIXED_LE)
        assert list(rec) == ["a", "b", "c"]


class TestFormatId:
    def test_matches_independent_hash(self):
        assert format_id(P_SINT4) == format_id_oracle("P", [("x", "sint", 4)])
        assert format_id(MIXED) == format_id_oracle(
            "m", [("a", "sint", 2), ("b", "float", 8), ("c", "string", 0)])

    def test_pinned_value(self):
        assert format_id(P_SINT4) == "a484b5f8dadbe89a"

    def test_sensitivity(self):
        assert format_id(P_SINT4) != format_id(
            FormatDescriptor("P", (fd("x", "sint", 8),)))
        assert format_id(P_SINT4) != format_id(
            FormatDescriptor("Q", (fd("x", "sint", 4),)))

    def test_registry_idempotent(self):
        reg = FormatRegistry()
        a = reg.register(P_SINT4)
        b = reg.register(P_SINT4)
        assert a == b and len(reg) == 1
        assert reg.get(a) == P_SINT4
        assert reg.get("0" * 16) is None


class TestDescriptorValidation:
    def test_string_with_nonzero_size(self):
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(FormatDescriptor("s", (fd("v", "string", 4),)))

    @pytest.mark.parametrize("kind,size", [
        ("sint", 3), ("sint", 0), ("uint", 16), ("float", 2), ("float", 1),
        ("bytes", 1),
    ])
    def test_bad_sizes(self, kind, size):
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(FormatDescriptor("s", (fd("v", kind, size),)))

    def test_duplicate_field_names(self):
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(
                FormatDescriptor("s", (fd("v", "sint", 4), fd("v", "uint", 4))))

    def test_empty_field_name(self):
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(FormatDescriptor("s", (fd("", "sint", 4),)))

    def test_too_many_fields(self):
        fields = tuple(fd(f"f{i}", "uint", 1) for i in range(65536))
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(FormatDescriptor("s", fields))
        validate_descriptor(FormatDescriptor("s", fields[:65535]))

    def test_name_too_long(self):
        with pytest.raises(InvalidDescriptorError):
            validate_descriptor(FormatDescriptor("x" * 256, (fd("v", "sint", 4),)))


class TestMalformedInput:
    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            decode(b"NOPE" + GOLDEN_LE[4:])

    def test_unsupported_version(self):
        with pytest.raises(UnsupportedVersionError):
            decode(GOLDEN_LE[:4] + b"\x02" + GOLDEN_LE[5:])

    def test_reserved_flag_bits(self):
        for flags in (0x02, 0x80, 0xFE):
            with pytest.raises(MalformedDescriptorError):
                decode(GOLDEN_LE[:5] + bytes([flags]) + GOLDEN_LE[6:])

    def test_unknown_field_kind(self):
        blob = bytearray(GOLDEN_LE)
        blob[12] = 0x09
        with pytest.raises(MalformedDescriptorError):
            decode(bytes(blob))

    def test_size_kind_mismatch_on_wire(self):
        blob = bytearray(GOLDEN_LE)
        blob[13] = 0x03
        with pytest.raises(MalformedDescriptorError):
            decode(bytes(blob))

    def test_duplicate_names_on_wire(self):
        two = bytearray()
        two += b"PBO1\x01\x00\x01P\x02\x00"
        two += bytes([0x01]) + b"x" + bytes([0x01, 0x04])
        two += bytes([0x01]) + b"x" + bytes([0x01, 0x04])
        two += b"\x01\x00\x00\x00\x02\x00\x00\x00"
        with pytest.raises(MalformedDescriptorError):
            decode(bytes(two))

    def test_every_strict_prefix_truncates(self):
        for cut in range(len(MIXED_LE)):
            with pytest.raises(TruncatedMessageError):
                decode(MIXED_LE[:cut])

    def test_trailing_bytes(self):
        with pytest.raises(TrailingBytesError):
            decode(GOLDEN_LE + b"\x00")

    def test_invalid_utf8_in_string_payload(self):
        f = FormatDescriptor("s", (fd("c", "string", 0),))
        blob = bytearray(encode(f, {"c": "A"}, "little"))
        blob[-1] = 0xFF
        with pytest.raises(InvalidUtf8Error):
            decode(bytes(blob))

    def test_invalid_utf8_in_name(self):
        blob = bytearray(GOLDEN_LE)
        blob[7] = 0xC0
        with pytest.raises(InvalidUtf8Error):
            decode(bytes(blob))

    def test_string_length_prefix_follows_flags_order(self):
        f = FormatDescriptor("s", (fd("c", "string", 0),))
        big = encode(f, {"c": "A"}, "big")
        assert big.endswith(b"\x00\x00\x00\x01A")


class TestConformance:
    def test_key_order_must_match(self):
        with pytest.raises(NonConformingRecordError):
            check_conforms(MIXED, {"b": 1.5, "a": -2, "c": "x"})

    def test_missing_and_extra(self):
        with pytest.raises(NonConformingRecordError):
            check_conforms(P_SINT4, {})
        with pytest.raises(NonConformingRecordError):
            check_conforms(P_SINT4, {"x": 1, "y": 2})

    def test_int_range(self):
        check_conforms(P_SINT4, {"x": 2 ** 31 - 1})
        check_conforms(P_SINT4, {"x": -(2 ** 31)})
        for v in (2 ** 31, -(2 ** 31) - 1):
            with pytest.raises(NonConformingRecordError):
                check_conforms(P_SINT4, {"x": v})

    def test_uint_range(self):
        u1 = FormatDescriptor("u", (fd("v", "uint", 1),))
        check_conforms(u1, {"v": 255})
        for v in (256, -1):
            with pytest.raises(NonConformingRecordError):
                check_conforms(u1, {"v": v})

    def test_bool_is_not_an_integer(self):
        with pytest.raises(NonConformingRecordError):
            check_conforms(P_SINT4, {"x": True})

    def test_float4_requires_exact_binary32(self):
        f = FormatDescriptor("f", (fd("v", "float", 4),))
        check_conforms(f, {"v": 0.5})
        check_conforms(f, {"v": struct.unpack("<f", struct.pack("<f", 0.1))[0]})
        with pytest.raises(NonConformingRecordError):
            check_conforms(f, {"v": 0.1})

    def test_nan_and_inf_conform(self):
        f = FormatDescriptor("f", (fd("v", "float", 4),))
        check_conforms(f, {"v": float("nan")})
        check_conforms(f, {"v": float("inf")})
        blob = encode(f, {"v": float("nan")}, "little")
        assert math.isnan(decode(blob)[1]["v"])

    def test_unencodable_string(self):
        s = FormatDescriptor("s", (fd("c", "string", 0),))
        with pytest.raises(NonConformingRecordError):
            check_conforms(s, {"c": "\ud800"})


class TestConversion:
    def test_identity_is_silent(self):
        rec, report = convert({"x": 7}, P_SINT4, P_SINT4)
        assert rec == {"x": 7}
        assert report == DecodeReport((), (), ())
        assert report.empty

    def test_widening_same_kind(self):
        dst = FormatDescriptor("w", (fd("x", "sint", 8),))
        rec, report = convert({"x": 7}, P_SINT4, dst)
        assert rec == {"x": 7}
        assert report.converted == (("x", "sint4", "sint8"),)

    def test_narrowing_in_range(self):
        dst = FormatDescriptor("n", (fd("x", "sint", 1),))
        rec, report = convert({"x": -128}, P_SINT4, dst)
        assert rec == {"x": -128}
        assert report.converted == (("x", "sint4", "sint1"),)

    def test_narrowing_out_of_range(self):
        dst = FormatDescriptor("n", (fd("x", "sint", 1),))
        with pytest.raises(OverflowingNarrowError):
            convert({"x": 128}, P_SINT4, dst)

    def test_float_narrow_rounds_to_nearest_even(self):
        src = FormatDescriptor("f", (fd("v", "float", 8),))
        dst = FormatDescriptor("f", (fd("v", "float", 4),))
        rec, _ = convert({"v": 0.1}, src, dst)
        assert rec["v"] == struct.unpack("<f", struct.pack("<f", 0.1))[0]

    def test_float_narrow_overflow(self):
        src = FormatDescriptor("f", (fd("v", "float", 8),))
        dst = FormatDescriptor("f", (fd("v", "float", 4),))
        with pytest.raises(OverflowingNarrowError):
            convert({"v": 1e39}, src, dst)
        rec, _ = convert({"v": float("inf")}, src, dst)
        assert rec["v"] == float("inf")

    def test_sint_uint_value_based(self):
        u = FormatDescriptor("u", (fd("x", "uint", 4),))
        rec, report = convert({"x": 7}, P_SINT4, u)
        assert rec == {"x": 7}
        assert report.converted == (("x", "sint4", "uint4"),)
        with pytest.raises(OverflowingNarrowError):
            convert({"x": -1}, P_SINT4, u)
        with pytest.raises(OverflowingNarrowError):
            convert({"x": 2 ** 31}, u, P_SINT4)

    def test_int_to_float(self):
        dst8 = FormatDescriptor("f", (fd("x", "float", 8),))
        rec, report = convert({"x": 7}, P_SINT4, dst8)
        assert rec == {"x": 7.0} and isinstance(rec["x"], float)
        assert report.converted == (("x", "sint4", "float8"),)
        dst4 = FormatDescriptor("f", (fd("x", "float", 4),))
        rec, _ = convert({"x": 2 ** 31 - 1}, P_SINT4, dst4)
        assert rec["x"] == float(2 ** 31)

    def test_float_to_int_rejected(self):
        src = FormatDescriptor("f", (fd("x", "float", 8),))
        with pytest.raises(TypeMismatchError):
            convert({"x": 7.0}, src, P_SINT4)

    def test_string_bytes_cross_kind_rejected(self):
        s = FormatDescriptor("s", (fd("c", "string", 0),))
        b = FormatDescriptor("b", (fd("c", "bytes", 0),))
        with pytest.raises(TypeMismatchError):
            convert({"c": "x"}, s, b)
        with pytest.raises(TypeMismatchError):
            convert({"c": b"x"}, b, s)
        with pytest.raises(TypeMismatchError):
            convert({"x": 7}, P_SINT4, FormatDescriptor(
                "s", (fd("x", "string", 0),)))

    def test_defaults_and_drops(self):
        src = FormatDescriptor("s", (fd("gone", "sint", 4),))
        dst = FormatDescriptor("d", (
            fd("i", "uint", 2), fd("f", "float", 8), fd("s", "string", 0),
            fd("b", "bytes", 0)))
        rec, report = convert({"gone": 3}, src, dst)
        assert rec == {"i": 0, "f": 0.0, "s": "", "b": b""}
        assert report.dropped == ("gone",)
        assert set(report.defaulted) == {"i", "f", "s", "b"}
        assert report.converted == ()

    def test_decode_as_end_to_end(self):
        dst = FormatDescriptor("d", (fd("x", "sint", 8), fd("y", "uint", 1)))
        rec, report = decode_as(GOLDEN_LE, dst)
        assert rec == {"x": 7, "y": 0}
        assert report.converted == (("x", "sint4", "sint8"),)
        assert report.defaulted == ("y",)


class TestJsonBridges:
    def test_round_trip(self):
        obj = descriptor_to_json(MIXED)
        assert descriptor_from_json(obj) == MIXED

    def test_unknown_keys_rejected(self):
        with pytest.raises(UnknownKeyError):
            descriptor_from_json({"name": "x", "fields": [], "extra": 1})
        with pytest.raises(UnknownKeyError):
            descriptor_from_json({"name": "x", "fields": [
                {"name": "a", "kind": "sint", "size": 4, "junk": True}]})

    def test_build_record_accepts_json_shapes(self):
        f4 = FormatDescriptor("f", (fd("v", "float", 4),))
        assert build_record(f4, {"v": 1})["v"] == 1.0
        assert build_record(f4, {"v": 0.1})["v"] == struct.unpack(
            "<f", struct.pack("<f", 0.1))[0]
        b = FormatDescriptor("b", (fd("k", "bytes", 0),))
        assert build_record(b, {"k": "AP8="})["k"] == b"\x00\xff"
        with pytest.raises(FormatMismatchError):
            build_record(b, {"k": "not base64!"})
        with pytest.raises(FormatMismatchError):
            build_record(P_SINT4, {"x": "7"})
        with pytest.raises(FormatMismatchError):
            build_record(P_SINT4, {})
        with pytest.raises(FormatMismatchError):
            build_record(P_SINT4, {"x": 1, "y": 2})
        assert build_record(P_SINT4, {"x": 1, "y": 2},
                            allow_extra=True) == {"x": 1}

    def test_huge_integers_rejected_cleanly(self):
        f4 = FormatDescriptor("f", (fd("v", "float", 4),))
        f8 = FormatDescriptor("f", (fd("v", "float", 8),))
        for desc in (f4, f8):
            with pytest.raises(FormatMismatchError):
                build_record(desc, {"v": 10 ** 400})

    def test_record_to_jsonable(self):
        b = FormatDescriptor("b", (fd("k", "bytes", 0),))
        assert record_to_jsonable(b, {"k": b"\x00\xff"}) == {"k": "AP8="}
