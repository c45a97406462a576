# -*- coding: utf-8 -*-

"""
Tests reading and writing the .avol volume format.
"""
import struct
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from tumorseg.seglib.data import volume
from tumorseg.seglib.errors import VolumeFormatError


class TestVolume(TestCase):
    """
    Tests encoding, decoding and every rejection code.
    """

    def setUp(self):
        self.data = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7

    def assertCode(self, code: str, data: bytes):
        with self.assertRaises(VolumeFormatError) as ctx:
            volume.decode_volume(data)
        self.assertEqual(ctx.exception.code, code)

    def test_layout(self):
        """
        Ensure the header is magic, version, dtype, rank, a zero byte and the extents.
        """
        encoded = volume.encode_volume(self.data)
        self.assertEqual(encoded[:4], b"AVOL")
        self.assertEqual(struct.unpack("<BBBB", encoded[4:8]), (1, 1, 3, 0))
        self.assertEqual(struct.unpack("<3I", encoded[8:20]), (2, 3, 4))
        self.assertEqual(len(encoded), 20 + 24 * 4)

    def test_roundtrip(self):
        """
        Ensure float32 and uint8 volumes survive a write and read unchanged.
        """
        labels = np.array([[0, 1], [2, 4]], dtype=np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            for name, original in [("image", self.data), ("label", labels)]:
                with self.subTest(msg=name):
                    path = Path(tmp) / "nested" / f"{name}.avol"
                    volume.write_volume(path, original)
                    restored = volume.read_volume(path)
                    self.assertEqual(restored.dtype, original.dtype)
                    np.testing.assert_array_equal(restored, original)

    def test_unsupported(self):
        """
        Ensure unsupported dtypes are refused at encode time.
        """
        with self.assertRaises(VolumeFormatError) as ctx:
            volume.encode_volume(np.zeros(3, dtype=np.float64))
        self.assertEqual(ctx.exception.code, "bad-dtype")

    def test_decode_errors(self):
        """
        Ensure every malformed header or payload is reported with its code.
        """
        encoded = volume.encode_volume(self.data)
        with self.subTest(msg="Bad magic."):
            self.assertCode("bad-magic", b"XVOL" + encoded[4:])
        with self.subTest(msg="Bad version."):
            self.assertCode("bad-version", encoded[:4] + b"\x02" + encoded[5:])
        with self.subTest(msg="Bad dtype."):
            self.assertCode("bad-dtype", encoded[:5] + b"\x07" + encoded[6:])
        with self.subTest(msg="Zero rank."):
            self.assertCode("bad-dims", encoded[:6] + b"\x00" + encoded[7:])
        with self.subTest(msg="Zero extent."):
            self.assertCode("bad-dims", encoded[:8] + struct.pack("<I", 0) + encoded[12:])
        with self.subTest(msg="Truncated payload."):
            self.assertCode("payload-short", encoded[:-1])
        with self.subTest(msg="Truncated header."):
            self.assertCode("payload-short", encoded[:5])

    def test_missing_file(self):
        """
        Ensure a missing file is reported as an io failure.
        """
        with self.assertRaises(VolumeFormatError) as ctx:
            volume.read_volume(Path(tempfile.gettempdir()) / "does-not-exist.avol")
        self.assertEqual(ctx.exception.code, "io")
