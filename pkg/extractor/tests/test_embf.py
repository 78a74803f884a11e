import struct

import numpy as np
import pytest

from oodkit_extractor.embf import read_embf, write_embf


class TestEmbf:
    def test_header_offsets(self, tmp_path):
        values = np.arange(6, dtype=np.float32).reshape(3, 2)
        path = tmp_path / "m.embf"
        write_embf(path, values, normalized=True)
        blob = path.read_bytes()
        assert blob[0:4] == b"EMBF"
        assert struct.unpack_from("<H", blob, 4)[0] == 1
        assert blob[6] == 1
        assert struct.unpack_from("<Q", blob, 8)[0] == 3
        assert struct.unpack_from("<Q", blob, 16)[0] == 2
        assert blob[32] == 1
        assert len(blob) == 33 + 6 * 4

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((5, 7)).astype(np.float32)
        path = tmp_path / "m.embf"
        write_embf(path, values, normalized=False)
        back, flag = read_embf(path)
        assert flag is False
        assert back.tobytes() == values.tobytes()

    def test_rejects_nonfinite(self, tmp_path):
        with pytest.raises(ValueError):
            write_embf(tmp_path / "m.embf", np.array([[np.nan]], dtype=np.float32), normalized=False)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "m.embf"
        write_embf(path, np.ones((1, 1), dtype=np.float32), normalized=False)
        blob = bytearray(path.read_bytes())
        blob[0:4] = b"WHAT"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError):
            read_embf(path)
