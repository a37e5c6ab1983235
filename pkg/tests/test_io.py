import csv
import json

import numpy as np
import pytest

from fishermala import io
from fishermala.forward import neumann_synthesize
from fishermala.linalg import SqrtPreconditioner
from fishermala.samplers import ChainRecord, SamplerConfig, run_chain
from fishermala.targets import GaussianTarget


@pytest.fixture(scope="module")
def record():
    t = GaussianTarget(np.zeros(3), np.diag([1.0, 2.0, 0.5]))
    cfg = SamplerConfig(burn_in=600, n_samples=400, n_init=100, snapshot_every=100)
    return run_chain("fisher", t, cfg, 17)


class TestChainFile:
    def test_round_trip(self, record, tmp_path):
        io.write_chain(record, tmp_path / "c")
        back = io.read_chain(tmp_path / "c.chain")
        assert back.same_path(record)
        np.testing.assert_array_equal(back.wall_times, record.wall_times)
        assert back.phase_marks == record.phase_marks
        assert back.snapshots.shape == record.snapshots.shape

    def test_header(self, record, tmp_path):
        b, side, wall = io.write_chain(record, tmp_path / "c", extra={"config_hash": "abc"})
        raw = b.read_bytes()
        assert raw[:8] == io.CHAIN_MAGIC and raw[8] == io.FORMAT_VERSION
        meta = json.loads(side.read_text())
        assert meta["config_hash"] == "abc" and meta["d"] == 3 and meta["n_rows"] == 1000
        assert [c["name"] for c in meta["columns"]][:3] == ["x0", "x1", "x2"]
        assert wall.read_bytes()[:8] == io.WALL_MAGIC

    def test_columnar_layout(self, record, tmp_path):
        b, side, _ = io.write_chain(record, tmp_path / "c")
        meta = json.loads(side.read_text())
        col = meta["columns"][1]
        x1 = np.frombuffer(b.read_bytes(), dtype="<f8", count=1000, offset=col["offset"])
        np.testing.assert_array_equal(x1, record.samples[:, 1])

    def test_same_seed_byte_identical(self, tmp_path):
        t = GaussianTarget(np.zeros(2), np.eye(2))
        cfg = SamplerConfig(burn_in=300, n_samples=100, n_init=50)
        a = io.write_chain(run_chain("adamala", t, cfg, 5), tmp_path / "a")[0]
        b = io.write_chain(run_chain("adamala", t, cfg, 5), tmp_path / "b")[0]
        assert a.read_bytes() == b.read_bytes()

    def test_without_snapshots_or_wall(self, tmp_path):
        rec = ChainRecord("pcn", np.arange(6.0).reshape(3, 2), np.array([1, 0, 1], bool), np.full(3, 0.04),
                          np.zeros(3), {"burn_in": 0, "collect": 1, "end": 3}, seed=1)
        _, _, wall = io.write_chain(rec, tmp_path / "p")
        wall.unlink()
        back = io.read_chain(tmp_path / "p")
        assert back.same_path(rec) and np.all(np.isnan(back.wall_times))

    @pytest.mark.parametrize("damage", ["magic", "version", "payload", "truncate"])
    def test_corruption_detected(self, record, tmp_path, damage):
        b, _, _ = io.write_chain(record, tmp_path / "c")
        raw = bytearray(b.read_bytes())
        if damage == "magic":
            raw[0] ^= 0xFF
        elif damage == "version":
            raw[8] = 99
        elif damage == "payload":
            raw[100] ^= 0x01
        else:
            raw = raw[: len(raw) // 2]
        b.write_bytes(bytes(raw))
        with pytest.raises(io.FormatError):
            io.read_chain(b)

    def test_missing_sidecar(self, tmp_path):
        with pytest.raises(io.FormatError):
            io.read_chain(tmp_path / "nothing.chain")

    def test_csv_export(self, record, tmp_path):
        path = io.export_chain_csv(record, tmp_path / "c.csv")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "x0", "x1", "x2", "accept", "sigma2"]
        assert len(rows) == 1001
        np.testing.assert_array_equal([float(v) for v in rows[5][1:4]], record.samples[4])


class TestDataset:
    def test_round_trip(self, tmp_path):
        ds = neumann_synthesize([2.0, 1.0, 1.0], 40, 0.01, 3)
        io.write_dataset(ds, tmp_path / "d.json")
        back = io.read_dataset(tmp_path / "d.json")
        np.testing.assert_array_equal(back.y, ds.y)
        np.testing.assert_array_equal(back.truth, ds.truth)
        assert back.seed == 3 and back.grid == ds.grid

    def test_rejects_foreign_json(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(io.FormatError):
            io.read_dataset(tmp_path / "x.json")


class TestJson:
    def test_numpy_and_nonfinite(self, tmp_path):
        io.write_json({"a": np.arange(3), "b": np.float64(np.inf), "c": np.int64(4),
                       "d": SqrtPreconditioner.identity(1).d}, tmp_path / "j.json")
        assert io.read_json(tmp_path / "j.json") == {"a": [0, 1, 2], "b": None, "c": 4, "d": 1}
