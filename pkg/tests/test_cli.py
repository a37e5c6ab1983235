import subprocess
import sys

import numpy as np
import pytest

from fishermala import io
from fishermala.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, cmd_diagnose, main
from fishermala.samplers import ChainRecord

SANITY = """
[experiment]
id = gaussian-sanity
samplers = fisher, pcn
seed = 1
replicates = {replicates}

[model]
d = 3

[sampler]
burn_in = 1000
n_samples = 1000
n_init = 100
beta = 0.5

[diagnostics]
lag = 50
"""

RATE = """
[experiment]
id = gaussian-rate
seed = 2
replicates = 20

[rate]
n_max = 2000
"""


def _iid_chain(n, d, seed):
    x = np.random.default_rng(seed).standard_normal((n, d))
    return ChainRecord("mala", x, np.ones(n, bool), np.full(n, 0.1), np.linspace(0, 1, n),
                       {"init": 0, "adapt": 0, "collect": 0, "end": n}, seed=seed)


@pytest.fixture
def sanity_ini(tmp_path):
    path = tmp_path / "sanity.ini"
    path.write_text(SANITY.format(replicates=2))
    return path


class TestRun:
    def test_run_and_table(self, sanity_ini, tmp_path, capsys):
        out = tmp_path / "art"
        assert main(["run", str(sanity_ini), "--out", str(out), "--csv"]) == EXIT_OK
        assert (out / "fisher-r01.csv").exists()
        capsys.readouterr()
        assert main(["table", str(out)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("experiment,sampler,n_runs")
        assert len(lines) == 3

    def test_table_to_file_and_mixed(self, sanity_ini, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", str(sanity_ini), "--out", str(a)])
        b.mkdir()
        io.write_json({"format": "fishermala-summary", "rows": [
            {"experiment": "heat-source", "sampler": "fisher", "err_pct": 1.0, "ess": 1.0,
             "acceptance": 0.5, "wall_time": 1.0}]}, b / "summary.json")
        assert main(["table", str(a), str(b)]) == EXIT_CONFIG
        assert main(["table", str(a), "--out", str(tmp_path / "t.csv")]) == EXIT_OK
        assert (tmp_path / "t.csv").read_text().count("\n") == 3

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text(SANITY.format(replicates=1).replace("burn_in = 1000", "burn_in = zero"))
        assert main(["run", str(bad)]) == EXIT_CONFIG
        assert "[sampler] burn_in" in capsys.readouterr().err

    def test_bad_arguments(self):
        assert main([]) == EXIT_CONFIG
        assert main(["diagnose", "x.chain"]) == EXIT_CONFIG


class TestDiagnose:
    def test_iid_ess(self, tmp_path):
        # truncated-IAT noise is about 2 sqrt(L / N)
        io.write_chain(_iid_chain(200_000, 2, 0), tmp_path / "iid")
        report, out = cmd_diagnose(tmp_path / "iid.chain", 20)
        assert out.exists()
        np.testing.assert_allclose(report["ess_per_dim"], 200_000, rtol=0.1)
        assert len(report["acf"]) == 2 and len(report["acf"][0]) == 21
        assert report["ess_time"][-1][1] == 200_000

    def test_reversed_chain_same_acf(self, tmp_path):
        rec = _iid_chain(3000, 2, 1)
        rev = ChainRecord(rec.kind, rec.samples[::-1].copy(), rec.accept, rec.sigma2, rec.wall_times,
                          rec.phase_marks, rec.seed)
        io.write_chain(rec, tmp_path / "f")
        io.write_chain(rev, tmp_path / "r")
        a, _ = cmd_diagnose(tmp_path / "f.chain", 30)
        b, _ = cmd_diagnose(tmp_path / "r.chain", 30)
        np.testing.assert_allclose(a["acf"], b["acf"], rtol=1e-9, atol=1e-12)

    def test_corrupt_chain(self, tmp_path):
        io.write_chain(_iid_chain(100, 1, 2), tmp_path / "c")
        raw = bytearray((tmp_path / "c.chain").read_bytes())
        raw[40] ^= 0xFF
        (tmp_path / "c.chain").write_bytes(bytes(raw))
        assert main(["diagnose", str(tmp_path / "c.chain"), "--lag", "5"]) == EXIT_RUNTIME

    def test_lag_too_large(self, tmp_path):
        io.write_chain(_iid_chain(100, 1, 3), tmp_path / "c")
        assert main(["diagnose", str(tmp_path / "c.chain"), "--lag", "500"]) == EXIT_CONFIG


class TestRate:
    def test_rate_json(self, tmp_path):
        cfg = tmp_path / "rate.ini"
        cfg.write_text(RATE)
        assert main(["rate", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_OK
        out = io.read_json(tmp_path / "r" / "rate.json")
        assert {"n", "errors", "slope", "config_hash"} <= set(out)
        assert -1.3 < out["slope"] < -0.7

    def test_rate_needs_rate_experiment(self, sanity_ini):
        assert main(["rate", str(sanity_ini)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fishermala", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "diagnose" in proc.stdout
