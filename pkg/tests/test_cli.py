import json

import numpy as np
import pytest

from sykquench import read_snapshot
from sykquench.cli import ConfigError, main, parse_bath, resolve
from sykquench.observables import BetaTrace

SMALL = ["--lambda-t", "4", "--dt", "0.1"]


def test_parse_bath():
    assert parse_bath("beta=0.5,v=0.525,n=1") == {"beta": 0.5, "v": 0.525, "n": 1}
    assert parse_bath("beta=2, v=0.1")["n"] == 3
    for bad in ("beta=1", "beta=1,v=2,w=3", "beta"):
        with pytest.raises(ConfigError):
            parse_bath(bad)


def test_resolve_rejects_unknown_and_missing():
    with pytest.raises(ConfigError, match="unknown"):
        resolve("quench", {"beta_init": 1, "baths": ["beta=1,v=0"], "foo": 1}, {})
    with pytest.raises(ConfigError, match="beta_init"):
        resolve("quench", {}, {})
    with pytest.raises(ConfigError):
        resolve("quench", {"beta_init": 1, "baths": ["beta=1,v=0"] * 3}, {})


def test_empty_config_exits_2(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{}")
    assert main(["quench", "--config", str(path)]) == 2
    assert "missing required keys" in capsys.readouterr().err


def test_bad_domain_exits_2(tmp_path):
    assert main(["quench", "--beta-init", "1", "--bath", "beta=1,v=0.1,n=2",
                 "--out", str(tmp_path)] + SMALL) == 2


def test_nonconvergence_exits_3(tmp_path):
    assert main(["quench", "--beta-init", "1", "--bath", "beta=0.5,v=0.5",
                 "--max-sweeps", "2", "--out", str(tmp_path)] + SMALL) == 3


def _quench(out, beta, extra=()):
    code = main(["quench", "--beta-init", str(beta), "--bath",
                 "beta=0.5,v=0.525,n=3", "--out", str(out), "--stride", "2",
                 *SMALL, *extra])
    assert code == 0


def test_quench_outputs_and_determinism(tmp_path):
    _quench(tmp_path / "a", 2.4)
    _quench(tmp_path / "b", 2.4)
    a = (tmp_path / "a" / "green.kbsyk").read_bytes()
    assert a == (tmp_path / "b" / "green.kbsyk").read_bytes()
    assert (tmp_path / "a" / "trace.csv").read_text() == \
        (tmp_path / "b" / "trace.csv").read_text()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["scenario"] == "quench"
    assert man["config"]["baths"] == [{"beta": 0.5, "v": 0.525, "n": 3}]
    assert "numpy" in man["versions"]


def test_manifest_replays_run(tmp_path):
    _quench(tmp_path / "a", 1.2)
    man = tmp_path / "a" / "manifest.json"
    assert main(["quench", "--config", str(man),
                 "--out", str(tmp_path / "c")]) == 0
    ga = read_snapshot(tmp_path / "a" / "green.kbsyk")
    gc = read_snapshot(tmp_path / "c" / "green.kbsyk")
    assert np.array_equal(ga.g_greater, gc.g_greater)


def test_two_bath_scenario(tmp_path):
    assert main(["quench", "--beta-init", "1", "--bath", "beta=4.4,v=0.5",
                 "--bath", "beta=4.8,v=0.5", "--out", str(tmp_path)] + SMALL) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["scenario"] == "two_bath"


def test_mpc_compare_self_is_empty(tmp_path, capsys):
    _quench(tmp_path / "a", 2.4)
    _quench(tmp_path / "b", 2.4)
    assert main(["mpc-compare", str(tmp_path / "a"), str(tmp_path / "b"),
                 "--out", str(tmp_path / "cmp")]) == 0
    data = json.loads((tmp_path / "cmp" / "crossings.json").read_text())
    assert data[0]["crossings"] == [] and data[0]["parity"] == 0


def test_mpc_compare_needs_two_runs(tmp_path):
    _quench(tmp_path / "a", 2.4)
    assert main(["mpc-compare", str(tmp_path / "a")]) == 2


def test_lindblad_and_snapshot_dump(tmp_path):
    assert main(["lindblad", "--beta-init", "1", "--mu", "0.05",
                 "--out", str(tmp_path)] + SMALL) == 0
    for name in ("pp", "pm", "mp", "mm"):
        assert (tmp_path / f"green_{name}.kbsyk").exists()
    BetaTrace.read_csv(tmp_path / "trace.csv")
    assert main(["snapshot-dump", str(tmp_path / "green_mp.kbsyk")]) == 0
    rows = (tmp_path / "green_mp.csv").read_text().splitlines()
    assert len(rows) > 1


def test_lindblad_contour_rejects_odd_q(tmp_path):
    assert main(["lindblad", "--beta-init", "1", "--mu", "0.05", "--q", "2",
                 "--convention", "contour", "--out", str(tmp_path)]
                + SMALL) == 2


def test_equilibrium_run(tmp_path, capsys):
    assert main(["equilibrium", "--beta", "1.0", "--out", str(tmp_path)]
                + SMALL) == 0
    spec = np.loadtxt(tmp_path / "spectrum.csv", delimiter=",", skiprows=1)
    assert spec.shape[1] == 4 and np.all(spec[:, 3] > -1e-8)
    assert "sum rule" in capsys.readouterr().out


def test_threshold_bracket_exits_4(tmp_path):
    # V far below any threshold on both ends of the range
    assert main(["threshold-scan", "--beta-bath", "0.5", "--beta-pair", "2.4",
                 "1.2", "--v-range", "0.0", "0.01", "--out", str(tmp_path)]
                + SMALL) == 4
