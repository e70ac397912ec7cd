import io
import json
import re

import pytest

from pulse_hunter.cli import main, run
from pulse_hunter.config import ConfigError, RunConfig, load_config, parse_config
from pulse_hunter.figures import emit_figures, landscape_svg, singular_svg
from pulse_hunter.model import FAYE, compute_landscape, firing_rate_sigmoid


def test_parse_config_sections():
    cfg = parse_config("""
[model]
beta = 6
lambda = 18   # comment
[run]
task = front
epsilon = 0.002
figures = no
[sweep]
epsilons = 0.004, 0.002
[field]
n = 2048
""")
    assert cfg.model.beta == 6 and cfg.model.lambda_ == 18
    assert cfg.model.b == FAYE.b
    assert cfg.task == "front" and cfg.epsilon == 0.002
    assert cfg.figures is False
    assert cfg.epsilons == (0.004, 0.002)
    assert cfg.field_n == 2048


@pytest.mark.parametrize("text", ["[model]\ngamma = 1\n", "[extras]\nx = 1\n",
                                  "[run]\nepsilon = abc\n", "[run]\nfigures = maybe\n"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validate_rejects_bad_values():
    with pytest.raises(ConfigError):
        RunConfig(task="nope").validate()
    with pytest.raises(ConfigError):
        RunConfig(seed_offset=1e-2).validate()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_unknown_key_exit_code(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nbogus = 1\n")
    code = main(["--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 1
    err = json.loads(capsys.readouterr().out)
    assert err["error"] == "ConfigError"
    assert (tmp_path / "o" / "error.json").is_file()


def test_verify_reports_hypotheses(tmp_path):
    buf = io.StringIO()
    code = run(RunConfig(task="verify", out=str(tmp_path), epsilon=0.005, c1=0.34), buf)
    assert code == 0
    assert "Theorem 1 hypotheses satisfied" in buf.getvalue()
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["result"]["ok"] is True
    assert doc["task"] == "verify"
    assert set(doc["tolerances"]) >= {"rtol", "atol", "seed_offset"}


def test_pathological_beta_is_condition_violation(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[model]\nbeta = 0.001\n[run]\ntask = landscape\n")
    code = main(["--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().out)
    assert err["error"] == "ConditionViolation"
    assert err["condition"] == 3


def test_summary_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(RunConfig(task="front", out=str(d)), io.StringIO()) == 0
    ja = json.loads((a / "summary.json").read_text())
    jb = json.loads((b / "summary.json").read_text())
    ja["config"].pop("out"), jb["config"].pop("out")
    assert json.dumps(ja, sort_keys=True) == json.dumps(jb, sort_keys=True)


def test_summary_byte_identical_same_dir(tmp_path):
    cfg = RunConfig(task="landscape", out=str(tmp_path))
    run(cfg, io.StringIO())
    first = (tmp_path / "summary.json").read_bytes()
    run(cfg, io.StringIO())
    assert (tmp_path / "summary.json").read_bytes() == first


def test_pulse_task_prints_ordering(tmp_path):
    buf = io.StringIO()
    code = run(RunConfig(task="pulse", out=str(tmp_path)), buf)
    assert code == 0
    text = buf.getvalue()
    m = re.search(r"0 < c_\* < c1 < c\* < c0\*: (\S+) < 0.34 < (\S+) < (\S+)", text)
    assert m, text
    cs, cst, c0 = map(float, m.groups())
    assert 0 < cs < 0.34 < cst < c0
    svg = (tmp_path / "shot_uq.svg").read_text()
    for k in ("t1", "t2", "t3"):
        assert f'data-label="{k}"' in svg


def test_landscape_svg_contents():
    S = firing_rate_sigmoid(FAYE)
    L = compute_landscape(FAYE, S)
    svg = landscape_svg(L, S, FAYE.beta)
    assert svg.startswith("<svg")
    assert svg.count('class="curve"') == 3
    assert svg.count('class="marker"') == 3


def test_singular_svg_has_four_pieces():
    import numpy as np
    pieces = [np.array([[0, 0], [1, 0]]), np.array([[1, 0], [1, 1]]),
              np.array([[1, 1], [0, 1]]), np.array([[0, 1], [0, 0]])]
    assert singular_svg(pieces).count('class="piece"') == 4


def test_missing_artifact_warns(tmp_path):
    with pytest.warns(UserWarning):
        out = emit_figures({}, tmp_path, wanted=("landscape",))
    assert out == []
