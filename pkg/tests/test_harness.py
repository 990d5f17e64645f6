import csv
import json

import numpy as np
import pytest

from basisdiag import cli
from basisdiag.errors import EmitError, ModelBuildError, ParseError, ValidationError
from basisdiag.harness import (
    STAGES,
    VERDICTS,
    builtin_names,
    builtin_scenario,
    emit,
    load_scenario,
    report_json,
    run_pipeline,
    scenario_from_dict,
    thread_cap,
)

from conftest import s1_zeros

SMALL = {
    "schema_version": 1,
    "name": "small",
    "kind": "operator",
    "model": {"a": 1.0, "n": 121, "f": {"tag": "one"}, "g": {"tag": "one"}},
    "window": 20.0,
    "rectangle": [-80.0, 80.0, -2.0, 2.0],
    "seed": 7,
}


def doc(**changes):
    out = json.loads(json.dumps(SMALL))
    out.update(changes)
    return out


def write(tmp_path, content, name="scenario.json"):
    path = tmp_path / name
    path.write_text(content if isinstance(content, str) else json.dumps(content, indent=2))
    return path


@pytest.fixture(scope="module")
def small_report():
    return run_pipeline(scenario_from_dict(doc()))


@pytest.fixture(scope="module")
def empty_report():
    d = doc(name="no_g")
    d["model"]["g"] = {"tag": "zero"}
    return run_pipeline(scenario_from_dict(d))


# loading


def test_builtins_load():
    assert builtin_names() == ("S1", "S2", "S3", "S4")
    s1 = load_scenario("builtin:S1")
    assert s1.model["n"] == 201 and s1.model["a"] == 1.0 and s1.window == 100.0
    assert s1.model["f"] == s1.model["g"] == {"tag": "one"}
    with pytest.raises(ValidationError):
        load_scenario("builtin:S9")


def test_load_round_trip(tmp_path):
    sc = load_scenario(write(tmp_path, SMALL))
    assert sc.to_dict()["model"] == SMALL["model"]
    assert scenario_from_dict(sc.to_dict()) == sc


def test_n_equal_one_is_rejected(tmp_path):
    d = doc()
    d["model"]["n"] = 1
    with pytest.raises(ValidationError) as info:
        load_scenario(write(tmp_path, d))
    assert any(v.startswith("model.n") for v in info.value.violations)


def test_table_length_names_field():
    d = doc()
    d["model"]["g"] = {"tag": "table", "values": [1.0] * 5}
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert any("model.g.values" in v for v in info.value.violations)


def test_unknown_keys_are_rejected():
    d = doc(colour="red")
    d["model"]["f"]["shape"] = 2
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    text = str(info.value)
    assert "colour: unknown key" in text and "model.f.shape: unknown key" in text


def test_all_violations_are_listed():
    d = doc(window=-1, seed=-3, rectangle=[1, 0, 0, 1])
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(d)
    assert len(info.value.violations) == 3


def test_parse_error_has_position(tmp_path):
    path = write(tmp_path, '{\n  "name": "x",\n  "kind": operator\n}')
    with pytest.raises(ParseError) as info:
        load_scenario(path)
    assert info.value.line == 3 and info.value.column == 11


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(EmitError):
        load_scenario(tmp_path / "absent.json")


def test_overrides():
    sc = scenario_from_dict(doc()).with_overrides(grid_n=81, window=10.0, seed=3, strip_c=0.5)
    assert sc.model["n"] == 81 and sc.window == 10.0 and sc.seed == 3 and sc.strip_c == 0.5


def test_table_vectors_build(tmp_path):
    d = doc()
    d["model"]["n"] = 9
    d["model"]["g"] = {"tag": "table", "values": [[1.0, 0.5]] * 9}
    sc = scenario_from_dict(d)
    from basisdiag.harness import _build_model

    model = _build_model(sc.model)
    assert np.all(model.g.values == 1 + 0.5j)


# pipeline


def test_report_lists_every_check_once(small_report):
    ids = [c.id for c in small_report.checks]
    assert len(ids) == len(set(ids))
    assert set(small_report.verdicts.values()) <= set(VERDICTS)
    stages = {c.stage for c in small_report.checks}
    assert stages <= set(STAGES)
    for c in small_report.checks:
        if c.verdict == "not-applicable":
            assert c.reason


def test_small_report_content(small_report):
    v = small_report.verdicts
    assert v["resolvent_split"] == "pass"
    assert v["phi_two_formula"] == "pass"
    assert v["frame_g_side"] == "stable"
    g0 = small_report.check("g0_distance").data
    assert g0["distance"] == pytest.approx(np.log(2) / 2, abs=1e-8)
    zeros = small_report.spectrum
    # rectangle [-80, 80]: k = -12..12, ordered by modulus
    expected = s1_zeros(np.arange(-12, 13))
    expected = expected[np.argsort(np.abs(expected), kind="stable")]
    assert zeros.size == 25
    assert np.max(np.abs(np.sort_complex(zeros) - np.sort_complex(expected))) < 1e-8


def test_empty_spectrum_marks_dependants(empty_report):
    v = empty_report.verdicts
    assert len(empty_report.spectrum) == 0
    for cid in ("g0_distance", "carleson_upper", "frame_g_side", "uniform_minimality", "lrg", "estimates"):
        assert v[cid] == "not-applicable"
    # g = 0 makes w^2 vanish, which the weight checks reject on their own
    assert v["a2_w_sq"] == "fail"
    assert empty_report.check("a2_w_sq").error["code"] == "nonpositive_weight"


def test_kadec_scenario_completes():
    report = run_pipeline(builtin_scenario("S2"))
    v = report.verdicts
    assert v["frame_kadec_0.1"] == "stable"
    assert v["frame_kadec_0.25_signed"] == "degenerating"
    assert v["spectrum"] == "not-applicable"


def test_weight_gallery_scenario():
    v = run_pipeline(builtin_scenario("S4")).verdicts
    assert v["a2_abs_x_0.5"] == "stable"
    assert v["a2_abs_x_1.5"] == "growing"


def test_model_build_failure_raises():
    sc = scenario_from_dict(doc())
    broken = sc.with_overrides(grid_n=None, window=None, seed=None, strip_c=None)
    object.__setattr__(broken, "model", dict(broken.model, a=-1.0))
    with pytest.raises(ModelBuildError):
        run_pipeline(broken)


# emission


def test_json_is_deterministic(small_report):
    again = run_pipeline(scenario_from_dict(doc()))
    assert report_json(small_report, timestamp=False) == report_json(again, timestamp=False)
    full = json.loads(report_json(small_report))
    assert full["schema_version"] == 1 and "timestamp" in full
    assert "wall_clock_seconds" in full["timestamp"]


def test_csv_bundle(tmp_path, small_report):
    paths = {p.name for p in emit(small_report, "csv_bundle", tmp_path)}
    assert {"spectrum.csv", "estimates.csv", "trace_w_sq.csv"} <= paths
    with open(tmp_path / "spectrum.csv") as fh:
        rows = list(csv.DictReader(fh))
    z = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    k = np.round((z.real - np.pi / 4) / (2 * np.pi))
    assert np.max(np.abs(z - s1_zeros(k))) < 1e-8
    # |phi'(lambda)| = |e^{i lambda}| = sqrt(2)
    assert np.allclose([float(r["abs_phi_prime"]) for r in rows], np.sqrt(2), rtol=1e-8)
    with open(tmp_path / "trace_w_sq.csv") as fh:
        assert next(csv.reader(fh)) == ["x", "value", "provenance"]


def test_csv_bundle_is_byte_stable(tmp_path, small_report):
    emit(small_report, "csv_bundle", tmp_path / "a")
    emit(run_pipeline(scenario_from_dict(doc())), "csv_bundle", tmp_path / "b")
    for p in sorted((tmp_path / "a").iterdir()):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_empty_spectrum_csv_has_header_only(tmp_path, empty_report):
    emit(empty_report, "csv_bundle", tmp_path)
    assert (tmp_path / "spectrum.csv").read_text() == "re,im,abs_phi_prime\n"


def test_emit_io_error(tmp_path, small_report):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(EmitError):
        emit(small_report, "json", blocker / "sub")
    with pytest.raises(ValueError):
        emit(small_report, "xml", tmp_path)


def test_thread_cap(monkeypatch):
    monkeypatch.delenv("BASISDIAG_THREADS", raising=False)
    assert thread_cap() is None
    monkeypatch.setenv("BASISDIAG_THREADS", "2")
    assert thread_cap() == 2
    monkeypatch.setenv("BASISDIAG_THREADS", "many")
    assert thread_cap() is None


# command line


def test_cli_success(tmp_path, capsys):
    path = write(tmp_path, SMALL)
    code = cli.main(["--scenario", str(path), "--out", str(tmp_path / "out"), "--format", "both"])
    assert code == 0
    assert (tmp_path / "out" / "report.json").exists()
    assert (tmp_path / "out" / "spectrum.csv").exists()
    assert capsys.readouterr().out.startswith("small:")


def test_cli_invalid_scenario(tmp_path):
    d = doc()
    d["model"]["n"] = 1
    assert cli.main(["--scenario", str(write(tmp_path, d)), "--out", str(tmp_path)]) == 2
    bad = write(tmp_path, "{not json", "bad.json")
    assert cli.main(["--scenario", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_grid_override_rejected(tmp_path):
    assert cli.main(["--scenario", "builtin:S1", "--grid-n", "1", "--out", str(tmp_path)]) == 2


def test_cli_io_errors(tmp_path):
    assert cli.main(["--scenario", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    args = ["--scenario", "builtin:S4", "--out", str(blocker / "sub")]
    assert cli.main(args) == 3
