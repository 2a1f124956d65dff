import json
import subprocess
import sys
from fractions import Fraction as Fr

import pytest

from mmsafe.cli import EXIT_INPUT, EXIT_NO, EXIT_OK, main, parse_duration
from mmsafe.formats import (
    InputError,
    dump_building,
    dump_controller,
    dump_explicit,
    load_instance,
    parse_controller,
    parse_explicit,
    rational,
)
from mmsafe.generate import GeneratorConfig, generate_building
from mmsafe.ordergraph import OrderSpec
from mmsafe.synthesis import synthesize

from instances import example1, example2


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def ex1(tmp_path):
    inst, box, x0 = example1()
    return write(tmp_path / "ex1.json", dump_explicit(inst, box, x0))


@pytest.fixture
def ex2(tmp_path):
    inst, box, x0 = example2()
    return write(tmp_path / "ex2.json", dump_explicit(inst, box, x0))


def test_rational_forms():
    assert rational("3/4") == Fr(3, 4)
    assert rational({"num": -1, "den": 3}) == Fr(-1, 3)
    assert rational("0.1") == Fr(1, 10)
    with pytest.raises(InputError):
        rational(True)
    with pytest.raises(InputError):
        rational("x")


def test_json_floats_are_read_exactly(tmp_path):
    doc = '{"vars": 1, "modes": [{"id": "m", "a": [0.1], "b": [0.3]}], "box": {"l": [0], "u": [10]}}'
    p = tmp_path / "f.json"
    p.write_text(doc)
    inst = load_instance(str(p)).instance
    assert inst.mode("m").a == (Fr(1, 10),) and inst.mode("m").equilibrium(0) == 3


def test_explicit_round_trip():
    inst, box, x0 = example2()
    order = OrderSpec.complete(inst, "m1")
    back = parse_explicit(json.loads(json.dumps(dump_explicit(inst, box, x0, order))))
    assert back.instance == inst and back.box == box and back.x0 == x0 and back.order == order


def test_controller_round_trip():
    inst, box, x0 = example1()
    res = synthesize(inst, box, x0)
    doc = json.loads(json.dumps(dump_controller(res.controller, res.scale_s, res.frequency)))
    assert parse_controller(doc) == res.controller
    assert parse_controller({"controller": doc}) == res.controller


def test_building_round_trip(tmp_path):
    b, x0, header = generate_building(GeneratorConfig(zones=2, settings=2), 3)
    path = write(tmp_path / "b.json", dump_building(b, x0, Fr(10), header))
    back = load_instance(path)
    assert back.building == b and back.x0 == x0 and back.header["seed"] == 3


def test_schema_errors_name_the_field():
    with pytest.raises(InputError, match=r"modes\[0\]"):
        parse_explicit({"vars": 1, "modes": [{"id": "m", "a": ["zz"], "b": [1]}], "box": {"l": [0], "u": [1]}})
    with pytest.raises(InputError, match="box"):
        parse_explicit({"vars": 2, "modes": [{"id": "m", "a": [1, 1], "b": [1, 1]}], "box": {"l": [0], "u": [1]}})


def test_duration_parsing():
    assert parse_duration("180s") == Fr(1, 20)
    assert parse_duration("3min") == Fr(1, 20)
    assert parse_duration("0.05h") == Fr(1, 20)
    assert parse_duration("2") == 2
    for bad in ("fast", "3 weeks", "0s"):
        with pytest.raises(InputError):
            parse_duration(bad)


def test_check_exit_codes(tmp_path, ex1, capsys):
    assert main(["check", ex1]) == EXIT_OK
    assert "FEASIBLE" in capsys.readouterr().out
    inst, box, x0 = example1()
    cold = write(tmp_path / "cold.json", dump_explicit(inst.restrict(["m1"]), box, x0))
    assert main(["check", cold]) == EXIT_NO
    assert capsys.readouterr().out.startswith("INFEASIBLE")


def test_nonpositive_decay_is_an_input_error(tmp_path, capsys):
    doc = {"vars": 1, "modes": [{"id": "m", "a": [0], "b": [1]}], "box": {"l": [0], "u": [1]}}
    assert main(["check", write(tmp_path / "bad.json", doc)]) == EXIT_INPUT
    assert "strictly positive" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"vars": 1,\n "modes": [}')
    assert main(["check", str(p)]) == EXIT_INPUT
    assert "line 2" in capsys.readouterr().err


def test_synthesize_writes_controller_only_when_feasible(tmp_path, ex1):
    out = tmp_path / "ctl.json"
    assert main(["synthesize", ex1, "-o", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["s"] == {"num": 1, "den": 300}
    inst, box, x0 = example1()
    cold = write(tmp_path / "cold.json", dump_explicit(inst.restrict(["m1"]), box, x0))
    out2 = tmp_path / "none.json"
    assert main(["synthesize", cold, "-o", str(out2)]) == EXIT_NO
    assert not out2.exists()


def test_boundary_start_is_an_input_error(tmp_path):
    inst, box, _ = example1()
    p = write(tmp_path / "edge.json", dump_explicit(inst, box, (18, 20)))
    assert main(["synthesize", p]) == EXIT_INPUT


def test_optimize_and_weight_validation(tmp_path, ex2, capsys):
    out = tmp_path / "opt.json"
    assert main(["optimize", ex2, "--mu-avg", "1", "--mu-peak", "1", "-o", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["p_star"] == {"num": 4, "den": 1}
    assert doc["weighted_infimum"] == {"num": 14, "den": 3}
    assert main(["optimize", ex2, "--mu-avg", "0", "--mu-peak", "0"]) == EXIT_INPUT


def test_simulate_and_verify(tmp_path, ex1, capsys):
    ctl = tmp_path / "ctl.json"
    main(["synthesize", ex1, "-o", str(ctl)])
    csv_path, js = tmp_path / "t.csv", tmp_path / "t.json"
    assert main(["simulate", ex1, str(ctl), "--periods", "50", "--csv", str(csv_path), "--json", str(js), "--verify"]) == EXIT_OK
    payload = json.loads(js.read_text())
    assert payload["safe"] and payload["verify"]["safe_forever"]
    assert csv_path.read_text().splitlines()[0] == "time,x_1,x_2,mode,power"
    capsys.readouterr()
    assert main(["verify", ex1, str(ctl)]) == EXIT_OK
    bad = write(tmp_path / "bad.json", {"period": [{"mode": "m1", "dwell": 1}]})
    assert main(["verify", ex1, bad]) == EXIT_NO


def test_order_graph_file_is_honoured(tmp_path, capsys):
    inst, box, x0 = example1()
    g = OrderSpec(frozenset({("m1", "m2"), ("m2", "m3"), ("m3", "m2")}), "m1")
    p = write(tmp_path / "g.json", dump_explicit(inst, box, x0, g))
    ctl = tmp_path / "ctl.json"
    assert main(["synthesize", p, "-o", str(ctl)]) == EXIT_OK
    assert json.loads(ctl.read_text())["prefix"][0]["mode"] == "m1"
    capsys.readouterr()
    assert main(["verify", p, str(ctl)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["order_compliant"]


def test_generate_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "--seed", "7", "--zones", "3", "-o", str(a)]) == EXIT_OK
    assert main(["generate", "--seed", "7", "--zones", "3", "-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.json"
    main(["generate", "--seed", "8", "--zones", "3", "-o", str(c)])
    assert a.read_bytes() != c.read_bytes()
    assert json.loads(a.read_text())["generator"]["prng"].startswith("python random.Random")


def test_generate_rejects_unknown_options(tmp_path):
    cfg = write(tmp_path / "cfg.json", {"zone_count": 3})
    assert main(["generate", "--seed", "1", "--config", cfg]) == EXIT_INPUT


def test_compare_and_building_check(tmp_path, capsys):
    b = tmp_path / "b.json"
    main(["generate", "--seed", "2", "--zones", "2", "--config", write(tmp_path / "c.json", {"settings": 2}), "-o", str(b)])
    assert main(["check", str(b)]) == EXIT_OK
    out = tmp_path / "cmp.json"
    assert main(["compare", str(b), "--hours", "2", "--step", "180s", "-o", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["optimal_safe"] and doc["lazy_safe"] and doc["step_hours"] == 0.05


def test_batch_keeps_input_order(tmp_path, ex1, ex2, capsys):
    bad = write(tmp_path / "bad.json", {"vars": 0})
    code = main(["batch", ex2, bad, ex1, "--jobs", "3"])
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split("\t")[0] for ln in lines] == [ex2, bad, ex1]
    assert lines[0].endswith("FEASIBLE") and "ERROR" in lines[1]
    assert code == EXIT_INPUT


def test_console_entry_point(ex1):
    out = subprocess.run([sys.executable, "-m", "mmsafe.cli", "check", ex1], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("FEASIBLE")
    out = subprocess.run([sys.executable, "-m", "mmsafe.cli", "frobnicate"], capture_output=True, text=True)
    assert out.returncode == EXIT_INPUT
