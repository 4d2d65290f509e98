import json
from fractions import Fraction

import pytest

from lyapta.reach import reach
from lyapta.serialize import (FormatError, check_xml, dumps_native, from_xml, load, loads_native, save, to_xml,
                              xml_name)

WINDOWS = [(0, 0), (0, Fraction(1, 2)), (Fraction(1, 4), 1), (1, 3)]


@pytest.mark.parametrize("name", ["oned_stable", "twod_saddle", "twod_coupled"])
def test_native_round_trip(abstractions, name, tmp_path):
    ta = abstractions(name).automaton
    path = tmp_path / "a.json"
    save(ta, path)
    back = load(path)
    assert back.structure() == ta.structure()
    assert back.fingerprint == ta.fingerprint and back.info == ta.info
    assert dumps_native(back) == dumps_native(ta)
    for w in WINDOWS:
        assert reach(back, None, *w).locations == reach(ta, None, *w).locations


def test_native_rejects_foreign_documents():
    with pytest.raises(FormatError, match="invalid JSON"):
        loads_native("{")
    with pytest.raises(FormatError, match="not a lyapta-automaton"):
        loads_native(json.dumps({"format": "other"}))
    with pytest.raises(FormatError, match="missing field"):
        loads_native(json.dumps({"format": "lyapta-automaton", "version": 1}))


def test_xml_integer_constants(abstractions):
    ta = abstractions("oned_stable").automaton
    text = to_xml(ta)
    assert check_xml(text) == []
    assert "scale: 1 model time unit = 1/4 system time units" in text
    assert "c1 &lt;= 2" in text and "c1 &gt;= 1" in text
    back, scale = from_xml(text)
    assert scale == Fraction(1, 4)
    assert sorted(back.constants()) and {int(v) for v in back.constants()} == {1, 2}


@pytest.mark.parametrize("name", ["oned_stable", "twod_quadrant", "twod_saddle"])
def test_xml_round_trip_preserves_reach(abstractions, name):
    ta = abstractions(name).automaton
    back, scale = from_xml(to_xml(ta))
    assert back.structure() == ta.scaled(1 / scale).structure()
    for t1, t2 in WINDOWS:
        assert reach(back, None, t1 / scale, t2 / scale).locations == reach(ta, None, t1, t2).locations


def test_xml_multiple_initial_locations(abstractions):
    ta = abstractions("oned_stable").automaton.with_initial(["e2h0", "e2h1"])
    text = to_xml(ta)
    assert "<committed" in text and check_xml(text) == []
    back, _ = from_xml(text)
    assert back.initial == {"e2h0", "e2h1"}
    assert "_start" not in back.locations


def test_check_xml_reports_problems():
    assert check_xml("<nta") and "not well-formed" in check_xml("<nta")[0]
    errs = check_xml("<nta><template><location id='a'/><init ref='b'/>"
                     "<transition><source ref='a'/><target ref='z'/><label kind='guard'>x &lt;= 1.5</label>"
                     "</transition></template></nta>")
    text = " ".join(errs)
    assert "scale" in text and "system" in text and "init" in text and "clock-op-integer" in text
    with pytest.raises(FormatError):
        from_xml("<nta/>")


def test_xml_names():
    assert xml_name("e1_1h3") == "e1_1h3"
    assert xml_name("S2|core") == "S2__core"
    assert xml_name("0abc") == "L0abc"
