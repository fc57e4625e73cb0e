"""Tests for the line-oriented case file parser and the bundled case."""

import pytest

from gridfreq.casefile import CaseParseError, load_bundled_case, parse_case

MINIMAL = """
SYSTEM 100.0 60.0
BUS 1 slack 1.04 0 0 0 0 0 0
BUS 2 pq    1.00 0.5 0.1 0 0 0 0
BRANCH 1 2 0.01 0.1 0.0 1.0 1
"""

MACHINE_LINE = ("MACHINE 1 4.0 0.0 0.0 0.146 0.0969 0.0608 0.0969 8.96 0.31 "
                "100.0 20.0 0.2 1.0 0.314 0.063 0.35 -5.0 5.0 "
                "0.12 0.1 3.5 0.0 2.5")
CIG_LINE = "CIG 2 1.0 0.0 1.2 0.05 10.0 1.0 0.5 20.0 0.02 1.5 0.02 0.15 4.2 0.0625"


def test_parse_minimal_network():
    case = parse_case(MINIMAL)
    assert case.network.n_bus == 2
    assert len(case.network.branches) == 1
    assert case.network.s_base == 100.0
    assert case.network.f_base == 60.0
    assert case.machines == [] and case.cigs == []


def test_parse_devices():
    case = parse_case(MINIMAL + MACHINE_LINE + "\n" + CIG_LINE + "\n")
    assert len(case.machines) == 1
    m = case.machines[0]
    assert m.bus == 1
    assert m.params.H == 4.0
    assert m.avr.ka == 20.0
    assert m.gov.droop == 0.12
    c = case.cigs[0]
    assert c.bus == 2
    assert c.params.p_ref == 1.0
    assert c.params.K == 1.2
    assert c.params.pll.ki == 4.2
    assert c.params.x_t == 0.0625


def test_comments_and_blank_lines_ignored():
    case = parse_case("# header\n\n" + MINIMAL + "BUS 3 pq 1.0 0 0 0 0 0 0 # trail\n")
    assert case.network.n_bus == 3


def test_error_reports_line_number():
    bad = MINIMAL.replace("BRANCH 1 2 0.01 0.1 0.0 1.0 1",
                          "BRANCH 1 2 0.01 oops 0.0 1.0 1")
    with pytest.raises(CaseParseError, match="line 5"):
        parse_case(bad)


def test_unknown_record_type_rejected():
    with pytest.raises(CaseParseError, match="GADGET"):
        parse_case(MINIMAL + "GADGET 1 2 3\n")


def test_wrong_field_count_rejected():
    with pytest.raises(CaseParseError, match="expected 24"):
        parse_case(MINIMAL + "MACHINE 1 4.0 0.0\n")
    with pytest.raises(CaseParseError, match="expected 15"):
        parse_case(MINIMAL + "CIG 2 1.0\n")


def test_device_on_unknown_bus_rejected():
    with pytest.raises(CaseParseError, match="unknown bus 9"):
        parse_case(MINIMAL + CIG_LINE.replace("CIG 2", "CIG 9") + "\n")


def test_network_invariants_checked():
    with pytest.raises(CaseParseError):
        parse_case(MINIMAL.replace("BUS 2 pq", "BUS 1 pq"))  # duplicate id


def test_bundled_wscc_case():
    case = load_bundled_case("wscc9")
    net = case.network
    assert net.n_bus == 9
    assert len(net.branches) == 9
    assert len(case.machines) == 3
    assert [m.params.H for m in case.machines] == [4.0, 4.0, 3.0]
    assert len(case.cigs) == 1
    cig = case.cigs[0]
    assert cig.bus == 7
    assert cig.params.p_ref == 1.0  # 100 MW on the 100 MVA base
    assert cig.params.K == 1.2
    assert cig.params.x_t > 0.0  # connected through a step-up transformer
    # total scheduled load of the standard case: 3.15 + j1.15
    assert sum(b.p_load for b in net.buses) == pytest.approx(3.15)
    assert sum(b.q_load for b in net.buses) == pytest.approx(1.15)
