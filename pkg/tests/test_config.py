import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chanfsi.config import (ModelConfig, PressureSpec, RadiusSpec, apply_overrides,
                            format_config, load_config, parse_config)
from chanfsi.errors import ConfigError


def test_minimal_config_fills_defaults():
    cfg = parse_config("[scheme]\neps = 1e-3\n")
    assert cfg.kappa == pytest.approx(1e3)
    assert cfg.N1 == 32 and cfg.alpha == pytest.approx(0.45)
    assert cfg.n_steps == 20
    assert cfg.nu == pytest.approx(0.1)


def test_negative_coefficient_names_field():
    with pytest.raises(ConfigError, match="a must be positive"):
        parse_config("[physical]\na = -1\n")


def test_unknown_key_reports_name_and_line():
    with pytest.raises(ConfigError, match="vicosity") as info:
        parse_config("[physical]\nrho = 1\nvicosity = 2\n")
    assert info.value.line == 3
    assert str(info.value).startswith("line 3:")


def test_wrong_section_and_unknown_section():
    with pytest.raises(ConfigError, match="belongs in"):
        parse_config("[physical]\ndt = 0.1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[nope]\nx = 1\n")


def test_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("[scheme]\nthis line is broken\n")
    assert info.value.line == 2


def test_bad_values():
    with pytest.raises(ConfigError, match="N1"):
        parse_config("[scheme]\nN1 = many\n")
    with pytest.raises(ConfigError, match="multiple of dt"):
        parse_config("[scheme]\ndt = 0.03\nT = 0.1\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config("[admissibility]\nalpha = 1.5\n")
    with pytest.raises(ConfigError, match="R0"):
        parse_config("[physical]\nR0 = sine(0.1, -0.5)\n")


def test_pressure_spec_kinds(tmp_path):
    assert PressureSpec.parse("2.5").value(1.0) == 2.5
    assert PressureSpec.parse("constant(-1)").value(0.0) == -1.0
    p = PressureSpec.parse("pulse(2, 0.1, 0.3)")
    assert p.value(0.0) == 0.0
    assert p.value(0.05) == pytest.approx(1.0)  # sin^2 at half rise
    assert p.value(0.2) == 2.0
    assert p.value(0.35) == pytest.approx(1.0)
    assert p.value(0.5) == 0.0
    assert p.scaled(0.5).value(0.2) == 1.0
    np.testing.assert_array_equal(p(np.zeros(3), 0.2), [2.0, 2.0, 2.0])
    (tmp_path / "q.txt").write_text("0 0\n1 2\n")
    tab = PressureSpec.parse("table(q.txt)", tmp_path)
    assert tab.value(0.25) == pytest.approx(0.5)
    assert not tab.is_zero and PressureSpec().is_zero
    with pytest.raises(ConfigError):
        PressureSpec.parse("pulse(1, 0.2, 0.1)")
    with pytest.raises(ConfigError):
        PressureSpec.parse("table(missing.txt)", tmp_path)
    with pytest.raises(ConfigError):
        PressureSpec.parse("ramp(1)")


def test_radius_spec():
    assert RadiusSpec.parse("1.5") == RadiusSpec(1.5, 0.0)
    r = RadiusSpec.parse("sine(1.0, 0.2)")
    assert r.build(2.0).value(np.array([1.0]))[0] == pytest.approx(1.2)
    assert RadiusSpec.parse(r.format()) == r


def test_load_config_and_table_path(tmp_path):
    (tmp_path / "qin.dat").write_text("0 0\n0.1 1\n")
    (tmp_path / "m.ini").write_text("[pressures]\nq_in = table(qin.dat)  # inlet\n")
    cfg = load_config(tmp_path / "m.ini")
    assert cfg.q_in.value(0.05) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


positive = st.floats(1e-3, 1e3, allow_nan=False)


@given(rho=positive, mu=positive, a=positive, eps=st.floats(1e-8, 1e-1),
       amp=st.floats(-1, 1), n1=st.integers(4, 64), vtk=st.booleans())
def test_format_parse_round_trip(rho, mu, a, eps, amp, n1, vtk):
    cfg = ModelConfig(rho=rho, mu=mu, a=a, eps=eps, N1=n1, vtk=vtk,
                      q_w=PressureSpec("pulse", (amp, 0.01, 0.02)))
    again = parse_config(format_config(cfg))
    assert again == cfg
    assert parse_config(format_config(again)) == again


def test_overrides_follow_derived_defaults():
    cfg = ModelConfig()
    new = apply_overrides(cfg, ["eps=1e-2", "q_w=0.5"])
    assert new.kappa == pytest.approx(100.0)
    assert new.q_w.value(0.0) == 0.5
    kept = apply_overrides(ModelConfig(kappa=7.0), ["eps=1e-2"])
    assert kept.kappa == 7.0
    moved = apply_overrides(cfg, ["R0=2.0"])
    assert moved.alpha == pytest.approx(0.9 * min(2.0, 0.25))
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["nokey=1"])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["eps"])
    assert math.isclose(cfg.kappa, 1e4)
