"""System definition files: grammar, round-trip, loading."""

import numpy as np
import pytest

from releq import ParseError, ValidationError
from releq.config import (load_system, model_from_config, parse_config,
                          serialize_config)

OSCILLATOR = """
# planar oscillator with circle symmetry
space {
  dim 4
  omega {
    row 0 0 1 0
    row 0 0 0 1
    row -1 0 0 0
    row 0 -1 0 0
  }
}
group {
  dim 1
  rank 1
  abelian true
  generator {
    row 0 -1 0 0
    row 1 0 0 0
    row 0 0 0 -1
    row 0 0 1 0
  }
  torus 0
}
hamiltonian {
  param w 2.0
  expr (+ (* 0.5 (+ (^ v3 2) (^ v4 2)))
          (* (/ w 2) (+ (^ v1 2) (^ v2 2))))
}
analysis {
  seed 7
  grid 250
  box -3 3
  r_max 0.15
  step 0.005
  tol kernel_rel 1e-8
}
"""


def test_parse_and_load():
    model, opts = load_system(OSCILLATOR, with_options=True)
    assert model.space.dim == 4
    assert model.action.dim_g == 1
    assert opts["seed"] == 7 and opts["grid"] == 250
    assert opts["box"] == [-3.0, 3.0]
    # h = |p|^2/2 + w |q|^2 / 2 with w = 2
    assert model.h([1.0, 0.0, 0.0, 0.0]) == pytest.approx(1.0)


def test_round_trip_identity():
    cfg = parse_config(OSCILLATOR)
    text = serialize_config(cfg)
    cfg2 = parse_config(text)
    assert serialize_config(cfg2) == text
    m1 = model_from_config(cfg)
    m2 = model_from_config(cfg2)
    np.testing.assert_allclose(m1.d2h0, m2.d2h0, atol=0.0)
    np.testing.assert_allclose(m1.space.omega, m2.space.omega, atol=0.0)


def test_parameter_overrides():
    model = load_system(OSCILLATOR, {"w": 8.0})
    assert model.h([1.0, 0.0, 0.0, 0.0]) == pytest.approx(4.0)


def test_override_of_undeclared_parameter_rejected():
    with pytest.raises(ValidationError):
        load_system(OSCILLATOR, {"nope": 1.0})


def test_builtin_names_load():
    model = load_system("spherical_pendulum", {"m": 1.0, "l": 1.0, "g": 1.0})
    assert model.space.dim == 4 and model.action.dim_g == 1
    model2 = load_system("coupled_oscillators",
                         {"m": 1.0, "k": 1.0, "gamma": 0.5})
    assert model2.space.dim == 8 and model2.action.dim_g == 2
    assert model2.action.rank_g == 2


def test_non_antisymmetric_omega_rejected():
    bad = OSCILLATOR.replace("row 0 0 1 0", "row 0 1 1 0", 1)
    with pytest.raises(ValidationError) as err:
        load_system(bad)
    assert "omega_antisymmetry" in str(err.value)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_config("space {\n  dim 4\n  junk 1\n}")
    assert err.value.line == 3


def test_missing_section_reported():
    with pytest.raises(ParseError):
        parse_config("space {\n  dim 2\n  omega {\n    row 0 1\n    row -1 0\n  }\n}")


def test_unbalanced_expr_reported():
    text = OSCILLATOR.replace("(+ (^ v1 2) (^ v2 2))", "(+ (^ v1 2) (^ v2 2)")
    with pytest.raises(ParseError):
        parse_config(text)


def test_unknown_tolerance_rejected():
    text = OSCILLATOR.replace("tol kernel_rel 1e-8", "tol bogus 1e-8")
    with pytest.raises(ParseError):
        parse_config(text)


def test_tolerance_override_applied():
    model = load_system(OSCILLATOR)
    assert model.tol.kernel_rel == 1e-8


def test_comments_and_blank_lines_ignored():
    text = "# leading comment\n\n" + OSCILLATOR + "\n# trailing\n"
    model = load_system(text)
    assert model.space.dim == 4
