"""System definition files.

A plain-text, brace-delimited tree with four sections::

    space {                      # phase space
      dim 4
      omega {                    # symplectic-form matrix, one row per line
        row 0 0 1 0
        ...
      }
    }
    group {                      # symmetry data
      dim 1
      rank 1
      abelian true
      generator {                # one block per Lie-algebra generator,
        row 0 0 1 0              # in basis order
        ...
      }
      torus 0                    # indices spanning a maximal torus action
    }
    hamiltonian {
      param m 1.0                # named constants usable in the expression
      expr (+ (^ v1 2) (^ v3 2))  # prefix syntax; may span several lines
    }
    analysis {                   # optional; tolerances and search controls
      seed 0
      grid 400
      box -3 3                   # lo hi, or lo1 hi1 lo2 hi2 for 2-d algebras
      r_max 0.2
      step 0.01
      tol structural 1e-12       # any field of Tolerances
    }

``#`` starts a comment.  Parsing then serializing then parsing again yields
an identical structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, ValidationError
from .expr import parse_expression, serialize_expression
from .model import (GroupAction, HamiltonianSpec, Model, SymplecticSpace,
                    Tolerances, build_model)
from .systems import BUILTIN_NAMES, make_builtin


@dataclass
class SystemConfig:
    space_dim: int
    omega_rows: list
    group_dim: int
    group_rank: int
    abelian: bool
    generators: list  # list of row-lists
    torus: list
    expr_text: str
    params: dict
    analysis: dict = field(default_factory=dict)
    tol_overrides: dict = field(default_factory=dict)


def _tokenize_lines(text):
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if line.strip():
            yield ln, line


def parse_config(text: str) -> SystemConfig:
    """Parse a system definition; raises :class:`ParseError` with position."""
    lines = list(_tokenize_lines(text))
    pos = [0]

    def eof_error():
        ln = lines[-1][0] if lines else 1
        return ParseError("unexpected end of file", ln, 1)

    def next_line():
        if pos[0] >= len(lines):
            raise eof_error()
        ln, line = lines[pos[0]]
        pos[0] += 1
        return ln, line

    def peek_line():
        if pos[0] >= len(lines):
            return None, None
        return lines[pos[0]]

    def parse_rows(ln_open):
        rows = []
        while True:
            ln, line = next_line()
            parts = line.split()
            if parts == ["}"]:
                return rows
            if parts[0] != "row":
                raise ParseError(f"expected 'row' or '}}', got '{parts[0]}'",
                                 ln, line.index(parts[0]) + 1)
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"bad number in row: {exc}", ln, 1)

    cfg = dict(space_dim=None, omega_rows=None, group_dim=None, group_rank=None,
               abelian=None, generators=[], torus=[], expr_text=None,
               params={}, analysis={}, tol_overrides={})

    def parse_space(ln_open):
        while True:
            ln, line = next_line()
            parts = line.split()
            if parts == ["}"]:
                return
            key = parts[0]
            if key == "dim":
                cfg["space_dim"] = int(parts[1])
            elif key == "omega" and parts[-1] == "{":
                cfg["omega_rows"] = parse_rows(ln)
            else:
                raise ParseError(f"unknown space entry '{key}'", ln, 1)

    def parse_group(ln_open):
        while True:
            ln, line = next_line()
            parts = line.split()
            if parts == ["}"]:
                return
            key = parts[0]
            if key == "dim":
                cfg["group_dim"] = int(parts[1])
            elif key == "rank":
                cfg["group_rank"] = int(parts[1])
            elif key == "abelian":
                if parts[1] not in ("true", "false"):
                    raise ParseError("abelian must be 'true' or 'false'", ln, 1)
                cfg["abelian"] = parts[1] == "true"
            elif key == "generator" and parts[-1] == "{":
                cfg["generators"].append(parse_rows(ln))
            elif key == "torus":
                cfg["torus"] = [int(x) for x in parts[1:]]
            else:
                raise ParseError(f"unknown group entry '{key}'", ln, 1)

    def parse_hamiltonian(ln_open):
        while True:
            ln, line = next_line()
            parts = line.split()
            if parts == ["}"]:
                return
            key = parts[0]
            if key == "param":
                if len(parts) != 3:
                    raise ParseError("param needs a name and a value", ln, 1)
                cfg["params"][parts[1]] = float(parts[2])
            elif key == "expr":
                chunk = line.split(None, 1)[1] if len(parts) > 1 else ""
                while chunk.count("(") > chunk.count(")") or not chunk.strip():
                    ln2, more = next_line()
                    if more.split() == ["}"]:
                        raise ParseError("unbalanced parentheses in expr", ln, 1)
                    chunk += "\n" + more
                cfg["expr_text"] = chunk.strip()
            else:
                raise ParseError(f"unknown hamiltonian entry '{key}'", ln, 1)

    def parse_analysis(ln_open):
        while True:
            ln, line = next_line()
            parts = line.split()
            if parts == ["}"]:
                return
            key = parts[0]
            if key == "tol":
                if len(parts) != 3:
                    raise ParseError("tol needs a name and a value", ln, 1)
                if parts[1] not in Tolerances.__dataclass_fields__:
                    raise ParseError(f"unknown tolerance '{parts[1]}'", ln, 1)
                cfg["tol_overrides"][parts[1]] = float(parts[2])
            elif key == "seed":
                cfg["analysis"]["seed"] = int(parts[1])
            elif key == "grid":
                cfg["analysis"]["grid"] = int(parts[1])
            elif key == "box":
                cfg["analysis"]["box"] = [float(x) for x in parts[1:]]
            elif key == "r_max":
                cfg["analysis"]["r_max"] = float(parts[1])
            elif key == "step":
                cfg["analysis"]["step"] = float(parts[1])
            elif key == "nu_samples":
                cfg["analysis"]["nu_samples"] = int(parts[1])
            else:
                raise ParseError(f"unknown analysis entry '{key}'", ln, 1)

    sections = {"space": parse_space, "group": parse_group,
                "hamiltonian": parse_hamiltonian, "analysis": parse_analysis}
    while pos[0] < len(lines):
        ln, line = next_line()
        parts = line.split()
        if len(parts) != 2 or parts[1] != "{" or parts[0] not in sections:
            raise ParseError(
                f"expected a section header like 'space {{', got '{line.strip()}'",
                ln, 1)
        sections[parts[0]](ln)

    for name in ("space_dim", "omega_rows", "group_dim", "group_rank",
                 "abelian", "expr_text"):
        if cfg[name] is None:
            raise ParseError(f"missing required entry for {name}",
                             lines[-1][0] if lines else 1, 1)
    return SystemConfig(
        space_dim=cfg["space_dim"], omega_rows=cfg["omega_rows"],
        group_dim=cfg["group_dim"], group_rank=cfg["group_rank"],
        abelian=cfg["abelian"], generators=cfg["generators"],
        torus=cfg["torus"], expr_text=cfg["expr_text"], params=cfg["params"],
        analysis=cfg["analysis"], tol_overrides=cfg["tol_overrides"])


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_config(cfg: SystemConfig) -> str:
    """Emit config text; re-parsing reproduces the structure exactly."""
    out = ["space {", f"  dim {cfg.space_dim}", "  omega {"]
    for row in cfg.omega_rows:
        out.append("    row " + " ".join(_fmt(x) for x in row))
    out += ["  }", "}", "group {", f"  dim {cfg.group_dim}",
            f"  rank {cfg.group_rank}",
            f"  abelian {'true' if cfg.abelian else 'false'}"]
    for gen in cfg.generators:
        out.append("  generator {")
        for row in gen:
            out.append("    row " + " ".join(_fmt(x) for x in row))
        out.append("  }")
    if cfg.torus:
        out.append("  torus " + " ".join(str(i) for i in cfg.torus))
    out += ["}", "hamiltonian {"]
    for name in sorted(cfg.params):
        out.append(f"  param {name} {_fmt(cfg.params[name])}")
    tree = parse_expression(cfg.expr_text, cfg.params, cfg.space_dim)
    out.append(f"  expr {serialize_expression(tree)}")
    out.append("}")
    if cfg.analysis or cfg.tol_overrides:
        out.append("analysis {")
        for key in sorted(cfg.analysis):
            val = cfg.analysis[key]
            if key == "box":
                out.append("  box " + " ".join(_fmt(x) for x in val))
            elif key in ("seed", "grid", "nu_samples"):
                out.append(f"  {key} {int(val)}")
            else:
                out.append(f"  {key} {_fmt(val)}")
        for key in sorted(cfg.tol_overrides):
            out.append(f"  tol {key} {_fmt(cfg.tol_overrides[key])}")
        out.append("}")
    return "\n".join(out) + "\n"


def model_from_config(cfg: SystemConfig, overrides: dict | None = None) -> Model:
    params = dict(cfg.params)
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise ValidationError("parameters",
                                  f"override of undeclared parameters: {sorted(unknown)}")
        params.update(overrides)
    tree = parse_expression(cfg.expr_text, params, cfg.space_dim)
    space = SymplecticSpace(cfg.space_dim, np.array(cfg.omega_rows))
    action = GroupAction(cfg.group_dim, cfg.group_rank, cfg.abelian,
                         tuple(np.array(g) for g in cfg.generators),
                         tuple(cfg.torus))
    tol_kwargs = dict(cfg.tol_overrides)
    tol = Tolerances(**tol_kwargs) if tol_kwargs else None
    return build_model(space, action, HamiltonianSpec(tree, params), tol=tol)


def load_system(source: str, overrides: dict | None = None,
                with_options: bool = False):
    """Build a validated model from a builtin name or config text.

    ``overrides`` maps parameter names to values.  With ``with_options`` the
    analysis section (empty for builtins) is returned alongside the model.
    """
    overrides = overrides or {}
    if source in BUILTIN_NAMES:
        model = make_builtin(source, **overrides)
        return (model, {}) if with_options else model
    cfg = parse_config(source)
    model = model_from_config(cfg, overrides)
    if cfg.tol_overrides:
        pass  # already applied in model_from_config
    return (model, dict(cfg.analysis)) if with_options else model
