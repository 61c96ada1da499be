import pytest

from permahom.config import STAGES, parse_config, parse_config_text
from permahom.errors import ConfigError, ParseError, ValidationError

MINIMAL = """\
# smallest useful run
shape.kind = sphere
shape.radius = 0.25
"""

DOMAIN = MINIMAL + """\
domain.epsilon = 0.25
domain.a_eps = 0.125, 0.0625
domain.n_c = 4
pipeline.stages = dns, cell, compare
force.kind = swirl
force.params = amplitude=2, gradient=0.5
"""


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.shape.kind == "sphere" and cfg.shape.radius == 0.25
    assert cfg.cell_n == 16 and cfg.stages == ("cell", "k")
    assert cfg.domains == () and cfg.darcy_grid is None
    assert cfg.solver.tol_mom == 1e-8 and cfg.solver.nu == 1.0
    assert (cfg.Lx, cfg.Ly) == (1.0, 1.0)


def test_domain_list_and_stage_order():
    cfg = parse_config_text(DOMAIN)
    assert [d.a_eps for d in cfg.domains] == [0.125, 0.0625]
    assert cfg.stages == tuple(s for s in STAGES if s in ("cell", "dns", "compare"))
    assert cfg.force.params == {"amplitude": 2.0, "gradient": 0.5}
    f = cfg.force.build(Lx=1.0, Ly=1.0)
    assert f.kind == "swirl"


def test_non_integer_tiling_is_validation_error():
    with pytest.raises(ValidationError) as e:
        parse_config_text(DOMAIN.replace("domain.epsilon = 0.25", "domain.epsilon = 0.3"))
    assert e.value.key == "domain.a_eps"


def test_unknown_key():
    with pytest.raises(ValidationError) as e:
        parse_config_text(MINIMAL + "shape.colour = red\n")
    assert "shape.colour" in str(e.value)


@pytest.mark.parametrize("text,line", [
    ("shape.kind = sphere\nshape.radius 0.25\n", 2),
    ("\n\nshape.kind sphere\n", 3),
    ("shape.kind = sphere\nshape.kind = sphere\n", 2),
    ("shape kind = sphere\n", 1),
])
def test_parse_error_line_numbers(text, line):
    with pytest.raises(ParseError) as e:
        parse_config_text(text)
    assert e.value.line == line and f"line {line}" in str(e.value)


@pytest.mark.parametrize("extra,key", [
    ("cell.n = 3", "cell.n"),
    ("cell.n = 4.5", "cell.n"),
    ("solver.nu = -1", "solver.nu"),
    ("solver.tol_mom = nan", "solver.tol_mom"),
    ("force.kind = vortex", "force.kind"),
    ("pipeline.stages = cell, mesh", "pipeline.stages"),
    ("darcy.gx = 8", "darcy.gy"),
])
def test_validation_errors_name_the_key(extra, key):
    with pytest.raises(ValidationError) as e:
        parse_config_text(MINIMAL + extra + "\n")
    assert key in str(e.value)


def test_shape_required_for_cell_stage():
    with pytest.raises(ValidationError):
        parse_config_text("cell.n = 8\n")


def test_obstacle_must_fit():
    with pytest.raises(ValidationError):
        parse_config_text("shape.kind = sphere\nshape.radius = 0.6\n")


def test_domain_stage_requires_domain():
    with pytest.raises(ValidationError):
        parse_config_text(MINIMAL + "pipeline.stages = dns\n")


def test_manufactured_force_needs_K():
    cfg = parse_config_text(MINIMAL + "force.kind = manufactured\n")
    with pytest.raises(ValidationError):
        cfg.force.build()


def test_hash_ignores_comments_and_order(tmp_path):
    a = parse_config_text("shape.radius = 0.25\nshape.kind = sphere  # note\n")
    b = parse_config_text(MINIMAL)
    assert a.hash == b.hash
    c = parse_config_text(MINIMAL + "cell.n = 8\n")
    assert c.hash != b.hash
    p = tmp_path / "run.cfg"
    p.write_text(MINIMAL)
    assert parse_config(p).hash == b.hash


def test_errors_share_base():
    assert issubclass(ParseError, ConfigError) and issubclass(ValidationError, ConfigError)
