"""Config loading: schema checks, lazy section builders, error wrapping."""

import json

import pytest

from bdsdelab import ConfigError, load_config

GOOD = {
    "problem": {
        "T": 1.0, "N": 40, "d": 1,
        "f": {"catalog": "linear", "params": {"a": 1.0, "b": 0.0}},
        "g": {"catalog": "zero"},
        "xi": {"kind": "constant", "value": 1.0},
    },
    "paths": {"outer": 2, "inner": 100, "seed": 5},
    "scheme": {"degree": 2, "picard": 2, "workers": 2},
    "regularize": {"m_schedule": [3, 6], "radius": 10.0, "spacing": 0.02},
    "experiment": {"kind": "stability", "perturbations": [1.0, 0.1]},
}


def write(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_full_config_builds_everything(tmp_path):
    cfg = load_config(write(tmp_path, GOOD))
    problem = cfg.build_problem()
    assert problem.grid.steps == 40
    bundle = cfg.build_bundle(problem)
    assert bundle.seed == 5 and bundle.outer == 2
    assert cfg.build_bundle(problem, seed=9).seed == 9
    scheme = cfg.build_scheme()
    assert (scheme.degree, scheme.picard, scheme.workers) == (2, 2, 2)
    assert cfg.m_schedule() == (3.0, 6.0)
    assert cfg.lattice().spacing == 0.02
    assert cfg.experiment()["kind"] == "stability"


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.json"))
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(p))


def test_unknown_top_level_section(tmp_path):
    with pytest.raises(ConfigError, match="unknown top-level"):
        load_config(write(tmp_path, {"problme": {}}))


def test_problem_section_is_lazy(tmp_path):
    # a config without a problem can still serve the experiment section
    cfg = load_config(write(tmp_path, {
        "experiment": {"kind": "counterexample", "perturbations": [10]}}))
    assert cfg.experiment()["kind"] == "counterexample"
    with pytest.raises(ConfigError, match=r"\[problem\]"):
        cfg.build_problem()


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d["problem"].pop("T"), "missing 'T'"),
    (lambda d: d["problem"].pop("xi"), "missing 'xi'"),
    (lambda d: d["problem"].update(N=0), "problem"),
    (lambda d: d["problem"]["f"].pop("catalog"), "catalog.*expr|expr"),
    (lambda d: d["problem"]["xi"].update(kind="nope"), "xi"),
    (lambda d: d["scheme"].update(degr=1), "unknown keys"),
    (lambda d: d["regularize"].update(m_schedule=[6, 3]), "increasing"),
    (lambda d: d["experiment"].update(kind="wat"), "kind"),
    (lambda d: d["experiment"].update(perturbations=[]), "empty"),
])
def test_section_errors_are_config_errors(tmp_path, mutate, needle):
    import copy
    data = copy.deepcopy(GOOD)
    mutate(data)
    cfg = load_config(write(tmp_path, data))
    with pytest.raises(ConfigError, match=needle):
        cfg.build_problem()
        cfg.build_scheme()
        cfg.m_schedule()
        cfg.experiment()


def test_expression_problem_route(tmp_path):
    data = {
        "problem": {
            "T": 0.5, "N": 10, "d": 2,
            "f": {"expr": "3 * pow(y, 2/3) + 0.1 * z2", "growth": 3.2},
            "g": {"exprs": ["0.2 * y"], "c": 0.04, "alpha": 0.5},
            "xi": {"kind": "expr", "source": "w * w"},
        },
    }
    p = load_config(write(tmp_path, data)).build_problem()
    assert p.w_dim == 2
    assert p.f.lipschitz is None
    assert p.xi.kind == "terminal"


def test_seed_default_and_override(tmp_path):
    cfg = load_config(write(tmp_path, GOOD))
    assert cfg.seed() == 5
    assert cfg.seed(77) == 77
    bare = load_config(write(tmp_path, {
        "experiment": {"kind": "counterexample", "perturbations": [1]}},
        name="bare.json"))
    assert bare.seed() == 0
