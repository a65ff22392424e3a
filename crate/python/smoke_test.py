"""Smoke test for the pymcn extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/pymcn-*.whl
"""

import json
import math
import pathlib

import pymcn

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"


def fixture(name):
    return (FIXTURES / name).read_text()


def check_polynomial():
    p = pymcn.Polynomial.from_roots([0.5, -2.0])
    assert p.coeffs == [-1.0, 1.5, 1.0], p.coeffs
    assert p(0.5) == 0.0
    q = p * pymcn.Polynomial([1.0, 1.0])
    assert q.degree == 3
    roots = sorted(r.real for r in p.roots())
    assert all(abs(a - b) < 1e-12 for a, b in zip(roots, [-2.0, 0.5]))


def check_analyze():
    rep = pymcn.analyze(fixture("example1_eta_b.json"))
    tf = rep["controllability"]["transfer_function"]
    assert abs(tf["num"][0] - 0.4) < 1e-12 and abs(tf["num"][1] - 0.6) < 1e-12
    assert abs(rep["controllability"]["total_delay_s"] - 0.02) < 1e-15


def check_codesign_and_replay():
    cfg = fixture("example3_case1.json")
    out = pymcn.codesign(cfg)
    m = out["solution"]["metrics"]
    assert abs(m["l2"] - 6.245) / 6.245 < 5e-3, m["l2"]
    assert out["solution_file"]["config_hash"] == pymcn.config_hash(cfg)
    again = pymcn.simulate(cfg, json.dumps(out["solution_file"]))
    assert again["trace"]["y"] == out["trace"]["y"]
    assert all(abs(e) < 1e-9 for e in out["trace"]["e"][m["l"]:])


def check_errors():
    cfg = json.loads(fixture("example3_codesign.json"))
    cfg["bounds"]["overshoot_y"] = 0.0
    try:
        pymcn.codesign(json.dumps(cfg))
    except pymcn.InfeasibleError:
        pass
    else:
        raise AssertionError("expected InfeasibleError")
    try:
        pymcn.codesign("{\"plant\": 3}")
    except pymcn.ConfigError as e:
        assert "plant" in str(e)
    else:
        raise AssertionError("expected ConfigError")


def check_search():
    res = pymcn.schedule_search(fixture("example4.json"), [2800.0, 2900.0, 3000.0])
    l2 = {r["name"]: r["l2"] for r in res["ranking"]}
    assert l2["eta_a"] <= l2["eta_c"] <= l2["eta_b"], l2
    assert set(res["sweep"]) == set(l2)


def check_rates():
    assert pymcn.ceil_log2_rate(0.1, 500.0, 1.0, 1.0) == 14
    assert pymcn.ceil_log2_rate(1.0, 0.5, 2.0, 1.0) == 1
    assert math.isclose(2 ** pymcn.ceil_log2_rate(1.0, 1.0, 3.0, 1.0), 8)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("check_"):
            fn()
            print(f"ok {name[6:]}")
