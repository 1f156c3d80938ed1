"""Smoke test for the stokes_lab_py extension module."""

import cmath
import math
import tempfile

import stokes_lab_py as sl


def main():
    euler = sl.Family.euler()
    a0, a1 = euler.singularities(0.5)
    assert abs(a0 - 0.5j) < 1e-14 and abs(a1 + 0.5j) < 1e-14

    # Euler monodromy eigenvalues are exp(±π/ε)
    m = sl.monodromy(euler, 0.5)
    logs = sorted(m["log_eigenvalues0"], key=lambda z: z.real)
    assert abs(logs[-1].real - 2 * math.pi) < 1e-9, logs
    assert m["self_check"] < 1e-9

    # transfer of a contractible loop is the identity
    scale, core = sl.transfer(euler, 0.5, [-0.8 + 0j, -0.8 + 0.2j, -1.0 + 0.2j, -1.0 + 0j, -0.8 + 0j])
    value = [[cmath.exp(scale) * x for x in row] for row in core]
    assert abs(value[0][0] - 1) < 1e-8 and abs(value[0][1]) < 1e-8

    st = sl.stokes(sl.Family.t3())
    assert abs(st["c0"][0][1]) == 0 and abs(st["c1"][1][0]) == 0
    assert st["deviation0"] < 1e-6

    rep = sl.asymptotics(sl.Family.t3(), [0.4, 0.2, 0.1])
    d = [r["distance_to_C0"] for r in rep["rows"]]
    assert d[-1] < d[0], d
    assert rep["csv"].startswith("eps,")

    f = sl.MobiusMap([[2, 0], [0, 1]])
    att, rep_, mult = f.fixed_points()
    assert att is None and abs(rep_) < 1e-12 and abs(mult - 0.5) < 1e-12
    assert abs(f.apply(1.0) - 2.0) < 1e-12
    assert sl.classify_word("aAb") == ("b", "reduced")
    assert sl.classify_word("ab")[1] == "complete-power(1)"

    try:
        sl.Family.parse("n = 2\nbogus\n")
    except sl.StokesLabError as e:
        assert str(e).startswith("ParseError:2"), e
    else:
        raise AssertionError("parse error expected")

    with tempfile.TemporaryDirectory() as out:
        res = sl.run_experiment("selftest", family="euler", out=out)
        assert res["success"], res["failures"]
        assert len(res["files"]) == 3

    print("smoke test passed")


if __name__ == "__main__":
    main()
