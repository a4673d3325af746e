"""Smoke test for the compiled extension module."""

import math

import vaxdyn_py as vd


def main():
    p = vd.Params()
    r = vd.r0(p)
    assert abs(r["r0"] - 6.0744) < 1e-3, r
    assert math.isclose(r["r0"], r["r_a"] + r["r_i"] + r["r_a1"] + r["r_i1"], rel_tol=1e-12)

    dfe = vd.dfe(p)
    times, states = vd.simulate(p, dfe, 10.0)
    assert len(times) == 11 and len(states[0]) == 8
    assert all(math.isclose(a, b, rel_tol=1e-9) for a, b in zip(states[-1], dfe))

    beta = vd.critical_beta(p)
    at = p.with_value("beta", beta)
    assert abs(vd.r0(at)["r0"] - 1.0) < 1e-10
    assert vd.bifurcation(p)["b"] > 0.0

    perfect = vd.Params(rho=1.0, omega=0.0, varphi=0.0)
    assert vd.r0(perfect)["r_a1"] == 0.0
    assert vd.bifurcation(perfect)["direction"] == "forward"

    for e in vd.equilibria(p):
        assert e["lambda_star"] > 0.0 and min(e["state"]) >= 0.0

    rows = {name: eps for name, _, _, eps in vd.sensitivity(p)}
    assert rows["beta"] == 1.0
    assert all(rows[k] == 0.0 for k in ("Lambda", "gamma3", "omega", "varphi"))

    try:
        vd.Params(zeta=1.0)
    except KeyError:
        pass
    else:
        raise AssertionError("unknown parameter accepted")
    try:
        vd.simulate(p, [1.0, 2.0], 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("short state accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
