"""Smoke test for the halfspace_py extension.

Install first:  pip install --no-build-isolation ./crates/py
"""
import json
import math
import sys
import tempfile
from fractions import Fraction

import halfspace_py as hs


def check(name, ok):
    print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return ok


def main():
    results = []
    print("halfspace", hs.version())

    un = hs.burgers_un(4)
    u2 = {t["power"]: Fraction(t["coeff"]) for t in un[1]}
    results.append(check("U_2 = 1 - q", u2 == {0: 1, 1: -1}))

    est = hs.burgers_astar(1.0, 30)
    results.append(check("a_*(1) inside [e, e/(1-e^-2)]", est["inside"] and est["lower"] <= est["estimate"] <= est["upper"]))

    ts = hs.burgers_tstar(5.0, 40)
    t_ch = hs.colehopf_first_zero(5.0, 0.0, 1.0)
    results.append(check("T_*(5) <= log 5", ts["estimate"] <= math.log(5.0) + 1e-9))
    results.append(check("Cole-Hopf zero within 2%", abs(t_ch - ts["estimate"]) / ts["estimate"] <= 0.02))

    cs = hs.cosine_coefficients(3)
    results.append(check("cosine coefficients 1/2, 3/8, 5/16", [Fraction(c) for c in cs] == [Fraction(1, 2), Fraction(3, 8), Fraction(5, 16)]))

    rows = hs.ode_picard(7)
    results.append(check("Picard pattern n <= 7", all(r["pattern_holds"] for r in rows)))

    results.append(check("cascade sandwich", hs.cascade_bounds(1.0, 1.5, 0.5, 1.0, 12, [0.1, 0.5, 1.0, 2.0])))

    clm = hs.stationary_residual("clm", 1.0, 0.3)
    results.append(check("CLM stationary residual vanishes", clm["residual_stated"] < 1e-12))

    eq = json.dumps({"name": "ode_square"})
    data = json.dumps({"dim": 1, "atoms": [{"xi": ["1"], "coeff": [["2", "0"]]}]})
    sol = hs.solve_lattice(eq, data, "6")
    results.append(check("ODE lattice solve exact", sol["residual"]["exact_zero"] and len(sol["spectrum"]["atoms"]) == 6))

    suite = hs.weight_suite(7, 3, 50, 50)
    results.append(check("weight suite", suite["condition_failures"] == 0 and suite["inequality_failures"] == 0))

    with tempfile.TemporaryDirectory() as d:
        code = hs.run_cli(["--out", d, "cascade", "--N", "10"])
        results.append(check("cli cascade exit 0", code == 0))

    print(f"{sum(results)}/{len(results)} passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
