"""Quick check that the extension imports and agrees with the Rust side.

Build first:  pip install --no-build-isolation ./crates/py
"""

import math

import levcycle_py as lc


def main():
    lam = lc.solve_leverage(1e-4, 2e-5)
    assert lam > 1.0, lam

    fp = lc.fixed_point()
    assert abs(fp["lambda"] - 48.257) < 0.01, fp
    assert sum(1 for z in fp["eigenvalue_moduli"] if z < 1e-6) == 1

    red = [lc.fixed_point("reduced1d", gamma=100.0, alpha=1.64, sigma_eps=0.005, omega=w)["lambda"] for w in (0.1, 0.5, 0.9)]
    assert max(red) - min(red) < 1e-9, red
    assert abs(lc.map_1d(red[0], gamma=100.0, alpha=1.64, sigma_eps=0.005) - red[0]) < 1e-9

    assert abs(lc.logistic_lyapunov() - math.log(2)) < 0.01

    w2, _ = lc.boundaries(alpha=1.2)
    assert w2 is not None and abs(w2 - 0.118) < 1e-3, w2

    traj = lc.simulate("reduced", periods=50, seed=3, n=200, sigma_eps=0.2236)
    assert len(traj["records"]) == 50
    again = lc.simulate("reduced", periods=50, seed=3, n=200, sigma_eps=0.2236)
    assert traj == again

    summary = lc.ensemble("reduced", periods=200, count=4, n=100, sigma_eps=0.2236)
    assert len(summary["per_seed"]) == 4 and summary["mean_delta"] > 0

    try:
        lc.fixed_point(bogus=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown parameter accepted")

    print("smoke test ok: lambda* = %.6f, omega2(alpha=1.2) = %.6f" % (fp["lambda"], w2))


if __name__ == "__main__":
    main()
