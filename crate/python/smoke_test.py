"""Smoke test for the pyconsortia bindings.

Build and install first:  pip install --no-build-isolation crates/py
"""

import math
import tempfile
from pathlib import Path

import pyconsortia as pc


def main() -> None:
    p = pc.Params()
    assert "gamma_z" in pc.Params.names()

    # Hill activation at the dissociation constant is half-maximal.
    q = p["k_u"]
    half = p["alpha_0"] + (p["alpha_max"] - p["alpha_0"]) / 2
    assert math.isclose(pc.hill_activation(q, p), half, rel_tol=1e-12)

    ref = pc.Reference.step(0.0, 1.0, 60.0)
    assert ref(59.0) == 0.0 and ref(60.0) == 1.0

    traj = pc.integrate(p, ref, 1440.0, output_dt=10.0)
    assert traj["t"][-1] == 1440.0
    xc = traj["Xc"][-1]
    setpoint = pc.rpa_setpoint(p, 1.0)
    err = abs(traj["Qx_i"][-1] - setpoint) / setpoint
    print(f"integrate: final Xc {xc:.4f}, Qx_i error vs set-point {100 * err:.3f}%")
    assert err < 0.01

    ss = pc.steady_state(p.with_ratio(2.0), 1.0)
    assert all(v >= 0 for v in ss.values())

    world = pc.AgentWorld(p, pc.Reference.constant(1.0), width=40.0, height=40.0,
                          controllers=20, targets=20, seed=3)
    world.step(100)
    assert world.cell_count == 40
    assert world.ledger_worst() < 1e-12
    print(f"agent: t = {world.t:.2f} min, mean Xc {world.mean('target', 'Xc'):.4f}")

    scenario = """
name = "py-smoke"
[reference]
kind = "step"
before = 0.0
after = 1.0
at = 60.0
[integrator]
horizon = 600.0
output_dt = 10.0
"""
    canonical = pc.validate_scenario(scenario)
    assert pc.validate_scenario(canonical) == canonical
    with tempfile.TemporaryDirectory() as d:
        files = pc.run_scenario(scenario, d, format="csv")
        names = sorted(Path(f).name for f in files)
        assert names == ["metrics.csv", "trajectories.csv"], names
        header = Path(d, "trajectories.csv").read_text().splitlines()[0]
        assert header == "t,Yd,Z1,Z2,Qu_i,Qu_e,Qu_t,Xc,Qx_t,Qx_e,Qx_i"

    try:
        pc.validate_scenario('name = "x"\n[params]\ngamma = -1.0\n')
    except ValueError as e:
        assert "params.gamma" in str(e)
    else:
        raise AssertionError("invalid scenario accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
