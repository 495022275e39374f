"""Smoke test for the riskcore extension module.

Build first:  pip install --no-build-isolation ./crates/py
Then run:     python python/smoke.py   (or pytest python/smoke.py)
"""

import tempfile
from pathlib import Path

import riskcore


def close(actual, expected, tol):
    return abs(actual - expected) / expected <= tol


def test_rates():
    hours = riskcore.fleet_exposure_hours(1000, 22, 365)
    assert hours == 1000 * 22 * 365
    assert close(riskcore.harm_rate(1, hours), 1.25e-7, 0.005)
    tolerable = riskcore.harm_rate("1/6", 8.623e9 / 24)
    assert close(tolerable, 4.64e-10, 0.005)
    residual = riskcore.predicted_residual(1.25e-7, 0.999, 0.999, corrupt=1e-11, min=1e-10)
    assert close(residual, max(1e-10, 1.25e-7 * (1 - 0.999**2)) + 1e-11, 1e-12)


def test_spec():
    spec = riskcore.BehaviorSpec.parse(
        'fact a "a";\nfact b "b";\naction go "go";\n'
        "rule r1: if a then b;\nrule r2: if b then go;\n"
    )
    assert spec.infer({"a"}) == (["a", "b"], ["go"])
    assert riskcore.BehaviorSpec.parse(spec.to_text()) == spec


def test_loop():
    with tempfile.TemporaryDirectory() as d:
        ws = riskcore.Workspace.init(str(Path(d) / "ws"), fixture=riskcore.FIXTURE)
        assert ws.validate() == []
        assert ws.infer()["base"] == ["stop_at_crosswalk"]
        first = ws.run()
        assert first["report"]["convergence"]["result"] == "not_converged"
        assert first["report"]["summary"] == "1 criterion violated (PRB/S3): 1.25e-7 > 4.64e-10"
        ws.propose_measure(riskcore.fixture_measure(), apply=True)
        final = ws.run()
        assert final["report"]["convergence"]["result"] == "accepted"
        assert [row["status"] for row in ws.hazard_log()] == ["accepted"]
        assert len(ws.report()["requirements_coverage"]) == 13
        assert "crossing_intention" in ws.export()["text"]
        try:
            riskcore.Workspace(str(Path(d) / "missing"))
        except riskcore.RiskcoreError:
            pass
        else:
            raise AssertionError("opening a missing workspace should fail")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok  {name}")
