"""Fuzzy stabiliser in closed loop on the heat-exchanger plant.

After a compressor stop, the recovery plan ramps the valve down and hands
control to the Mamdani stabiliser, which nudges the valve each tick from
(temperature error, error rate) via min-activation inference and an exact
piecewise-linear centroid.  This script plots the temperature transient as
ASCII and reports the settling metrics.
"""

from pathlib import Path

from plantmas.harness import compute_exchanger_metrics, load_config, run_exchanger
from plantmas.trace import Trace

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main() -> None:
    cfg = load_config(SCENARIOS / "exchanger" / "agent.yaml")
    trace = Trace()
    metrics = run_exchanger(cfg, "agent", trace)

    plant = [r for r in trace.records if r.kind == "plant"]
    lo = min(r.payload["T"] for r in plant)
    hi = max(r.payload["T"] for r in plant)
    span = max(hi - lo, 1e-9)
    width = 60
    print(f"temperature, {lo:.1f}..{hi:.1f} degC over {cfg.duration:.0f} s "
          f"(setpoint {cfg.plant_params.T_setpoint})")
    for r in plant[:: max(1, len(plant) // 40)]:
        bar = int((r.payload["T"] - lo) / span * width)
        print(f"t={r.clock:7.1f}  {'.' * bar}o  T={r.payload['T']:.2f}  "
              f"u={r.payload['u']:.2f}")

    print(f"\nsettling time (|T - setpoint| <= {cfg.settle_band}): "
          f"{metrics['settling_time']} s")
    print(f"final temperature: {metrics['final_T']:.3f} degC")
    replayed = compute_exchanger_metrics(
        trace.records, cfg.plant_params.tick_dt, cfg.plant_params.T_abnormal,
        cfg.plant_params.T_setpoint, cfg.settle_band)
    assert all(metrics[k] == v for k, v in replayed.items()), \
        "metrics must replay from the trace alone"


if __name__ == "__main__":
    main()
