"""Override preemption: an alarm interrupts a long-running recovery plan.

A compressor stop starts the nine-step valve-ramp plan.  Mid-ramp, a thermal
spike raises the override event `abnormal_temperature`: the triggered plan
drops every ordinary intention, slams the valve fully open, and runs as a
protected intention that nothing can preempt.  This script prints the exact
interleaving from the trace.
"""

from dataclasses import replace
from pathlib import Path

from plantmas.harness import load_config, run_exchanger
from plantmas.plant import Injection
from plantmas.trace import Trace

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main() -> None:
    cfg = load_config(SCENARIOS / "exchanger" / "agent.yaml")
    cfg = replace(cfg, duration=8.0, injections=[
        Injection(kind="compressor_stop", at=2.0),
        Injection(kind="abnormal_spike", at=2.4, duration=2.0, magnitude=20.0),
    ])
    trace = Trace()
    run_exchanger(cfg, "agent", trace)

    interesting = ("percept", "event", "plan-selected", "intention-step", "action")
    for r in trace.records:
        if r.kind not in interesting or not r.source.startswith(("agent", "plant")):
            continue
        if r.kind == "intention-step":
            flag = "PROTECTED" if r.payload["protected"] else "ordinary "
            print(f"t={r.clock:6.1f}  step      {flag}  plan={r.payload['plan']}")
        elif r.kind == "plan-selected":
            print(f"t={r.clock:6.1f}  select    {r.payload['plan']} "
                  f"({r.payload['priority']} priority)")
        elif r.kind == "action":
            print(f"t={r.clock:6.1f}  act       {r.payload['action']}")
        elif r.kind == "percept" and r.source == "plant":
            print(f"t={r.clock:6.1f}  inject    {r.payload['injection']}")

    print("\nNote the ramp plan (controlRule1) never takes another step after "
          "the\noverride is selected: drop_all_intentions discards it, and "
          "valve(1.0) is\nthe first action the protected intention performs.")


if __name__ == "__main__":
    main()
