"""Artificial-lifting workflow, narrated: four agents, two human proxies.

The coordinator dispatches goal-scheme stages to committed agents; the
modeller and optimiser call their artifacts; the chatbot runs the
engineer-then-operator approval protocol; the controller applies the
accepted setup and reports to the regulatory agency.  Run once with an
all-accept policy and once with a contest to show the revision loop.
"""

from pathlib import Path

from plantmas.harness import build_lifting_config, load_config
from plantmas.trace import Trace
from plantmas.workflow import LiftingRuntime

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def narrate(name: str) -> None:
    print(f"=== {name} ===")
    cfg = load_config(SCENARIOS / "lifting" / name)
    trace = Trace()
    runtime = LiftingRuntime(build_lifting_config(cfg), trace)
    metrics = runtime.run()

    for r in trace.records:
        if r.kind == "goal-status" and r.payload["status"] == "achieved":
            print(f"  tick {r.tick:>3}  goal achieved   {r.payload['goal']}")
        elif r.kind == "decision":
            p = r.payload
            extra = f" {p['adjustments']}" if p["adjustments"] else ""
            print(f"  tick {r.tick:>3}  {p['actor']:>8} {p['verdict']}"
                  f" {p['proposal_id']} ({p['phase']}){extra}")
        elif r.kind == "event" and "revision" in r.payload:
            print(f"  tick {r.tick:>3}  REVISION of {r.payload['revision']}, "
                  f"constraints pinned: {r.payload['adjustments']}")
        elif r.kind == "artifact-call":
            print(f"  tick {r.tick:>3}  call {r.payload['entity']}"
                  f".{r.payload['operation']}")

    print(f"  outcome: {metrics['outcome']} in {metrics['rounds']} round(s), "
          f"{metrics['optimizer_invocations']} optimizer call(s)")
    if metrics["receipt"]:
        print(f"  agency receipt: {metrics['receipt']['receipt_id']}")
    print()


if __name__ == "__main__":
    narrate("lifting.yaml")
    narrate("lifting_contest.yaml")
