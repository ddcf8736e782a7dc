"""Behaviour change by editing a document, not code.

Inserting a `double_check_with_engineer` goal into the goal scheme makes the
chatbot ask the engineer for a final confirmation after the operator accepts,
before the setup is applied.  No plan library changes: the plan that serves
the goal has always been in the chatbot's library, dormant until a scheme
references it.  This script builds the extended scheme programmatically,
verifies it matches the shipped document, and diffs the two runs.
"""

import hashlib
from pathlib import Path

from plantmas import org
from plantmas.harness import build_lifting_config, load_config
from plantmas.trace import Trace
from plantmas.workflow import LiftingRuntime

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
LIFTING = SCENARIOS / "lifting"


def run_lifting(name: str):
    cfg = load_config(LIFTING / name)
    trace = Trace()
    runtime = LiftingRuntime(build_lifting_config(cfg), trace)
    return runtime.run(), trace.records


def main() -> None:
    base = org.load_scheme_file(LIFTING / "scheme.yaml")
    extended = org.insert_subgoal(
        base, "stage_iv_setup_control", 1,
        org.Goal("double_check_with_engineer", "chatbot",
                 description="final engineer confirmation before applying the setup"))
    shipped = org.load_scheme_file(LIFTING / "scheme_double_check.yaml")
    assert org.canonical_form(extended) == org.canonical_form(shipped)
    print(f"scheme versions: base {base.version[:12]}  "
          f"extended {extended.version[:12]}")

    libs = sorted(p for p in LIFTING.glob("*.yaml") if "scheme" not in p.name
                  and "lifting" not in p.name)
    digest = lambda: {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in libs}
    before = digest()

    m1, recs1 = run_lifting("lifting.yaml")
    m2, recs2 = run_lifting("lifting_double_check.yaml")
    assert digest() == before, "plan libraries must be untouched"

    print(f"base run:         {m1['outcome']}, {len(recs1)} trace records, "
          f"{len(m1['decisions'])} decisions")
    print(f"double-check run: {m2['outcome']}, {len(recs2)} trace records, "
          f"{len(m2['decisions'])} decisions")
    extra = m2["decisions"][len(m1["decisions"]):]
    print(f"the extra decision: {extra}")
    print("\nSame code, same plan libraries; one document line changed the "
          "protocol.")


if __name__ == "__main__":
    main()
