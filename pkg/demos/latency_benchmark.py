"""Reaction-latency comparison: event-driven agent vs. polled chart.

Draws a compressor stop at a random tick per trial and measures how long each
controller takes to issue its first corrective action.  The event-driven
agent reacts inside the same tick (latency 0); the polled chart only notices
at its next period boundary, so its latency is uniform on [0, period).
"""

from pathlib import Path

from plantmas.harness import bench_latency, load_config

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main() -> None:
    cfg = load_config(SCENARIOS / "exchanger" / "bench.yaml", seed_override=42)
    out = bench_latency(cfg, n_trials=1000)
    print(f"{out['trials']} trials, polling period {cfg.polling_period} s\n")
    print(f"{'':14}{'min':>8}{'mean':>8}{'max':>8}{'stddev':>8}")
    for paradigm in ("agent", "sfc"):
        s = out[paradigm]
        print(f"{paradigm:<14}{s['min']:>8.3f}{s['mean']:>8.3f}"
              f"{s['max']:>8.3f}{s['stddev']:>8.3f}")
    print(f"\nwall clock: {out['wall_clock_s']:.2f} s")
    print("\nThe agent's latency is identically zero: the stop percept raises "
          "an event\nand the triggered plan acts within the same 0.1 s tick.  "
          "The chart's mean\nsits near half its 5 s polling period.")


if __name__ == "__main__":
    main()
