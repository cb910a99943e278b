#!/usr/bin/env python3
"""Show how free-text run requests route to registered annotation codebooks.

With no arguments, prints the decision for a built-in sample of directives,
from plain codebook names through synonyms ("empathy", "stigma", "obesity")
to all/none triggers and unroutable requests. Pass your own directive as
arguments to try it interactively:

    python3 scripts/routing_demo.py "check empathy and weight discussion"
"""
from __future__ import annotations

import sys

from mosaic.defaults import CANONICAL_ORDER
from mosaic.orchestrator import plan_route

SAMPLE_DIRECTIVES = [
    "Run Bias and WISER",
    "Please run Global",
    "Run Patient Behavior and Intervention",
    "Run all",
    "run bias & wisser",
    "Annotate empathy and advice",
    "Evaluate stigma and prejudice",
    "Check SDOH factors and weight discussion",
    "Focus on patient behaviors",
    "Check obesity coding",
    "Analyze communication style of the doctor",
    "Look at overall dialogue quality",
    "Evaluate conversation flow",
    "Check doctor dominance in dialogue",
    "Review if intervention was successful",
    "Please annotate with all modules available",
    "RUN EVERYTHING",
    "Please run none of the agents",
    "Just check conversation length",
    "asdfghjkl",
]


def describe(directive: str) -> str:
    decision = plan_route(directive, CANONICAL_ORDER)
    agents = ", ".join(decision.agents) if decision.agents else "(no agents)"
    note = f"  !! {decision.warning}" if decision.warning else ""
    return f"{directive!r:>55}  ->  {agents}{note}"


def main() -> int:
    directives = [" ".join(sys.argv[1:])] if len(sys.argv) > 1 else SAMPLE_DIRECTIVES
    print(f"registered codebooks: {', '.join(CANONICAL_ORDER)}\n")
    for directive in directives:
        print(describe(directive))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
