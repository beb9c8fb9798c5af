"""Smoke test for the compiled extension.

Build and run from the repository root:

    cargo build -p layoutkit-py --release --features extension-module
    cp target/release/liblayoutkit_py.so python/layoutkit_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import layoutkit_py as lk


def check(name, cond):
    print(("PASS " if cond else "FAIL ") + name)
    return cond


def main():
    ok = True

    ok &= check("iou3d half overlap", math.isclose(
        lk.iou3d([0, 0, 0], [2, 1, 1], [1, 0, 0], [3, 1, 1]), 1 / 3, rel_tol=1e-12))
    ok &= check("levenshtein", lk.levenshtein([1, 2, 3], [3, 2, 1]) == 2)

    adv = lk.group_advantages([1.0, 2.0, 3.0])
    ok &= check("advantages", all(math.isclose(a, b, abs_tol=1e-6)
                                  for a, b in zip(adv, [-1.224745, 0.0, 1.224745])))

    obj = lk.grpo_objective([1.0, 0.0], [[-1.0], [-1.0]], [[-1.0], [-1.0]], [[-1.0], [-1.0]])
    ok &= check("objective at identity ratios", math.isclose(obj, 0.0, abs_tol=1e-12))

    for task in ("sorting", "alignment", "roomedit"):
        lines = lk.generate(task, 3, 42)
        ok &= check(f"{task}: generated 3", len(lines) == 3)
        for line in lines:
            target = lk.target_graph(line)
            graph, residual = lk.solve(line)
            ok &= check(f"{task} {json.loads(line)['id']}: solved",
                        graph.iou_reward(target) > 0.999
                        and graph.collision_score() == 1.0
                        and not lk.verify(line, graph))

    line = lk.generate("sorting", 1, 7)[0]
    target = lk.target_graph(line)
    again = lk.SceneGraph(target.to_json())
    ok &= check("json round trip", again == target and len(again) == len(target))

    trace = lk.canonical_trace(target)
    ok &= check("canonical trace format", lk.format_score(trace) == 1.0)
    r = lk.composite_reward(trace, target)
    ok &= check("composite of target", math.isclose(r["composite"], 1.4, abs_tol=1e-9))
    ok &= check("empty trace", lk.composite_reward("", target)["composite"] == 0.0)

    print("all checks passed" if ok else "some checks failed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
