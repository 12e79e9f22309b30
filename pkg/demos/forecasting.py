"""Three type-A pieces: greedy plan versus ant colony search at forecast depths 0..2.

    python demos/forecasting.py
"""
from importlib import resources

from agentplan.aco_opt import AcoParams, aco_optimize
from agentplan.csp_agents import solve_csp
from agentplan.gantt import render_text
from agentplan.model import MinMakespan, parse_problem

inst = parse_problem((resources.files("agentplan.data") / "tableA3.problem").read_text())
greedy = solve_csp(inst)
print(f"greedy: makespan {greedy.makespan}, jumps {greedy.jumps}")
print(render_text(greedy, inst))

cache: dict = {}  # greedy plans per step order, reused across runs
for depth in (0, 1, 2):
    params = AcoParams(forecast=depth, iterations=20, ants=10, seed=0)
    res = aco_optimize(inst, MinMakespan(), params, order_cache=cache)
    trail = " ".join(str(v) for v in res.history)
    print(f"F={depth}: makespan {res.best.makespan}, jumps {res.best.jumps}; history {trail}")

print()
print(render_text(res.best, inst))
