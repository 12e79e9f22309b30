"""Single type-A piece: protocol trace, greedy plan and the exact optimum.

    python demos/table1_walkthrough.py
"""
from importlib import resources

from agentplan.csp_agents import PrimaryAlgorithm
from agentplan.gantt import render_text
from agentplan.model import min_jumps, parse_problem
from agentplan.oracle import OracleLimits, brute_force

inst = parse_problem((resources.files("agentplan.data") / "tableA.problem").read_text())

# start from a horizon that is too short so the enlargement loop shows up
algo = PrimaryAlgorithm(inst, horizon=12)
plan = algo.solve()

print("parameterization:", " ".join(algo.parameterization_trace.ids()))
for i, trace in enumerate(algo.propagation_traces):
    print(f"propagation run {i}:", " ".join(trace.ids()))
print("horizons tried:", algo.network.horizon_history)
print()
print(render_text(plan, inst))
print(f"makespan {plan.makespan}, jumps {plan.jumps} (type minimum {min_jumps(inst.types['A'])}), "
      f"cost {float(plan.cost)}")

exact = brute_force(inst, limits=OracleLimits(max_steps=11))
print("oracle makespan:", exact.value, "after", exact.states, "states")
