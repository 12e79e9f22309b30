"""Machine 3 breaks down mid-schedule; only the affected part is re-placed.

    python demos/disturbance.py
"""
from importlib import resources

from agentplan.csp_agents import MachineDown, PrimaryAlgorithm, apply_disturbance
from agentplan.gantt import render_text
from agentplan.model import check_feasibility, parse_problem

inst = parse_problem((resources.files("agentplan.data") / "tableA3.problem").read_text())
algo = PrimaryAlgorithm(inst)
before = algo.solve()
print("before:")
print(render_text(before, inst))

event = MachineDown(3, 6, 9)
apply_disturbance(algo, event)
after = algo.propagate()
print(f"\nafter M3 down in [{event.start}, {event.end}):")
print(render_text(after, algo.instance))

kept = after.lookup()
same = sum(kept[(p.piece_id, p.step_id)] == p for p in before.placements)
print(f"\n{same}/{len(before.placements)} placements unchanged; "
      f"makespan {before.makespan} -> {after.makespan}; "
      f"violations {check_feasibility(after, algo.instance)}")
