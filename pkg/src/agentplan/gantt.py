"""Text and SVG Gantt charts of a plan."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .model import Plan, ProblemInstance

SLOT_PX = 10
LANE_PX = 20
LABEL_PX = 40
PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")


def piece_letter(piece_id: int) -> str:
    """A, B, ... Z, then a, b, ... z; ``#`` beyond that."""
    if 1 <= piece_id <= 26:
        return chr(ord("A") + piece_id - 1)
    if 27 <= piece_id <= 52:
        return chr(ord("a") + piece_id - 27)
    return "#"


def render_text(plan: Plan, instance: ProblemInstance) -> str:
    """One row per machine, one column per slot; ``.`` marks an idle slot."""
    width = plan.makespan
    label = max((len(f"M{m}") for m in instance.machines), default=2)
    lines = []
    for m in instance.machines:
        row = ["."] * width
        for p in plan.placements:
            if p.machine == m:
                for s in range(p.start, p.finish):
                    row[s] = piece_letter(p.piece_id)
        lines.append(f"M{m}".ljust(label) + " |" + "".join(row) + "|")
    return "\n".join(lines) + "\n"


def render_svg(plan: Plan, instance: ProblemInstance) -> str:
    """Deterministic SVG: 10 px per slot, one lane per machine."""
    lanes = {m: i for i, m in enumerate(instance.machines)}
    width = LABEL_PX + SLOT_PX * plan.makespan + 1
    height = LANE_PX * len(lanes) + 1
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">'
    ]
    for m, i in lanes.items():
        y = i * LANE_PX
        out.append(f'<text x="2" y="{y + 14}">M{m}</text>')
        out.append(f'<line x1="{LABEL_PX}" y1="{y + LANE_PX}" x2="{width - 1}" '
                   f'y2="{y + LANE_PX}" stroke="#ccc"/>')
    for p in plan.placements:
        x = LABEL_PX + SLOT_PX * p.start
        y = lanes[p.machine] * LANE_PX + 2
        color = PALETTE[(p.piece_id - 1) % len(PALETTE)]
        title = escape(f"P{p.piece_id}.WS{p.step_id} [{p.start},{p.finish})")
        out.append(f'<rect x="{x}" y="{y}" width="{SLOT_PX * p.length}" height="{LANE_PX - 4}" '
                   f'fill="{color}" stroke="#000"><title>{title}</title></rect>')
        out.append(f'<text x="{x + 2}" y="{y + 12}">{piece_letter(p.piece_id)}{p.step_id}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
