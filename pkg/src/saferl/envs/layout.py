"""Plain-text grid layouts: '.' free, '#' hazard, 'G' goal, 'B' box, 'A' spawn."""

from dataclasses import dataclass
from typing import List, Optional, Tuple

Cell = Tuple[int, int]


@dataclass(frozen=True)
class GridLayout:
    width: int
    height: int
    hazards: List[Cell]
    goal: Optional[Cell]
    box: Optional[Cell]
    spawn: Optional[Cell]


def parse_layout(text: str) -> GridLayout:
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty layout")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("layout rows must all have the same width")
    hazards, goal, box, spawn = [], None, None, None
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            if ch == "#":
                hazards.append((x, y))
            elif ch == "G":
                if goal is not None:
                    raise ValueError("layout has more than one goal")
                goal = (x, y)
            elif ch == "B":
                if box is not None:
                    raise ValueError("layout has more than one box")
                box = (x, y)
            elif ch == "A":
                if spawn is not None:
                    raise ValueError("layout has more than one spawn")
                spawn = (x, y)
            elif ch != ".":
                raise ValueError(f"unknown layout character {ch!r} at ({x}, {y})")
    return GridLayout(width, len(rows), hazards, goal, box, spawn)


def load_layout(path) -> GridLayout:
    with open(path) as fh:
        return parse_layout(fh.read())
