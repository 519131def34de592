"""Category-tagged instruction generation over a scene.

Each category has at least five surface forms. An instruction variant picks
one form; the form's free parameters (row, column, reference object, corner,
...) are drawn from a seeded stream and redrawn until the constraint has a
valid answer on the scene.
"""

from __future__ import annotations

from dataclasses import dataclass

from .constraints import (
    Affordance,
    And,
    Col,
    Constraint,
    Distance,
    Feasible,
    Height,
    Knowledge,
    Not,
    Ordinal,
    Region,
    Row,
    Size,
    parse_constraint,
    resolve,
    to_sexpr,
)
from .scene import CATEGORIES, REGIONS, Scene, feasible_slots, knowledge_table
from .seeding import rng_for

RETRY_BUDGET = 64
ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth")
REGION_WORDS = {
    "lower-left": "lower-left",
    "lower-right": "lower-right",
    "upper-left": "upper-left",
    "upper-right": "upper-right",
}


class UnsatisfiableOnScene(RuntimeError):
    pass


@dataclass(frozen=True)
class Instruction:
    text: str
    constraint: Constraint
    category: str
    target_mode: str  # unique | any-of-set

    @property
    def constraint_text(self) -> str:
        return to_sexpr(self.constraint)


def target_mode(category: str) -> str:
    return "any-of-set" if category == "vague" else "unique"


def _refs(scene):
    return [o.name for o in scene.objects if o.role == "reference"]


def _ordinal_forms():
    def cell(scene, rng):
        r = int(rng.integers(1, scene.tray.rows + 1))
        c = int(rng.integers(1, scene.tray.cols + 1))
        return Ordinal(r, c), {"r": r, "c": c, "rth": ORDINALS[r - 1], "cth": ORDINALS[c - 1]}

    return [
        (cell, "Place the {obj} in the slot at row {r}, column {c}, counting rows from the bottom and columns from the left."),
        (cell, "Move the {obj} into the slot at ({r}, {c}). Rows from the bottom, and columns from the left."),
        (cell, "Put the {obj} into the {rth} row from the bottom, {cth} slot from the left."),
        (cell, "Insert the {obj} into the slot in row {r} counted from the front and column {c} counted from the left."),
        (cell, "Counting columns from the left and rows from the bottom, the {obj} goes in column {c}, row {r}."),
    ]


def _fixed(constraint):
    return lambda scene, rng: (constraint, {})


def _size_forms():
    return [
        (_fixed(Size("max")), "Place the {obj} into the largest compartment."),
        (_fixed(Size("min")), "Put the {obj} in the smallest slot on the tray."),
        (_fixed(Size("max")), "Find the biggest opening in the tray and insert the {obj} there."),
        (_fixed(Size("min")), "Move the {obj} into the slot with the least room."),
        (_fixed(Size("max")), "Choose the roomiest slot for the {obj}."),
    ]


def _height_forms():
    return [
        (_fixed(Height("max")), "Place the {obj} in the highest slot."),
        (_fixed(Height("min")), "Put the {obj} into the slot whose rim sits lowest."),
        (_fixed(Height("max")), "Insert the {obj} into the tallest compartment."),
        (_fixed(Height("min")), "Move the {obj} to the lowest slot on the tray."),
        (_fixed(Height("max")), "Which slot is raised the most? Put the {obj} there."),
    ]


def _distance(cmp):
    def build(scene, rng):
        refs = _refs(scene)
        ref = refs[int(rng.integers(len(refs)))]
        return Distance(ref, cmp), {"ref": ref}
    return build


def _distance_forms():
    return [
        (_distance("min"), "Place the {obj} in the slot closest to the {ref}."),
        (_distance("max"), "Put the {obj} into the slot farthest from the {ref}."),
        (_distance("min"), "Insert the {obj} into the compartment nearest the {ref}."),
        (_distance("max"), "Move the {obj} to the slot that is as far away from the {ref} as possible."),
        (_distance("min"), "Put the {obj} in whichever slot is right next to the {ref}."),
    ]


def _row(scene, rng):
    r = int(rng.integers(1, scene.tray.rows + 1))
    return r, {"r": r, "rth": ORDINALS[r - 1]}


def _col(scene, rng):
    c = int(rng.integers(1, scene.tray.cols + 1))
    return c, {"c": c, "cth": ORDINALS[c - 1]}


def _region(rng):
    q = REGIONS[int(rng.integers(len(REGIONS)))]
    return q, {"region": REGION_WORDS[q]}


def _compositional_forms():
    def row_size(scene, rng):
        r, f = _row(scene, rng)
        return And((Row(r), Size("max"))), f

    def col_height(scene, rng):
        c, f = _col(scene, rng)
        return And((Col(c), Height("min"))), f

    def region_distance(scene, rng):
        q, f = _region(rng)
        d, g = _distance("min")(scene, rng)
        return And((Region(q), d)), {**f, **g}

    def row_far(scene, rng):
        r, f = _row(scene, rng)
        d, g = _distance("max")(scene, rng)
        return And((Row(r), d)), {**f, **g}

    def col_size(scene, rng):
        c, f = _col(scene, rng)
        return And((Col(c), Size("min"))), f

    def region_height(scene, rng):
        q, f = _region(rng)
        return And((Region(q), Height("max"))), f

    return [
        (row_size, "In the {rth} row from the bottom, put the {obj} in the largest slot."),
        (col_height, "Among the slots in column {c} from the left, place the {obj} in the lowest one."),
        (region_distance, "Within the {region} part of the tray, put the {obj} in the slot closest to the {ref}."),
        (row_far, "Put the {obj} in the row-{r} slot that is farthest from the {ref}, counting rows from the bottom."),
        (col_size, "Of the slots in the {cth} column from the left, use the smallest one for the {obj}."),
        (region_height, "Place the {obj} in the highest slot within the {region} cells."),
    ]


def _negation_forms():
    def avoid_region(scene, rng):
        q, f = _region(rng)
        return And((Not(Region(q)), Feasible(), Size("min"))), f

    def not_col(scene, rng):
        c, f = _col(scene, rng)
        return And((Not(Col(c)), Size("max"))), f

    def not_row(scene, rng):
        r, f = _row(scene, rng)
        return And((Not(Row(r)), Feasible(), Size("min"))), f

    def not_row_col(scene, rng):
        r, f = _row(scene, rng)
        c, g = _col(scene, rng)
        return And((Not(Col(c)), Not(Row(r)), Size("max"))), {**f, **g}

    def avoid_region_big(scene, rng):
        q, f = _region(rng)
        return And((Not(Region(q)), Size("max"))), f

    return [
        (avoid_region, "Put the {obj} in the smallest slot it fits in, but avoid the {region} cells."),
        (not_col, "Place the {obj} in the largest slot that is not in column {c} from the left."),
        (not_row, "Avoiding row {r} from the bottom, put the {obj} in the snuggest slot it can still fit into."),
        (not_row_col, "Don't use column {c} or row {r}; put the {obj} in the biggest remaining slot."),
        (avoid_region_big, "Keep away from the {region} cells and drop the {obj} into the largest slot."),
    ]


def _vague_forms():
    def back_row(scene, rng):
        return And((Feasible(), Row(scene.tray.rows))), {}

    def region(scene, rng):
        q, f = _region(rng)
        return And((Feasible(), Region(q))), f

    return [
        (_fixed(Feasible()), "Put the {obj} somewhere it fits."),
        (back_row, "Put the {obj} in any slot along the back row that can hold it."),
        (region, "Place the {obj} somewhere around the {region} of the tray, wherever it fits."),
        (_fixed(Feasible()), "Just find a spot in the tray that the {obj} can go into."),
        (_fixed(And((Feasible(), Not(Row(1))))), "Stick the {obj} in a slot that works, preferably not in the front row."),
    ]


def _affordance_forms():
    return [
        (_fixed(Affordance("stable")), "Place the {obj} into the most stable compartment."),
        (_fixed(Affordance("stable")), "Put the {obj} in a slot deep enough to hold it upright."),
        (_fixed(And((Affordance("stable"), Feasible()))), "Stand the {obj} up in a slot where it won't tip over."),
        (_fixed(Affordance("stable")), "The {obj} is tall; choose the slot that will support it best."),
        (_fixed(Affordance("stable")), "Insert the {obj} where it will stay upright without falling."),
    ]


def _knowledge_forms():
    def build(scene, rng):
        counts = {}
        for attrs in scene.knowledge.values():
            for a in attrs:
                counts[a] = counts.get(a, 0) + 1
        keys = sorted(a for a, n in counts.items() if n == 1)
        key = keys[int(rng.integers(len(keys)))]
        return Knowledge(key), {"phrase": knowledge_table()["phrases"].get(key, f"the {key} item")}

    return [
        (build, "Put the {obj} in the slot closest to {phrase}."),
        (build, "Place the {obj} next to {phrase}."),
        (build, "Move the {obj} into the slot nearest {phrase}."),
        (build, "The {obj} belongs beside {phrase}; use the slot right by it."),
        (build, "Find {phrase} on the table and put the {obj} in the slot closest to it."),
    ]


FORMS = {
    "ordinal": _ordinal_forms(),
    "size": _size_forms(),
    "height": _height_forms(),
    "distance": _distance_forms(),
    "compositional": _compositional_forms(),
    "negation": _negation_forms(),
    "vague": _vague_forms(),
    "affordance": _affordance_forms(),
    "knowledge": _knowledge_forms(),
}


def acceptable(scene: Scene, constraint: Constraint, mode: str) -> bool:
    targets = resolve(scene, constraint)
    if not targets:
        return False
    if mode == "unique" and len(targets) != 1:
        return False
    # every answer must physically accept the object
    return targets <= feasible_slots(scene, scene.pick_object)


def generate_instruction(scene: Scene, category: str, variant: int, seed: int) -> Instruction:
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    if scene.category != category:
        raise ValueError(f"scene was generated for {scene.category!r}, not {category!r}")
    forms = FORMS[category]
    build, template = forms[(variant - 1) % len(forms)]
    mode = target_mode(category)
    obj = scene.pick_object.name
    for attempt in range(RETRY_BUDGET):
        rng = rng_for(seed, "instruction", scene.id, category, variant, attempt)
        constraint, fields = build(scene, rng)
        if acceptable(scene, constraint, mode):
            return Instruction(template.format(obj=obj, **fields), constraint, category, mode)
    raise UnsatisfiableOnScene(f"{category} variant {variant} has no valid constraint on {scene.id}")


def load_instruction(text: str, constraint_src: str, category: str) -> Instruction:
    return Instruction(text.strip(), parse_constraint(constraint_src), category, target_mode(category))
