"""Full-observability forward-search planner over the skill operators.

Breadth-first search over hashed symbolic states, ties broken by global
action index, so plans and extracted subgoals are deterministic.  The
planner sees inside closed receptacles: it validates episodes and serves
as the demonstration expert, never as a deployable partially observed
policy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import logic, world
from .logic import EntityTable, Expr, GroundPredicate
from .world import Scene, SkillAction, WorldState

DEFAULT_NODE_BUDGET = 2_000_000


class PlannerError(Exception):
    pass


@dataclass(frozen=True)
class Operator:
    """STRIPS view of one grounded skill application context."""

    name: str
    action: SkillAction
    preconditions: frozenset[GroundPredicate]
    add_effects: frozenset[GroundPredicate]
    delete_effects: frozenset[GroundPredicate]


@dataclass(frozen=True)
class Plan:
    actions: tuple[SkillAction, ...]

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class Unsolvable:
    reason: str = "no reachable satisfying state"


@dataclass(frozen=True)
class Timeout:
    expanded: int


def state_atoms(scene: Scene, state: WorldState) -> frozenset[GroundPredicate]:
    """Ground-atom view of a world state (the STRIPS state)."""
    atoms: set[GroundPredicate] = set()
    if state.robot_at != world.START:
        atoms.add(GroundPredicate("robot_at", (state.robot_at,)))
    if state.holding is not None:
        atoms.add(GroundPredicate("holding", (state.holding,)))
    for obj, loc in state.location.items():
        if loc != world.GRIPPER:
            atoms.add(GroundPredicate("on_top", (obj, loc)))
    for r, is_open in state.open_state.items():
        atoms.add(GroundPredicate("opened" if is_open else "closed", (r,)))
    return frozenset(atoms)


def action_precondition(
    scene: Scene, state: WorldState, action: SkillAction
) -> frozenset[GroundPredicate]:
    """Ground atoms a valid ``action`` relies on in ``state``."""
    pre: set[GroundPredicate] = set()
    kind, target = action.kind, action.target
    if kind == "pick":
        obj = world._instance_at(scene, state, target, state.robot_at)
        pre.add(GroundPredicate("robot_at", (state.robot_at,)))
        pre.add(GroundPredicate("on_top", (obj, state.robot_at)))
        if state.robot_at in scene.openables:
            pre.add(GroundPredicate("opened", (state.robot_at,)))
    elif kind == "place":
        pre.add(GroundPredicate("robot_at", (target,)))
        pre.add(GroundPredicate("holding", (state.holding,)))
        if target in scene.openables:
            pre.add(GroundPredicate("opened", (target,)))
    elif kind == "open":
        pre.add(GroundPredicate("robot_at", (target,)))
        pre.add(GroundPredicate("closed", (target,)))
    elif kind == "close":
        pre.add(GroundPredicate("robot_at", (target,)))
        pre.add(GroundPredicate("opened", (target,)))
    # navigate and stop need nothing from the symbolic state
    return frozenset(pre)


def ground_operators(scene: Scene, actions: list[SkillAction]) -> list[Operator]:
    """One operator per (skill, parameter, context).

    Contexts enumerate the state facts a skill can consume: the object
    instance and receptacle for picks, the held object for places, the
    previous robot location for navigation.
    """
    ops: list[Operator] = []
    locations = (world.START,) + tuple(scene.receptacles)
    for action in actions:
        kind, target = action.kind, action.target
        if kind == "navigate":
            if target not in scene.receptacles:
                continue
            for src in locations:
                if src == target:
                    continue
                pre = set()
                delete = set()
                if src != world.START:
                    pre.add(GroundPredicate("robot_at", (src,)))
                    delete.add(GroundPredicate("robot_at", (src,)))
                ops.append(
                    Operator(
                        f"navigate[{src}->{target}]",
                        action,
                        frozenset(pre),
                        frozenset({GroundPredicate("robot_at", (target,))}),
                        frozenset(delete),
                    )
                )
        elif kind == "pick":
            for obj in scene.objects:
                if obj.object_class != target:
                    continue
                for r in scene.receptacles:
                    pre = {
                        GroundPredicate("robot_at", (r,)),
                        GroundPredicate("on_top", (obj.instance_id, r)),
                    }
                    if r in scene.openables:
                        pre.add(GroundPredicate("opened", (r,)))
                    ops.append(
                        Operator(
                            f"pick[{obj.instance_id}@{r}]",
                            action,
                            frozenset(pre),
                            frozenset({GroundPredicate("holding", (obj.instance_id,))}),
                            frozenset({GroundPredicate("on_top", (obj.instance_id, r))}),
                        )
                    )
        elif kind == "place":
            if target not in scene.receptacles:
                continue
            for obj in scene.objects:
                pre = {
                    GroundPredicate("robot_at", (target,)),
                    GroundPredicate("holding", (obj.instance_id,)),
                }
                if target in scene.openables:
                    pre.add(GroundPredicate("opened", (target,)))
                ops.append(
                    Operator(
                        f"place[{obj.instance_id}@{target}]",
                        action,
                        frozenset(pre),
                        frozenset({GroundPredicate("on_top", (obj.instance_id, target))}),
                        frozenset({GroundPredicate("holding", (obj.instance_id,))}),
                    )
                )
        elif kind == "open":
            if target in scene.openables:
                ops.append(
                    Operator(
                        f"open[{target}]",
                        action,
                        frozenset(
                            {
                                GroundPredicate("robot_at", (target,)),
                                GroundPredicate("closed", (target,)),
                            }
                        ),
                        frozenset({GroundPredicate("opened", (target,))}),
                        frozenset({GroundPredicate("closed", (target,))}),
                    )
                )
        elif kind == "close":
            if target in scene.openables:
                ops.append(
                    Operator(
                        f"close[{target}]",
                        action,
                        frozenset(
                            {
                                GroundPredicate("robot_at", (target,)),
                                GroundPredicate("opened", (target,)),
                            }
                        ),
                        frozenset({GroundPredicate("closed", (target,))}),
                        frozenset({GroundPredicate("opened", (target,))}),
                    )
                )
    for op in ops:
        assert not (op.add_effects & op.delete_effects)
    return ops


def solve(
    scene: Scene,
    initial: WorldState,
    goal: Expr,
    actions: list[SkillAction],
    entities: Optional[EntityTable] = None,
    types=None,
    max_len: int = world.HORIZON,
    budget: int = DEFAULT_NODE_BUDGET,
):
    """Minimum-length plan via uniform-cost breadth-first search.

    Returns a ``Plan``, ``Unsolvable``, or ``Timeout`` (budget exhaustion is
    distinct from exhaustive failure).
    """
    if goal.free_placeholders():
        raise PlannerError("goal must be grounded before planning")
    if types is None:
        types = world.build_type_table()
    if entities is None:
        entities = scene.entity_table(types)

    def satisfied(state: WorldState) -> bool:
        return logic.evaluate(goal, world.make_valuation(scene, state), entities)

    if satisfied(initial):
        return Plan(())

    step_actions = [a for a in actions if a.kind != "stop"]
    root = initial.copy()
    root.steps_taken = 0
    visited = {root.key()}
    # queue entries: (state, depth, parent_index, action); parents tracked by index
    parents: list[tuple[int, Optional[SkillAction]]] = [(-1, None)]
    queue: deque[tuple[WorldState, int, int]] = deque([(root, 0, 0)])
    expanded = 0
    while queue:
        state, depth, node_idx = queue.popleft()
        if depth >= max_len:
            continue
        expanded += 1
        if expanded > budget:
            return Timeout(expanded=expanded)
        for action in step_actions:
            valid, _ = world.check_valid(scene, state, action)
            if not valid:
                continue
            nxt = state.copy()
            world.apply_action(scene, nxt, action)
            key = nxt.key()
            if key in visited:
                continue
            visited.add(key)
            parents.append((node_idx, action))
            child_idx = len(parents) - 1
            if satisfied(nxt):
                seq: list[SkillAction] = []
                idx = child_idx
                while idx > 0:
                    parent, act = parents[idx]
                    seq.append(act)
                    idx = parent
                return Plan(tuple(reversed(seq)))
            queue.append((nxt, depth + 1, child_idx))
    return Unsolvable()


def extract_subgoals(
    scene: Scene,
    initial: WorldState,
    plan: Plan,
    goal: Expr,
    entities: Optional[EntityTable] = None,
    types=None,
) -> list[GroundPredicate]:
    """Add-effect atoms of plan steps that a later precondition or the goal
    consumes, ordered by first achievement.  Robot location facts are not
    subgoals (navigation is free exploration, not task progress)."""
    if types is None:
        types = world.build_type_table()
    if entities is None:
        entities = scene.entity_table(types)

    # replay, recording (step, add-effects, preconditions)
    state = initial.copy()
    steps: list[tuple[frozenset[GroundPredicate], frozenset[GroundPredicate]]] = []
    for action in plan.actions:
        valid, reason = world.check_valid(scene, state, action)
        if not valid:
            raise PlannerError(f"invalid plan step {action}: {reason}")
        pre = action_precondition(scene, state, action)
        before = state_atoms(scene, state)
        world.apply_action(scene, state, action)
        after = state_atoms(scene, state)
        steps.append((after - before, pre))
    if not logic.evaluate(goal, world.make_valuation(scene, state), entities):
        raise PlannerError("plan does not achieve the goal")

    goal_atoms = _goal_atom_closure(goal, entities)
    subgoals: list[GroundPredicate] = []
    seen: set[GroundPredicate] = set()
    for i, (adds, _pre) in enumerate(steps):
        later_pre: set[GroundPredicate] = set()
        for _, pre in steps[i + 1 :]:
            later_pre |= pre
        for atom in sorted(adds, key=str):
            if atom.predicate_name == "robot_at":
                continue
            if atom in seen:
                continue
            if atom in later_pre or atom in goal_atoms:
                subgoals.append(atom)
                seen.add(atom)
    return subgoals


def _goal_atom_closure(goal: Expr, entities: EntityTable) -> set[GroundPredicate]:
    """All ground atoms occurring in the quantifier expansion of the goal."""
    atoms: set[GroundPredicate] = set()

    def walk(e: Expr, env: dict[str, str]) -> None:
        if isinstance(e, logic.Atom):
            if e.pred.predicate_name == "is_type":
                return
            args = tuple(env.get(a, a) for a in e.pred.args)
            atoms.add(GroundPredicate(e.pred.predicate_name, args))
        elif isinstance(e, (logic.And, logic.Or)):
            for c in e.children:
                walk(c, env)
        elif isinstance(e, logic.Not):
            walk(e.child, env)
        elif isinstance(e, (logic.Exists, logic.ForAll)):
            for ent in entities.of_type(e.var_type):
                walk(e.body, {**env, e.var: ent.name})
        else:
            raise PlannerError(f"unknown node {e!r}")

    walk(goal, {})
    return atoms
