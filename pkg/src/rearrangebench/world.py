"""Kinematic skill-level rearrangement environment.

The world is fully symbolic: receptacles along a wall, pickable objects
sitting on (or inside) them, a robot with a single gripper slot.  Skills
apply instantaneously via their post-conditions.  Invalid skills are
no-ops in standard mode and terminal failures in harder mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import logic
from .logic import Entity, EntityTable, Expr, GroundPredicate, TypeTable

START = "start"      # virtual robot pose before the first navigation
GRIPPER = "gripper"  # pseudo-location for the held object

HORIZON = 32

# Receptacle roster (identifier, display name, openable).
RECEPTACLE_ROSTER: list[tuple[str, str, bool]] = [
    ("cabinet_drawer_7", "cabinet drawer 7", True),
    ("cabinet_drawer_6", "cabinet drawer 6", True),
    ("fridge", "fridge", True),
    ("chair", "chair", False),
    ("black_table", "black table", False),
    ("brown_table", "brown table", False),
    ("tv_stand", "TV stand", False),
    ("sink", "sink", False),
    ("right_counter", "right counter", False),
    ("left_counter", "left counter", False),
]
RECEPTACLE_NAMES = [r[0] for r in RECEPTACLE_ROSTER]
RECEPTACLE_DISPLAY = {r[0]: r[1] for r in RECEPTACLE_ROSTER}
OPENABLE_NAMES = [r[0] for r in RECEPTACLE_ROSTER if r[2]]

# Pickable object classes used by the training instructions.
TRAIN_CLASSES = [
    "ball", "clamp", "hammer", "screwdriver", "padlock", "scissors", "block",
    "drill", "spatula", "knife", "spoon", "plate", "sponge", "cleanser",
    "plum", "pear", "peach", "apple", "lemon", "can", "box", "banana",
    "strawberry", "lego", "rubiks_cube", "book", "bowl", "cup", "fork",
]
# Held out for the novel-objects evaluation split.
HELDOUT_CLASSES = ["mug", "orange", "lid", "toy_airplane", "wrench"]
ALL_CLASSES = TRAIN_CLASSES + HELDOUT_CLASSES

CLASS_DISPLAY = {c: c.replace("_", " ") for c in ALL_CLASSES}

# Category layer of the type hierarchy (class -> category).
CLASS_CATEGORY = {
    "plum": "fruit", "pear": "fruit", "peach": "fruit", "apple": "fruit",
    "lemon": "fruit", "banana": "fruit", "strawberry": "fruit", "orange": "fruit",
    "plate": "dish", "bowl": "dish", "cup": "dish", "mug": "dish",
    "spoon": "utensil", "fork": "utensil", "knife": "utensil", "spatula": "utensil",
    "hammer": "tool", "screwdriver": "tool", "drill": "tool", "wrench": "tool",
    "clamp": "tool",
}


class WorldError(Exception):
    """Raised on malformed scenes or environment misuse."""


def build_type_table(classes: Optional[list[str]] = None) -> TypeTable:
    types = TypeTable()
    types.register("entity")
    types.register("pickable_object", "entity")
    types.register("receptacle", "entity")
    for cat in sorted(set(CLASS_CATEGORY.values())):
        types.register(cat, "pickable_object")
    for cls in (classes if classes is not None else ALL_CLASSES):
        types.register(cls, CLASS_CATEGORY.get(cls, "pickable_object"))
    return types


@dataclass(frozen=True)
class SceneObject:
    instance_id: str
    object_class: str
    start_receptacle: str


@dataclass(frozen=True)
class Scene:
    """House layout plus the object placements for one episode."""

    scene_id: int
    split: str
    receptacles: tuple[str, ...]          # subset of the roster, spatial order left->right
    openables: tuple[str, ...]
    objects: tuple[SceneObject, ...]

    def __post_init__(self) -> None:
        if len(set(self.receptacles)) != len(self.receptacles):
            raise WorldError("duplicate receptacle names in scene")
        if not set(self.openables) <= set(self.receptacles):
            raise WorldError("openable set must be a subset of the scene receptacles")
        for obj in self.objects:
            if obj.start_receptacle not in self.receptacles:
                raise WorldError(
                    f"object {obj.instance_id} starts at unknown receptacle "
                    f"{obj.start_receptacle!r}"
                )

    def spatial_index(self, receptacle: str) -> int:
        return self.receptacles.index(receptacle)

    def entity_table(self, types: TypeTable) -> EntityTable:
        table = EntityTable(types)
        for r in self.receptacles:
            table.add(Entity(r, "receptacle"))
        for obj in self.objects:
            table.add(Entity(obj.instance_id, obj.object_class))
        return table


@dataclass
class WorldState:
    robot_at: str                      # receptacle name or START
    holding: Optional[str]             # object instance id or None
    location: dict[str, str]           # object id -> receptacle name or GRIPPER
    open_state: dict[str, bool]        # openable receptacle -> is open
    steps_taken: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            self.robot_at, self.holding, dict(self.location), dict(self.open_state),
            self.steps_taken,
        )

    def key(self) -> tuple:
        """Hashable snapshot ignoring the step counter (used by the planner)."""
        return (
            self.robot_at,
            self.holding,
            tuple(sorted(self.location.items())),
            tuple(sorted(self.open_state.items())),
        )


@dataclass(frozen=True)
class SkillAction:
    kind: str                  # navigate | pick | place | open | close | stop
    target: Optional[str]      # receptacle name, object class, or None for stop
    index: int

    def __str__(self) -> str:
        return self.kind if self.target is None else f"{self.kind}({self.target})"


def build_action_space(
    classes: list[str],
    receptacles: list[str],
    openables: list[str],
    harder: bool = False,
) -> list[SkillAction]:
    """Fixed global action list: picks per class, then places, navigates,
    opens, closes per receptacle, then stop in harder mode."""
    if not classes or not receptacles:
        raise WorldError("action space needs at least one class and one receptacle")
    if not set(openables) <= set(receptacles):
        raise WorldError("openables must be receptacles")
    actions: list[SkillAction] = []
    for cls in classes:
        actions.append(SkillAction("pick", cls, len(actions)))
    for r in receptacles:
        actions.append(SkillAction("place", r, len(actions)))
    for r in receptacles:
        actions.append(SkillAction("navigate", r, len(actions)))
    for r in openables:
        actions.append(SkillAction("open", r, len(actions)))
    for r in openables:
        actions.append(SkillAction("close", r, len(actions)))
    if harder:
        actions.append(SkillAction("stop", None, len(actions)))
    return actions


@dataclass(frozen=True)
class Observation:
    tokens: tuple[int, ...]
    instruction: str
    holding: bool
    held_class: Optional[str]
    robot_at: str
    local_view: tuple[str, ...]            # sorted classes visible at robot_at
    local_open_state: Optional[bool]       # None unless at an openable
    step: int


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    success: bool
    invalid_action: bool
    subgoals_hit: frozenset[str]


REWARD_SUCCESS = 10.0
REWARD_SUBGOAL = 5.0
REWARD_INVALID = -0.1
REWARD_SLACK = -0.01


def compute_reward(success: bool, subgoal: bool, invalid: bool) -> float:
    """Sparse task reward: success and first-time-subgoal bonuses, invalid
    penalty, constant slack penalty on every step."""
    if invalid and (success or subgoal):
        raise WorldError("invalid action cannot coincide with success or subgoal")
    return (
        REWARD_SUCCESS * success
        + REWARD_SUBGOAL * subgoal
        + REWARD_INVALID * invalid
        + REWARD_SLACK
    )


def check_valid(
    scene: Scene, state: WorldState, action: SkillAction
) -> tuple[bool, str]:
    """Total validity predicate; mirrors the planner's operator preconditions."""
    kind, target = action.kind, action.target
    if kind == "navigate":
        if target not in scene.receptacles:
            return False, "receptacle_not_in_scene"
        return True, "ok"
    if kind == "pick":
        if state.holding is not None:
            return False, "already_holding"
        if state.robot_at == START:
            return False, "not_at_receptacle"
        if state.robot_at in scene.openables and not state.open_state[state.robot_at]:
            return False, "receptacle_closed"
        if _instance_at(scene, state, target, state.robot_at) is None:
            return False, "object_not_here"
        return True, "ok"
    if kind == "place":
        if state.holding is None:
            return False, "not_holding"
        if target not in scene.receptacles:
            return False, "receptacle_not_in_scene"
        if state.robot_at != target:
            return False, "not_at_receptacle"
        if target in scene.openables and not state.open_state[target]:
            return False, "receptacle_closed"
        return True, "ok"
    if kind in ("open", "close"):
        if target not in scene.receptacles or target not in scene.openables:
            return False, "not_openable"
        if state.robot_at != target:
            return False, "not_at_receptacle"
        if kind == "open" and state.open_state[target]:
            return False, "already_open"
        if kind == "close" and not state.open_state[target]:
            return False, "already_closed"
        return True, "ok"
    if kind == "stop":
        return True, "ok"
    return False, "unknown_skill"


def _instance_at(
    scene: Scene, state: WorldState, object_class: Optional[str], receptacle: str
) -> Optional[str]:
    """Lowest-id instance of ``object_class`` sitting at ``receptacle``."""
    best = None
    for obj in scene.objects:
        if obj.object_class == object_class and state.location[obj.instance_id] == receptacle:
            if best is None or obj.instance_id < best:
                best = obj.instance_id
    return best


def apply_action(scene: Scene, state: WorldState, action: SkillAction) -> None:
    """Apply a *valid* action's post-condition in place (step counter untouched)."""
    kind, target = action.kind, action.target
    if kind == "navigate":
        state.robot_at = target
    elif kind == "pick":
        obj = _instance_at(scene, state, target, state.robot_at)
        state.location[obj] = GRIPPER
        state.holding = obj
    elif kind == "place":
        state.location[state.holding] = target
        state.holding = None
    elif kind == "open":
        state.open_state[target] = True
    elif kind == "close":
        state.open_state[target] = False
    elif kind == "stop":
        pass
    else:
        raise WorldError(f"unknown skill kind {kind!r}")


def make_valuation(scene: Scene, state: WorldState):
    """Bridge the world state to predicate evaluation.

    ``in`` coincides with ``on_top`` (placing at an open openable puts the
    object inside).  ``closed`` is true only for openables that are shut.
    """
    openables = set(scene.openables)

    def valuation(pred: GroundPredicate) -> bool:
        name, args = pred.predicate_name, pred.args
        if name in ("on_top", "in"):
            return state.location.get(args[0]) == args[1]
        if name == "holding":
            return state.holding == args[0]
        if name == "robot_at":
            return state.robot_at == args[0]
        if name == "opened":
            return args[0] in openables and state.open_state[args[0]]
        if name == "closed":
            return args[0] in openables and not state.open_state[args[0]]
        raise logic.LogicError(f"unresolvable predicate: {pred}")

    return valuation


def initial_state(scene: Scene, initial_open: Optional[dict[str, bool]] = None) -> WorldState:
    open_state = {r: False for r in scene.openables}
    if initial_open:
        for r, is_open in initial_open.items():
            if r not in open_state:
                raise WorldError(f"initial_open references non-openable {r!r}")
            open_state[r] = is_open
    return WorldState(
        robot_at=START,
        holding=None,
        location={o.instance_id: o.start_receptacle for o in scene.objects},
        open_state=open_state,
        steps_taken=0,
    )


class Environment:
    """Skill-level environment for one episode record.

    Partially observable: objects inside closed receptacles never appear in
    ``local_view``.  The success test evaluates the episode's grounded goal
    expression against the live state.
    """

    def __init__(
        self,
        actions: list[SkillAction],
        types: Optional[TypeTable] = None,
        mode: str = "standard",
        horizon: int = HORIZON,
    ) -> None:
        if mode not in ("standard", "harder"):
            raise WorldError(f"unknown mode {mode!r}")
        if mode == "harder" and not any(a.kind == "stop" for a in actions):
            raise WorldError("harder mode needs a stop action in the action space")
        self.actions = actions
        self.types = types if types is not None else build_type_table()
        self.mode = mode
        self.horizon = horizon
        self._episode = None
        self._done = True

    @property
    def action_count(self) -> int:
        return len(self.actions)

    def reset(self, episode) -> Observation:
        """Start an episode (an ``EpisodeRecord``-shaped object with scene,
        grounded goal, subgoals, initial_open, and instruction tokens)."""
        scene: Scene = episode.scene
        for sub in episode.subgoals:
            for arg in sub.args:
                if arg not in scene.receptacles and all(
                    o.instance_id != arg for o in scene.objects
                ):
                    raise WorldError(f"subgoal references unknown entity {arg!r}")
        self._episode = episode
        self.scene = scene
        self.state = initial_state(scene, episode.initial_open)
        self.entities = scene.entity_table(self.types)
        self.goal: Expr = episode.goal
        self.subgoals: list[GroundPredicate] = list(episode.subgoals)
        self._subgoals_hit: set[str] = set()
        self._done = False
        self._success = False
        return self.observation()

    def observation(self) -> Observation:
        st = self.state
        at = st.robot_at
        if at == START:
            view: tuple[str, ...] = ()
            open_flag = None
        else:
            visible = at not in self.scene.openables or st.open_state[at]
            if visible:
                view = tuple(
                    sorted(
                        o.object_class
                        for o in self.scene.objects
                        if st.location[o.instance_id] == at
                    )
                )
            else:
                view = ()
            open_flag = st.open_state[at] if at in self.scene.openables else None
        held_class = None
        if st.holding is not None:
            held_class = next(
                o.object_class for o in self.scene.objects if o.instance_id == st.holding
            )
        return Observation(
            tokens=tuple(self._episode.tokens),
            instruction=self._episode.instruction,
            holding=st.holding is not None,
            held_class=held_class,
            robot_at=at,
            local_view=view,
            local_open_state=open_flag,
            step=st.steps_taken,
        )

    def goal_satisfied(self) -> bool:
        return logic.evaluate(self.goal, make_valuation(self.scene, self.state), self.entities)

    def check_valid(self, action: SkillAction) -> tuple[bool, str]:
        return check_valid(self.scene, self.state, action)

    def step(self, action: SkillAction) -> StepResult:
        if self._done:
            raise WorldError("step() called on a finished episode; reset first")
        valid, _reason = self.check_valid(action)
        is_stop = action.kind == "stop"
        if valid and not is_stop:
            apply_action(self.scene, self.state, action)
        self.state.steps_taken += 1

        valuation = make_valuation(self.scene, self.state)
        newly_hit: set[str] = set()
        if valid:
            for sub in self.subgoals:
                key = str(sub)
                if key not in self._subgoals_hit and valuation(sub):
                    newly_hit.add(key)
                    self._subgoals_hit.add(key)

        goal_now = self.goal_satisfied()
        if self.mode == "harder":
            if not valid:
                success = False
                done = True
            elif is_stop:
                success = goal_now
                done = True
            else:
                success = False
                done = self.state.steps_taken >= self.horizon
            if goal_now and valid and not is_stop:
                # goal satisfaction counts as a subgoal; success needs stop
                key = "__goal__"
                if key not in self._subgoals_hit:
                    newly_hit.add(key)
                    self._subgoals_hit.add(key)
        else:
            success = goal_now and valid
            done = success or self.state.steps_taken >= self.horizon
            if success:
                key = "__goal__"
                if key not in self._subgoals_hit:
                    newly_hit.add(key)
                    self._subgoals_hit.add(key)

        reward = compute_reward(success, bool(newly_hit), not valid)
        self._done = done
        self._success = success
        return StepResult(
            observation=self.observation(),
            reward=reward,
            done=done,
            success=success,
            invalid_action=not valid,
            subgoals_hit=frozenset(newly_hit),
        )

    @property
    def done(self) -> bool:
        return self._done

    @property
    def success(self) -> bool:
        return self._success
