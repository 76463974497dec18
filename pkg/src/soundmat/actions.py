"""The six device actions, doubling as the classifier's label set.

The integer ids and their order are a fixed contract: zone layout,
vote counting, tie-breaking, and the wire protocol all rely on it.
"""

from __future__ import annotations

from enum import IntEnum


class Action(IntEnum):
    SHAKE = 0
    GO_FORWARD = 1
    LIGHT_UP = 2
    TURN_LEFT = 3
    GO_BACKWARD = 4
    TURN_RIGHT = 5

    @property
    def canonical_name(self) -> str:
        return self.name.lower()


N_ACTIONS = len(Action)

ACTION_NAMES = tuple(a.canonical_name for a in Action)

_BY_NAME = {a.canonical_name: a for a in Action}

# Screen glyph shown on the device / UI for each action.
ACTION_EMOTICONS = {
    Action.SHAKE: "🫨",
    Action.GO_FORWARD: "⬆️",
    Action.LIGHT_UP: "💡",
    Action.TURN_LEFT: "⬅️",
    Action.GO_BACKWARD: "⬇️",
    Action.TURN_RIGHT: "➡️",
}


def action_from_name(name: str) -> Action:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown action name: {name!r}") from None


def action_from_id(action_id: int) -> Action:
    try:
        return Action(action_id)
    except ValueError:
        raise ValueError(f"unknown action id: {action_id!r}") from None
