"""Exception types shared across the package.

Each error carries a stable ``code`` string; the wire protocol's ERROR
envelopes and the CLI's exit-code mapping use it verbatim.
"""


class SoundmatError(Exception):
    code = "INTERNAL"


class EmptyInput(SoundmatError):
    code = "EMPTY_INPUT"


class ConfigInvalid(SoundmatError):
    code = "CONFIG_INVALID"


class InsufficientClasses(SoundmatError):
    code = "INSUFFICIENT_CLASSES"


class DimensionMismatch(SoundmatError):
    code = "DIMENSION_MISMATCH"


class NotInTrainingMode(SoundmatError):
    code = "NOT_IN_TRAINING_MODE"


class NoZoneSelected(SoundmatError):
    code = "NO_ZONE_SELECTED"


class NothingToDelete(SoundmatError):
    code = "NOTHING_TO_DELETE"


class AlreadyTraining(SoundmatError):
    code = "ALREADY_TRAINING"


class NotInInferenceMode(SoundmatError):
    code = "NOT_IN_INFERENCE_MODE"


class FrameTooLarge(SoundmatError):
    code = "FRAME_TOO_LARGE"


class MalformedJson(SoundmatError):
    code = "MALFORMED_JSON"


class UnknownType(SoundmatError):
    code = "UNKNOWN_TYPE"


class UnknownZone(SoundmatError):
    code = "UNKNOWN_ZONE"


class UnreadableWav(SoundmatError):
    code = "UNREADABLE_WAV"


class ScriptInvalid(SoundmatError):
    code = "SCRIPT_INVALID"


class ServerUnreachable(SoundmatError):
    code = "SERVER_UNREACHABLE"

    def __init__(self, message: str = "server unreachable", partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class BindFailed(SoundmatError):
    code = "BIND_FAILED"


def _registry() -> dict[str, type]:
    seen: dict[str, type] = {}
    stack = [SoundmatError]
    while stack:
        cls = stack.pop()
        for sub in cls.__subclasses__():
            seen.setdefault(sub.code, sub)
            stack.append(sub)
    return seen


def error_from_code(code: str, message: str) -> SoundmatError:
    """Rebuild the typed exception a wire-level ERROR payload stands for."""
    return _registry().get(code, SoundmatError)(message)
