"""Exception types shared across the package."""


class SplatSynthError(Exception):
    """Base class for all package errors."""


class InvalidAssetError(SplatSynthError):
    """A splat or mesh asset is malformed or carries non-finite values."""


class PreconditionError(SplatSynthError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(SplatSynthError):
    """Manifest or configuration is inconsistent."""


class ReconstructionError(SplatSynthError):
    """Surface reconstruction could not produce a mesh."""


class PlacementError(SplatSynthError):
    """Objects could not be spawned without interpenetration."""


class SimulationDivergedError(SplatSynthError):
    """A rigid body state became non-finite."""

    def __init__(self, body: int, step: int):
        super().__init__(f"simulation diverged: body {body} at step {step}")
        self.body = body
        self.step = step


class DatasetWriteError(SplatSynthError):
    """Writing a dataset file failed or a value cannot be encoded."""


class SceneError(SplatSynthError):
    """A scene failed to build or render; carries the scene index."""

    def __init__(self, scene_index: int, message: str):
        super().__init__(f"scene {scene_index}: {message}")
        self.scene_index = scene_index

    def __reduce__(self):
        return (type(self), (self.scene_index, str(self).split(": ", 1)[1]))
