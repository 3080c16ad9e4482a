"""Exception hierarchy shared across leafnet."""


class LeafnetError(Exception):
    pass


class ShapeError(LeafnetError, ValueError):
    pass


class NonFiniteError(LeafnetError, ValueError):
    pass


class ConfigError(LeafnetError, ValueError):
    pass


class ImageError(LeafnetError):
    pass


class MissingImageError(ImageError, FileNotFoundError):
    pass


class UnsupportedFormatError(ImageError, ValueError):
    pass


class CorruptImageError(ImageError, ValueError):
    pass


class DatasetError(LeafnetError, ValueError):
    pass


class TrainingDivergedError(LeafnetError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None, paths=()):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.paths = list(paths)


class CheckpointError(LeafnetError, ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class SpecMismatchError(CheckpointError):
    pass
