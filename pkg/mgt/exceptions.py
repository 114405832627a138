class MGTException(Exception):
    def __init__(self, message, location=None):
        self.location = location
        location = location if location is not None else '-'
        message = f'{message}! Location: {location}'
        super().__init__(message)


class GraphDocumentException(MGTException):
    pass


class SelfLoopException(GraphDocumentException):
    pass


class DuplicateEdgeException(GraphDocumentException):
    pass


class NodeIndexException(GraphDocumentException):
    pass


class FeatureWidthException(GraphDocumentException):
    pass


class PermutationException(MGTException):
    pass


class NotSymmetricException(MGTException):
    pass


class ConvergenceException(MGTException):
    pass


class ScaleException(MGTException):
    pass


class ShapeMismatchException(MGTException):
    pass


class TensorDimensionException(MGTException):
    pass


class GradientException(MGTException):
    pass


class ConfigException(MGTException):
    pass


class CheckpointException(MGTException):
    pass


class DatasetException(MGTException):
    pass


class NonFiniteLossException(MGTException):
    pass


class MetricException(MGTException):
    pass
