class DlrGridError(Exception):
    @property
    def message(self):
        return super().__str__()

    def __str__(self):
        return self.message


class DisconnectedNetwork(DlrGridError):
    def __init__(self, components):
        self.components = components

    @property
    def message(self):
        return f"The network must be connected, but has {len(self.components)} components"


class SelfLoop(DlrGridError):
    def __init__(self, line_id, bus_id):
        self.line_id = line_id
        self.bus_id = bus_id

    @property
    def message(self):
        return f"Line {self.line_id} starts and ends at bus {self.bus_id}"


class UnknownBus(DlrGridError):
    def __init__(self, line_id, bus_id):
        self.line_id = line_id
        self.bus_id = bus_id

    @property
    def message(self):
        return f"Line {self.line_id} references undeclared bus {self.bus_id}"


class InvalidHopCount(DlrGridError):
    def __init__(self, k):
        self.k = k

    @property
    def message(self):
        return f"Hop count k must be a positive integer, but was {self.k}"


class ShapeMismatch(DlrGridError):
    def __init__(self, operation, left_shape, right_shape):
        self.operation = operation
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)

    @property
    def message(self):
        return f"Shapes {self.left_shape} and {self.right_shape} are incompatible for {self.operation}"


class NonScalarLoss(DlrGridError):
    def __init__(self, shape):
        self.shape = tuple(shape)

    @property
    def message(self):
        return f"backward needs a scalar loss, but the loss node has shape {self.shape}"


class NonFiniteGradient(DlrGridError):
    def __init__(self, param_name, epoch=None, batch=None):
        self.param_name = param_name
        self.epoch = epoch
        self.batch = batch

    @property
    def message(self):
        where = ""
        if self.epoch is not None:
            where = f" (epoch {self.epoch}, batch {self.batch})"
        return f"Non-finite gradient for parameter {self.param_name}{where}"


class MissingData(DlrGridError):
    def __init__(self, kind, key, hour):
        self.kind = kind
        self.key = key
        self.hour = hour

    @property
    def message(self):
        return f"Missing {self.kind} data for {self.key} at hour {self.hour}"


class LevelOutOfRange(DlrGridError):
    def __init__(self, level):
        self.level = level

    @property
    def message(self):
        return f"Quantile level must lie strictly between 0 and 1, but was {self.level}"


class NoCoolingMargin(DlrGridError):
    def __init__(self, net_cooling_w_per_m):
        self.net_cooling_w_per_m = net_cooling_w_per_m

    @property
    def message(self):
        return f"Conductor has no cooling margin (net cooling {self.net_cooling_w_per_m:.3f} W/m)"


class ZeroNormalizer(DlrGridError):
    def __init__(self, line_index):
        self.line_index = line_index

    @property
    def message(self):
        return f"Normalizer of line index {self.line_index} must be positive"


class EmptyCosts(DlrGridError):
    @property
    def message(self):
        return "CVaR needs at least one cost"


class Infeasible(DlrGridError):
    def __init__(self, stage=None, hour=None, detail=""):
        self.stage = stage
        self.hour = hour
        self.detail = detail

    @property
    def message(self):
        where = []
        if self.stage:
            where.append(f"stage {self.stage}")
        if self.hour is not None:
            where.append(f"hour {self.hour}")
        location = f" ({', '.join(where)})" if where else ""
        detail = f": {self.detail}" if self.detail else ""
        return f"Problem is infeasible{location}{detail}"


class IterationLimit(DlrGridError):
    def __init__(self, iterations, primal_residual, dual_residual):
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual

    @property
    def message(self):
        return (f"Solver stopped after {self.iterations} iterations "
                f"(primal residual {self.primal_residual:.2e}, dual residual {self.dual_residual:.2e})")


class MissingArtifact(DlrGridError):
    def __init__(self, path):
        self.path = str(path)

    @property
    def message(self):
        return f"Required artifact {self.path} does not exist"


class CheckpointVersionError(DlrGridError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected

    @property
    def message(self):
        return f"Checkpoint version {self.found} is not supported, expected {self.expected}"


class SchemaAlreadyExist(DlrGridError):
    def __init__(self, schema_name):
        self.schema_name = schema_name

    @property
    def message(self):
        return f"You must not create 2 or more schemas with the same name: {self.schema_name} already exists"
