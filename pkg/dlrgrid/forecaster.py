"""
Line-graph convolutional LSTM that forecasts next-day quantiles of every line's rating.

Every line-graph node (a transmission line) sees the features of both of its end
buses and its own edge features. The recurrent cell mixes inputs over the k-hop
line-graph adjacency; the hidden-state path stays dense. A forward and a backward
pass over the history window are concatenated and mapped by one affine head per
quantile level to 24 hourly values.

Mini-batches are stacked sample-major: row ``b * |E| + i`` is line ``i`` of
sample ``b``, and the adjacency becomes ``kron(I_B, A_hat)``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse

from dlrgrid import autodiff as ad
from dlrgrid import constants
from dlrgrid.exceptions import LevelOutOfRange, MissingData, NonFiniteGradient, ShapeMismatch
from dlrgrid.netgraph import BusNetwork, LineGraphAdjacency, identity_adjacency, khop_adjacency, line_graph
from dlrgrid.schema import ValidationError
from dlrgrid.thermal import RatingSeries, WeatherSeries

logger = logging.getLogger(__name__)

HORIZON_HOURS = 24
DIRECTIONS = ('fwd', 'bwd')
RATING_COLUMN = 2 * len(constants.weather_feature_names)
FEATURE_SIZE = 2 * len(constants.weather_feature_names) + len(constants.line_feature_names)


def season_index(month):
    """0 winter (Dec-Feb), 1 spring, 2 summer, 3 autumn."""
    return (np.asarray(month) % 12) // 3


def bus_features(network: BusNetwork, weather: WeatherSeries):
    """Per-bus weather features shaped (hours, buses, 6)."""
    columns = [weather.bus_ids.index(bus_id) for bus_id in network.bus_ids]
    direction = np.radians(weather.wind_direction_deg[:, columns])
    coords = network.coordinates()
    hours = weather.hours
    return np.stack([
        weather.temperature_c[:, columns],
        weather.wind_speed_mps[:, columns],
        np.sin(direction),
        np.cos(direction),
        np.broadcast_to(coords[:, 0], (hours, len(columns))),
        np.broadcast_to(coords[:, 1], (hours, len(columns))),
    ], axis=-1)


def hourly_features(network: BusNetwork, weather: WeatherSeries, ratings: RatingSeries):
    """Unscaled per-line features ``[f_V(a) | f_V(b) | f_E]`` shaped (hours, lines, 18).

    Endpoint ``a`` is the lower bus id, so the row of a line does not depend on
    how its endpoints were listed.
    """
    if len(weather.timestamps) != len(ratings.timestamps) or (weather.timestamps != ratings.timestamps).any():
        raise ValidationError('Invalid inputs. Weather and rating series must share timestamps')
    nodes = bus_features(network, weather)
    rating_columns = [ratings.line_ids.index(line_id) for line_id in network.line_ids]
    season = np.eye(4)[season_index(weather.timestamps.month.to_numpy())]
    hours = weather.hours
    rows = []
    for j, line in enumerate(network.lines):
        a, b = (network.bus_index(bus_id) for bus_id in line.endpoints)
        edge = np.column_stack([
            ratings.rating_mw[:, rating_columns[j]],
            np.full(hours, line.length_km),
            season,
        ])
        rows.append(np.concatenate([nodes[:, a], nodes[:, b], edge], axis=1))
    return np.stack(rows, axis=1)


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features):
        flat = features.reshape(-1, features.shape[-1])
        std = flat.std(axis=0)
        return cls(flat.mean(axis=0), np.where(std > 1e-9, std, 1.0))

    @classmethod
    def identity(cls, size=FEATURE_SIZE):
        return cls(np.zeros(size), np.ones(size))

    def transform(self, features):
        return (features - self.mean) / self.std

    @property
    def target_mean(self):
        return float(self.mean[RATING_COLUMN])

    @property
    def target_std(self):
        return float(self.std[RATING_COLUMN])

    def scale_target(self, values):
        return (np.asarray(values) - self.target_mean) / self.target_std

    def unscale_target(self, values):
        return np.asarray(values) * self.target_std + self.target_mean


@dataclass(frozen=True)
class FeatureWindow:
    line_ids: tuple
    start: pd.Timestamp
    steps: np.ndarray

    @property
    def length(self):
        return self.steps.shape[0]


def _window_start(timestamps, date, window_hours, kind, key):
    date = pd.Timestamp(date)
    first = date - pd.Timedelta(hours=window_hours)
    if first < timestamps[0] or date - pd.Timedelta(hours=1) > timestamps[-1]:
        missing = first if first < timestamps[0] else date - pd.Timedelta(hours=1)
        raise MissingData(kind, key, str(missing))
    return int(timestamps.get_loc(first))


def assemble_features(network, weather, dlr, date, scaler: FeatureScaler = None, window_hours=168):
    """Scaled feature window for the ``window_hours`` hours before ``date``."""
    missing_buses = [bus_id for bus_id in network.bus_ids if bus_id not in weather.bus_ids]
    if missing_buses:
        raise MissingData('weather', f'bus {missing_buses[0]}', str(pd.Timestamp(date)))
    missing_lines = [line_id for line_id in network.line_ids if line_id not in dlr.line_ids]
    if missing_lines:
        raise MissingData('rating', f'line {missing_lines[0]}', str(pd.Timestamp(date)))
    start = _window_start(weather.timestamps, date, window_hours, 'weather', 'all buses')
    _window_start(dlr.timestamps, date, window_hours, 'rating', 'all lines')
    features = hourly_features(network, weather, dlr)[start:start + window_hours]
    scaler = scaler or FeatureScaler.identity()
    return FeatureWindow(tuple(network.line_ids), weather.timestamps[start], scaler.transform(features))


def _param(name, shape, rng, scale):
    return ad.Param(name, rng.uniform(-scale, scale, size=shape))


def init_params(input_size, hidden_size, levels, line_count=1, per_line_heads=False, seed=0):
    """Uniform(-1/sqrt(d_h), 1/sqrt(d_h)) initialisation for both directions and all heads."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden_size)
    params = {}
    for direction in DIRECTIONS:
        for gate in constants.gate_names:
            for name, shape in ((f'{direction}.W_{gate}', (input_size, hidden_size)),
                                (f'{direction}.U_{gate}', (hidden_size, hidden_size)),
                                (f'{direction}.b_{gate}', (1, hidden_size))):
                params[name] = _param(name, shape, rng, scale)
    head_scale = 1.0 / np.sqrt(2 * hidden_size)
    for q in range(len(levels)):
        for suffix in ([''] if not per_line_heads else [f'.line{i}' for i in range(line_count)]):
            params[f'head{q}{suffix}.W'] = _param(f'head{q}{suffix}.W', (2 * hidden_size, HORIZON_HOURS),
                                                  rng, head_scale)
            params[f'head{q}{suffix}.b'] = _param(f'head{q}{suffix}.b', (1, HORIZON_HOURS), rng, head_scale)
    return params


def count_parameters(params):
    params = params.values() if isinstance(params, dict) else params
    return int(np.sum([p.size for p in params if p.trainable]))


def _gate(ax, h_prev, w, u, b):
    return ad.row_broadcast_add(ad.add(ad.matmul(ax, w), ad.matmul(h_prev, u)), b)


def lgclstm_cell(x, h_prev, c_prev, adjacency, params_dir):
    """One recurrent step.

    ``params_dir`` maps ``W_<gate>``, ``U_<gate>``, ``b_<gate>`` to tape nodes. Only the
    input path is convolved with ``adjacency``.
    """
    tape = h_prev.tape
    ax = ad.sparse_dense_matmul(sparse.csr_matrix(adjacency), tape.lift(x))
    gates = {gate: _gate(ax, h_prev, params_dir[f'W_{gate}'], params_dir[f'U_{gate}'], params_dir[f'b_{gate}'])
             for gate in constants.gate_names}
    f = ad.sigmoid(gates['f'])
    i = ad.sigmoid(gates['i'])
    o = ad.sigmoid(gates['o'])
    g = ad.tanh(gates['g'])
    c = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, g))
    h = ad.hadamard(o, ad.tanh(c))
    return h, c


def _direction_nodes(tape, params, direction):
    prefix = f'{direction}.'
    return {name[len(prefix):]: tape.param(p) for name, p in params.items() if name.startswith(prefix)}


def encode_bidirectional(tape, steps, adjacency, params):
    """Concatenated final hidden states of both directions, shape (rows, 2 d_h).

    ``steps`` is a sequence of (rows, d_in) arrays; the backward direction consumes
    it in reverse.
    """
    if len(steps) < 1:
        raise ValidationError('Invalid feature window. At least one step is required')
    rows = np.shape(steps[0])[0]
    finals = []
    for direction in DIRECTIONS:
        nodes = _direction_nodes(tape, params, direction)
        hidden_size = nodes['U_f'].shape[0]
        h = tape.constant(np.zeros((rows, hidden_size)))
        c = tape.constant(np.zeros((rows, hidden_size)))
        ordered = steps if direction == 'fwd' else steps[::-1]
        for x in ordered:
            h, c = lgclstm_cell(x, h, c, adjacency, nodes)
        finals.append(h)
    return ad.concat_columns(*finals)


def _check_levels(levels):
    levels = np.asarray(levels, dtype=np.float64)
    for level in levels.reshape(-1):
        if not 0.0 < level < 1.0:
            raise LevelOutOfRange(float(level))
    return levels


@dataclass(frozen=True)
class QuantileForecast:
    line_ids: tuple
    levels: tuple
    values: np.ndarray
    start: pd.Timestamp = None

    def level_index(self, level):
        matches = [i for i, q in enumerate(self.levels) if abs(q - level) < 1e-12]
        if not matches:
            raise LevelOutOfRange(level)
        return matches[0]

    def at(self, level):
        """(lines, 24) forecast at one quantile level."""
        return self.values[:, :, self.level_index(level)]

    def median(self):
        return self.at(0.5) if any(abs(q - 0.5) < 1e-12 for q in self.levels) else np.median(self.values, axis=-1)

    def to_frame(self):
        lines, hours, levels = self.values.shape
        line_ids = np.asarray(self.line_ids)
        frame = pd.DataFrame({
            'line_id': np.repeat(line_ids, hours * levels),
            'hour': np.tile(np.repeat(np.arange(1, hours + 1), levels), lines),
            'quantile_level': np.tile(np.asarray(self.levels), lines * hours),
            'value_mw': self.values.reshape(-1),
        }, columns=constants.forecast_csv_columns)
        if self.start is not None:
            frame.insert(0, 'date', self.start.strftime('%Y-%m-%d'))
        return frame


def repair_quantiles(values):
    """Clamp at zero and sort along the last (quantile) axis."""
    return np.sort(np.maximum(values, 0.0), axis=-1)


def predict_quantiles(tape, hidden, params, levels, line_count, per_line_heads=False):
    """Raw head outputs as one tape node plus a decoder to (batch, lines, 24, |Q|) arrays.

    Shared heads produce a (batch * lines, |Q| * 24) node; per-line heads produce a
    (batch, |Q| * lines * 24) node.
    """
    blocks = []
    for q in range(len(levels)):
        if not per_line_heads:
            w, b = tape.param(params[f'head{q}.W']), tape.param(params[f'head{q}.b'])
            blocks.append(ad.row_broadcast_add(ad.matmul(hidden, w), b))
            continue
        rows = hidden.shape[0]
        for i in range(line_count):
            w = tape.param(params[f'head{q}.line{i}.W'])
            b = tape.param(params[f'head{q}.line{i}.b'])
            selected = ad.slice_rows(hidden, np.arange(i, rows, line_count))
            blocks.append(ad.row_broadcast_add(ad.matmul(selected, w), b))
    raw = ad.concat_columns(*blocks)
    count = len(levels)

    def decode(values):
        if not per_line_heads:
            return values.reshape(-1, line_count, count, HORIZON_HOURS).transpose(0, 1, 3, 2)
        return values.reshape(-1, count, line_count, HORIZON_HOURS).transpose(0, 2, 3, 1)

    def arrange(targets):
        targets = np.asarray(targets)
        if not per_line_heads:
            return np.tile(targets.reshape(-1, HORIZON_HOURS), (1, count))
        return np.tile(targets.reshape(targets.shape[0], -1), (1, count))

    repeat = HORIZON_HOURS if not per_line_heads else HORIZON_HOURS * line_count
    level_row = np.repeat(np.asarray(levels, dtype=np.float64), repeat).reshape(1, -1)
    return raw, decode, arrange, level_row


def pinball_elements(forecast, target, levels):
    """Elementwise pinball loss of a (..., |Q|) forecast against (...) targets."""
    levels = _check_levels(levels)
    forecast = np.asarray(forecast, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if forecast.shape[-1] != levels.size or forecast.shape[:-1] != target.shape:
        raise ShapeMismatch('pinball_loss', forecast.shape, target.shape + (levels.size,))
    diff = target[..., None] - forecast
    return np.where(forecast <= target[..., None], levels * diff, (levels - 1.0) * diff)


def pinball_loss(forecast, target, levels):
    """Mean pinball loss over (lines, hours, levels)."""
    return float(np.mean(pinball_elements(forecast, target, levels)))


def pinball_loss_node(pred, target, levels):
    _check_levels(levels)
    return ad.mean(ad.pinball_elem(pred, target, levels))


@dataclass
class Episode:
    window: FeatureWindow
    target: np.ndarray
    date: pd.Timestamp


@dataclass
class EpisodeDataset:
    train: list
    test: list
    validation: list = field(default_factory=list)
    boundary: pd.Timestamp = None


def forecast_days(timestamps, window_hours):
    """Midnights with a full history window before them and a full day after."""
    first = timestamps[0] + pd.Timedelta(hours=window_hours)
    first = first.normalize() if first == first.normalize() else first.normalize() + pd.Timedelta(days=1)
    last = timestamps[-1] - pd.Timedelta(hours=HORIZON_HOURS - 1)
    return pd.date_range(first, last.normalize(), freq='D') if last >= first else pd.DatetimeIndex([])


def split_days(days, split_ratio=(4, 1), window_hours=168):
    """Chronological (train days, test days, boundary).

    Test days are only those whose history window starts at or after the boundary.
    """
    if len(days) < 2:
        raise ValidationError('Invalid dataset. At least two forecast days are required')
    train_share = split_ratio[0] / float(sum(split_ratio))
    cut = min(max(1, int(round(len(days) * train_share))), len(days) - 1)
    boundary = days[cut]
    test = [day for day in days[cut:] if day - pd.Timedelta(hours=window_hours) >= boundary]
    if not test:
        raise ValidationError('Invalid dataset. No test day has a full history after the split boundary')
    return list(days[:cut]), test, boundary


def build_dataset(network, weather, dlr, split_ratio=(4, 1), window_hours=168, validation_ratio=None):
    """Chronological train/test episodes with the feature scaler fitted on training hours.

    Each episode forecasts one calendar day from the preceding ``window_hours``. Training
    targets end by the split boundary and test windows start at or after it, so no
    episode straddles the boundary.
    """
    train_days, test_days, boundary = split_days(forecast_days(weather.timestamps, window_hours), split_ratio,
                                                 window_hours)

    raw = hourly_features(network, weather, dlr)
    train_hours = weather.timestamps < boundary
    scaler = FeatureScaler.fit(raw[train_hours])
    scaled = scaler.transform(raw)
    rating_columns = [dlr.line_ids.index(line_id) for line_id in network.line_ids]

    def episode(day):
        start = int(weather.timestamps.get_loc(day - pd.Timedelta(hours=window_hours)))
        end = start + window_hours
        window = FeatureWindow(tuple(network.line_ids), weather.timestamps[start], scaled[start:end])
        target = dlr.rating_mw[end:end + HORIZON_HOURS][:, rating_columns].T
        return Episode(window, target, day)

    train = [episode(day) for day in train_days]
    test = [episode(day) for day in test_days]
    validation = []
    if validation_ratio is not None and len(train) >= 2:
        share = validation_ratio[0] / float(sum(validation_ratio))
        fit_count = min(max(1, int(round(len(train) * share))), len(train) - 1)
        train, validation = train[:fit_count], train[fit_count:]
    logger.info("Dataset with %d train, %d validation and %d test days (boundary %s)",
                len(train), len(validation), len(test), boundary.date())
    return EpisodeDataset(train, test, validation, boundary), scaler


@dataclass
class TrainConfig:
    hops: int = 5
    hidden_size: int = 128
    levels: tuple = tuple(constants.default_quantile_levels)
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    per_line_heads: bool = False
    identity_adjacency: bool = False
    seed: int = 0


@dataclass
class ForecastModel:
    params: dict
    adjacency: LineGraphAdjacency
    scaler: FeatureScaler
    line_ids: tuple
    levels: tuple
    hidden_size: int
    per_line_heads: bool = False
    window_hours: int = 168

    @property
    def line_count(self):
        return len(self.line_ids)

    @property
    def identity_adjacency(self):
        return self.adjacency.k == 0

    def param_list(self):
        return list(self.params.values())

    def forward(self, tape, windows):
        """Raw head node, decoder and target arranger for a batch of feature windows."""
        batch = len(windows)
        steps = [np.concatenate([w.steps[t] for w in windows], axis=0) for t in range(windows[0].length)]
        adjacency = sparse.kron(sparse.identity(batch, format='csr'), self.adjacency.matrix, format='csr')
        hidden = encode_bidirectional(tape, steps, adjacency, self.params)
        return predict_quantiles(tape, hidden, self.params, self.levels, self.line_count, self.per_line_heads)

    def batch_loss(self, tape, episodes):
        raw, _, arrange, level_row = self.forward(tape, [e.window for e in episodes])
        targets = self.scaler.scale_target(np.stack([e.target for e in episodes]))
        return pinball_loss_node(raw, tape.constant(arrange(targets)), level_row)

    def predict(self, windows):
        tape = ad.Tape()
        raw, decode, _, _ = self.forward(tape, windows)
        return repair_quantiles(self.scaler.unscale_target(decode(raw.value)))

    def forecast(self, window: FeatureWindow, date=None):
        values = self.predict([window])[0]
        return QuantileForecast(self.line_ids, tuple(self.levels), values,
                                None if date is None else pd.Timestamp(date))

    def evaluate_loss(self, episodes, batch_size=64):
        """Mean pinball loss in scaled units over ``episodes``."""
        total, count = 0.0, 0
        for start in range(0, len(episodes), batch_size):
            chunk = episodes[start:start + batch_size]
            total += float(self.batch_loss(ad.Tape(), chunk).value) * len(chunk)
            count += len(chunk)
        return total / count


def build_model(network, scaler, config: TrainConfig, window_hours=168):
    if config.identity_adjacency:
        adjacency = identity_adjacency(len(network.lines))
    else:
        adjacency = khop_adjacency(line_graph(network), config.hops)
    params = init_params(FEATURE_SIZE, config.hidden_size, config.levels, len(network.lines),
                         config.per_line_heads, config.seed)
    return ForecastModel(params, adjacency, scaler, tuple(network.line_ids), tuple(config.levels),
                         config.hidden_size, config.per_line_heads, window_hours)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)

    def to_frame(self):
        frame = pd.DataFrame({'epoch': np.arange(1, len(self.train_loss) + 1), 'train_loss': self.train_loss})
        if self.validation_loss:
            frame['validation_loss'] = self.validation_loss
        return frame


def train(dataset: EpisodeDataset, network, scaler, config: TrainConfig = TrainConfig(), window_hours=168):
    """Mini-batch AdamW on the mean pinball loss; returns the final-epoch model and its history."""
    if not dataset.train:
        raise ValidationError('Invalid dataset. The training split is empty')
    _check_levels(config.levels)
    model = build_model(network, scaler, config, window_hours)
    logger.info("Training %d parameters (k=%d, d_h=%d, %d levels)",
                count_parameters(model.params), model.adjacency.k, config.hidden_size, len(config.levels))
    rng = np.random.default_rng(config.seed)
    state = ad.AdamState()
    history = TrainHistory()
    params = model.param_list()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset.train))
        total = 0.0
        for batch, start in enumerate(range(0, len(order), config.batch_size), start=1):
            episodes = [dataset.train[i] for i in order[start:start + config.batch_size]]
            tape = ad.Tape()
            loss = model.batch_loss(tape, episodes)
            grads = tape.backward(loss, params)
            try:
                ad.adamw_step(params, grads, state, lr=config.learning_rate, weight_decay=config.weight_decay)
            except NonFiniteGradient as e:
                e.epoch, e.batch = epoch, batch
                raise
            total += float(loss.value) * len(episodes)
        history.train_loss.append(total / len(dataset.train))
        if dataset.validation:
            history.validation_loss.append(model.evaluate_loss(dataset.validation, config.batch_size))
            logger.info("Epoch %d/%d train loss %.5f validation loss %.5f", epoch, config.epochs,
                        history.train_loss[-1], history.validation_loss[-1])
        else:
            logger.info("Epoch %d/%d train loss %.5f", epoch, config.epochs, history.train_loss[-1])
    return model, history


def forecast_day_ahead(model: ForecastModel, network, weather, dlr, date):
    window = assemble_features(network, weather, dlr, date, model.scaler, model.window_hours)
    return model.forecast(window, date)


def save_model(path, model: ForecastModel, extra=None):
    meta = dict(extra or {})
    meta.update({
        'hops': model.adjacency.k,
        'hidden_size': model.hidden_size,
        'levels': list(model.levels),
        'line_ids': [int(line_id) for line_id in model.line_ids],
        'per_line_heads': model.per_line_heads,
        'window_hours': model.window_hours,
        'scaler_mean': model.scaler.mean.tolist(),
        'scaler_std': model.scaler.std.tolist(),
    })
    ad.save_params(path, model.param_list(), meta)


def load_model(path, network: BusNetwork):
    params, meta = ad.load_params(path)
    if [int(line_id) for line_id in network.line_ids] != meta['line_ids']:
        raise ValidationError(f'Invalid checkpoint {path}. It was trained on lines {meta["line_ids"]}')
    if meta['hops'] == 0:
        adjacency = identity_adjacency(len(network.lines))
    else:
        adjacency = khop_adjacency(line_graph(network), meta['hops'])
    scaler = FeatureScaler(np.asarray(meta['scaler_mean']), np.asarray(meta['scaler_std']))
    model = ForecastModel({p.name: p for p in params}, adjacency, scaler, tuple(network.line_ids),
                          tuple(meta['levels']), meta['hidden_size'], meta['per_line_heads'], meta['window_hours'])
    return model, meta
