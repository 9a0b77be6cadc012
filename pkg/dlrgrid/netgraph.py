"""Transmission network, its line graph and k-hop degree-normalised adjacency."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import networkx as nx
import numpy as np
import pandas as pd
from scipy import sparse

from dlrgrid import constants
from dlrgrid.exceptions import DisconnectedNetwork, InvalidHopCount, SelfLoop, UnknownBus
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class Bus:
    bus_id: int
    latitude_deg: float
    longitude_deg: float


@dataclass(frozen=True)
class Line:
    line_id: int
    from_bus: int
    to_bus: int
    susceptance_pu: float
    length_km: float
    conductor_ref: str
    merged_from: tuple = ()

    @property
    def endpoints(self):
        """Endpoints with the lower bus id first."""
        return (self.from_bus, self.to_bus) if self.from_bus < self.to_bus else (self.to_bus, self.from_bus)


@dataclass(frozen=True)
class BusNetwork:
    buses: tuple
    lines: tuple
    _bus_index: dict = field(init=False, repr=False, compare=False)
    _line_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, '_bus_index', {bus.bus_id: i for i, bus in enumerate(self.buses)})
        object.__setattr__(self, '_line_index', {line.line_id: i for i, line in enumerate(self.lines)})

    @property
    def bus_ids(self):
        return [bus.bus_id for bus in self.buses]

    @property
    def line_ids(self):
        return [line.line_id for line in self.lines]

    def bus_index(self, bus_id):
        return self._bus_index[bus_id]

    def line_index(self, line_id):
        return self._line_index[line_id]

    def bus(self, bus_id):
        return self.buses[self._bus_index[bus_id]]

    def to_networkx(self):
        graph = nx.Graph()
        graph.add_nodes_from(self.bus_ids)
        for line in self.lines:
            graph.add_edge(line.from_bus, line.to_bus, line_id=line.line_id)
        return graph

    def incidence(self):
        """Bus-by-line incidence matrix with +1 at ``from_bus`` and -1 at ``to_bus``."""
        rows, cols, vals = [], [], []
        for j, line in enumerate(self.lines):
            rows += [self._bus_index[line.from_bus], self._bus_index[line.to_bus]]
            cols += [j, j]
            vals += [1.0, -1.0]
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.buses), len(self.lines)))

    def coordinates(self):
        return np.array([[bus.latitude_deg, bus.longitude_deg] for bus in self.buses], dtype=float)


@dataclass(frozen=True)
class LineGraphTopology:
    line_ids: tuple
    edges: tuple

    @property
    def node_count(self):
        return len(self.line_ids)

    def node_index(self, line_id):
        return self.line_ids.index(line_id)

    def adjacency(self):
        n = self.node_count
        if not self.edges:
            return sparse.csr_matrix((n, n), dtype=float)
        rows, cols = zip(*self.edges)
        data = np.ones(2 * len(self.edges))
        matrix = sparse.coo_matrix((data, (rows + cols, cols + rows)), shape=(n, n))
        return matrix.tocsr()


@dataclass(frozen=True)
class LineGraphAdjacency:
    k: int
    matrix: sparse.csr_matrix

    @property
    def size(self):
        return self.matrix.shape[0]

    def to_triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return pd.DataFrame({
            'row': coo.row[order],
            'col': coo.col[order],
            'value': coo.data[order],
        }, columns=constants.adjacency_csv_columns)


def _rating_by_library(conductor_ref):
    from dlrgrid.thermal import default_conductor_rating
    return default_conductor_rating(conductor_ref)


def build_network(raw_buses, raw_lines, conductor_rating: Optional[Callable[[str], float]] = None):
    """Validate raw bus/line records and merge parallel lines.

    Records are mappings keyed like the CSV columns (``bus_id, lat, lon`` and
    ``line_id, from_bus, to_bus, susceptance_pu, length_km, conductor_ref``).
    Parallel lines become one line: susceptances add, the length is the longest
    member's and the conductor is the member with the highest static rating.
    """
    raw_buses = list(raw_buses)
    raw_lines = list(raw_lines)
    if not raw_buses:
        raise ValidationError('Invalid network. At least one bus is required')
    if not raw_lines:
        raise ValidationError('Invalid network. At least one line is required')
    if conductor_rating is None:
        conductor_rating = _rating_by_library

    buses = {}
    for record in raw_buses:
        bus = Bus(int(record['bus_id']), float(record['lat']), float(record['lon']))
        if bus.bus_id in buses:
            raise ValidationError(f'Invalid network. Bus {bus.bus_id} is declared twice')
        buses[bus.bus_id] = bus

    groups = {}
    for record in raw_lines:
        line = Line(
            line_id=int(record['line_id']),
            from_bus=int(record['from_bus']),
            to_bus=int(record['to_bus']),
            susceptance_pu=float(record['susceptance_pu']),
            length_km=float(record['length_km']),
            conductor_ref=str(record['conductor_ref']),
        )
        for bus_id in (line.from_bus, line.to_bus):
            if bus_id not in buses:
                raise UnknownBus(line.line_id, bus_id)
        if line.from_bus == line.to_bus:
            raise SelfLoop(line.line_id, line.from_bus)
        if not line.susceptance_pu > 0:
            raise ValidationError(f'Invalid line {line.line_id}. "susceptance_pu" must be positive')
        if not line.length_km > 0:
            raise ValidationError(f'Invalid line {line.line_id}. "length_km" must be positive')
        groups.setdefault(line.endpoints, []).append(line)

    lines = []
    for members in groups.values():
        members = sorted(members, key=lambda m: m.line_id)
        if len(members) == 1:
            lines.append(members[0])
            continue
        strongest = max(members, key=lambda m: conductor_rating(m.conductor_ref))
        head = members[0]
        merged = Line(
            line_id=head.line_id,
            from_bus=head.from_bus,
            to_bus=head.to_bus,
            susceptance_pu=sum(m.susceptance_pu for m in members),
            length_km=max(m.length_km for m in members),
            conductor_ref=strongest.conductor_ref,
            merged_from=tuple(m.line_id for m in members),
        )
        logger.debug("Merged parallel lines %s into line %s", merged.merged_from, merged.line_id)
        lines.append(merged)

    network = BusNetwork(
        buses=tuple(sorted(buses.values(), key=lambda b: b.bus_id)),
        lines=tuple(sorted(lines, key=lambda m: m.line_id)),
    )

    components = list(nx.connected_components(network.to_networkx()))
    if len(components) > 1:
        raise DisconnectedNetwork([sorted(c) for c in components])

    return network


def read_network(buses_csv, lines_csv, conductor_rating=None):
    buses = pd.read_csv(buses_csv)
    lines = pd.read_csv(lines_csv)
    for frame, columns, name in ((buses, constants.bus_csv_columns, buses_csv),
                                 (lines, constants.line_csv_columns, lines_csv)):
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ValidationError(f'Invalid network file {name}. Missing columns {", ".join(missing)}')
    return build_network(buses.to_dict('records'), lines.to_dict('records'), conductor_rating)


def line_graph(network: BusNetwork) -> LineGraphTopology:
    """Line graph of the network; node i is ``network.lines[i]`` (ordered by line id)."""
    graph = network.to_networkx()
    lg = nx.line_graph(graph)
    index = {line.line_id: i for i, line in enumerate(network.lines)}
    edges = set()
    for a, b in lg.edges():
        i = index[graph.edges[a]['line_id']]
        j = index[graph.edges[b]['line_id']]
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return LineGraphTopology(line_ids=tuple(network.line_ids), edges=tuple(sorted(edges)))


def reachability(topology: LineGraphTopology, k: int):
    """0/1 pattern of nodes reachable within at most k hops, diagonal included."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidHopCount(k)
    a = topology.adjacency()
    reach = sparse.identity(topology.node_count, dtype=float, format='csr')
    for _ in range(int(k)):
        grown = (reach + reach @ a).sign().tocsr()
        if grown.nnz == reach.nnz:
            break
        reach = grown
    return reach


def khop_adjacency(topology: LineGraphTopology, k: int) -> LineGraphAdjacency:
    reach = reachability(topology, k)
    degree = np.asarray(reach.sum(axis=1)).ravel()
    scale = sparse.diags(1.0 / np.sqrt(degree))
    normalized = (scale @ reach @ scale).tocsr()
    normalized.sort_indices()
    return LineGraphAdjacency(k=int(k), matrix=normalized)


def identity_adjacency(size: int) -> LineGraphAdjacency:
    """Adjacency that disables spatial mixing (single-line LSTM ablation)."""
    return LineGraphAdjacency(k=0, matrix=sparse.identity(size, format='csr', dtype=float))


def export_adjacency_csv(adjacency: LineGraphAdjacency, path):
    adjacency.to_triplets().to_csv(path, index=False)


def great_circle_km(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_matrix_km(network: BusNetwork):
    coords = network.coordinates()
    lat, lon = coords[:, 0], coords[:, 1]
    return great_circle_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :])


def line_bearing_deg(network: BusNetwork, line: Line):
    """Initial bearing from the lower-id endpoint to the other, degrees clockwise from north."""
    a, b = (network.bus(bus_id) for bus_id in line.endpoints)
    phi1, phi2 = math.radians(a.latitude_deg), math.radians(b.latitude_deg)
    dlmb = math.radians(b.longitude_deg - a.longitude_deg)
    y = math.sin(dlmb) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlmb)
    return math.degrees(math.atan2(y, x)) % 360.0
