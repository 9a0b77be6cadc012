from dlrgrid.gridops import Generator, GridSpec


def two_bus_grid(network):
    """Cheap generator at bus 1, expensive one at bus 2, all load at bus 2."""
    return GridSpec(
        network=network,
        generators=(
            Generator(gen_id=1, bus=1, kind='controllable', c1=10.0, c2=0.01, pmax=200.0),
            Generator(gen_id=2, bus=2, kind='controllable', c1=40.0, c2=0.02, pmax=200.0),
        ),
        reference_bus=1,
        peak_loads={2: 100.0},
    )


def triangle_grid(network):
    return GridSpec(
        network=network,
        generators=(
            Generator(gen_id=1, bus=1, kind='controllable', c1=15.0, c2=0.01, pmax=250.0),
            Generator(gen_id=2, bus=2, kind='controllable', c1=35.0, c2=0.02, pmax=150.0),
            Generator(gen_id=3, bus=3, kind='renewable', pmax=60.0, capacity_factor=0.4),
        ),
        reference_bus=1,
        peak_loads={2: 60.0, 3: 90.0},
    )
