import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itd2d.drivecycle import (
    CellElectrical, DriveCycle, DriveCycleSample, OcvTable, cycle_heat, heat_power, read_cycle_csv, soc_update,
    synth_hev_cycle, volumetric_heat, write_cycle_csv,
)
from itd2d.errors import InputError, MissingColumnError
from itd2d.params import REFERENCE_GEOMETRY, CellGeometry

finite = st.floats(-1e4, 1e4, allow_nan=False)
maybe = st.one_of(st.none(), finite)


@st.composite
def cycles(draw):
    n = draw(st.integers(2, 30))
    dt = draw(st.sampled_from([0.5, 1.0, 2.0]))
    t0 = draw(st.floats(0, 1e4))
    opt = {}
    for name in draw(st.sets(st.sampled_from(["T1", "T2", "T3", "T4", "z_imag", "t_chamber"]))):
        col = draw(st.lists(maybe, min_size=n, max_size=n))
        opt[name] = np.array([np.nan if v is None else v for v in col])
    return DriveCycle(t0 + dt * np.arange(n), np.array(draw(st.lists(finite, min_size=n, max_size=n))),
                      np.array(draw(st.lists(finite, min_size=n, max_size=n))), opt)


@given(cycles())
def test_csv_round_trip(tmp_path_factory, cycle):
    path = tmp_path_factory.mktemp("cyc") / "c.csv"
    write_cycle_csv(cycle, path)
    assert read_cycle_csv(path) == cycle


def test_samples_round_trip():
    cycle = synth_hev_cycle(2, 120).with_columns(z_imag=np.where(np.arange(120) % 24 == 0, 1e-3, np.nan))
    samples = list(cycle)
    assert isinstance(samples[0], DriveCycleSample)
    assert samples[1].z_imag is None and samples[24].z_imag == 1e-3
    assert DriveCycle.from_samples(samples) == cycle


def test_csv_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("t,current\n0,1\n")
    with pytest.raises(MissingColumnError):
        read_cycle_csv(p)
    p.write_text("t,current,voltage,bogus\n0,1,3.3,4\n")
    with pytest.raises(InputError, match="bogus"):
        read_cycle_csv(p)
    p.write_text("t,current,voltage\n0,1,3.3\n1,x,3.3\n")
    with pytest.raises(InputError, match=":3:"):
        read_cycle_csv(p)
    p.write_text("t,current,voltage\n0,1,3.3\n0,1,3.3\n")
    with pytest.raises(InputError, match="increasing"):
        read_cycle_csv(p)


def test_missing_optional_columns_are_allowed_until_required():
    cycle = synth_hev_cycle(0, 100)
    assert not cycle.has("T3")
    with pytest.raises(MissingColumnError, match="T3"):
        cycle.require("T3")
    with pytest.raises(MissingColumnError):
        cycle.column("z_imag")


def test_heat_power_examples():
    s = lambda i, v: DriveCycleSample(0.0, i, v)  # noqa: E731
    assert heat_power(s(0.0, 3.0), 3.3) == 0.0
    assert heat_power(s(20.0, 3.3), 3.3) == 0.0
    assert heat_power(s(-50.0, 3.0), 3.3) == pytest.approx(15.0, abs=1e-12)


def test_volumetric_heat_examples():
    assert volumetric_heat(0.0, REFERENCE_GEOMETRY) == 0.0
    vb = math.pi * (0.016**2 - 0.001**2) * 0.1
    assert volumetric_heat(15.0, REFERENCE_GEOMETRY) == pytest.approx(15.0 / vb, rel=1e-14)
    assert volumetric_heat(15.0, REFERENCE_GEOMETRY) == pytest.approx(1.8724e5, rel=1e-4)
    tall = CellGeometry(0.001, 0.016, 0.2)
    assert volumetric_heat(15.0, tall) == pytest.approx(0.5 * volumetric_heat(15.0, REFERENCE_GEOMETRY), rel=1e-14)


def test_soc_examples():
    assert soc_update(0.4, 0.0, 1.0, 4.4) == 0.4
    assert soc_update(0.0, 4.4, 3600.0, 4.4) == pytest.approx(1.0, abs=1e-15)
    assert soc_update(0.99, 50.0, 3600.0, 4.4) == 1.0
    assert soc_update(0.01, -50.0, 3600.0, 4.4) == 0.0


def test_ocv_table():
    table = OcvTable((0.2, 0.8), (3.2, 3.4))
    assert table(0.5) == pytest.approx(3.3)
    assert table(0.0) == 3.2 and table(1.0) == 3.4
    with pytest.raises(InputError):
        OcvTable((0.5, 0.2), (3.2, 3.3))
    with pytest.raises(InputError):
        OcvTable((0.2, 0.5), (3.3, 3.2))


@given(st.integers(0, 10_000))
def test_synth_cycle_contract(seed):
    cycle = synth_hev_cycle(seed, 3600, i_max=50.0)
    assert np.abs(cycle.current).max() <= 50.0
    heat = cycle_heat(cycle, REFERENCE_GEOMETRY)
    assert 0.47 <= heat.soc.min() and heat.soc.max() <= 0.63
    # zero current during the last 4 s of every 24 s period
    assert np.all(cycle.current[np.mod(cycle.t, 24.0) >= 20.0] == 0.0)


def test_synth_cycle_determinism():
    a, b = synth_hev_cycle(5, 1800), synth_hev_cycle(5, 1800)
    assert a == b
    assert np.array_equal(a.current, b.current) and np.array_equal(a.voltage, b.voltage)
    assert synth_hev_cycle(6, 1800) != a


def test_synth_cycle_mean_heat_order_of_magnitude():
    for seed in range(5):
        heat = cycle_heat(synth_hev_cycle(seed, 2400, r0=0.020), REFERENCE_GEOMETRY)
        assert 1.0 <= heat.power.mean() <= 10.0


def test_heat_series_is_non_anticipative():
    cycle = synth_hev_cycle(3, 600)
    full = cycle_heat(cycle, REFERENCE_GEOMETRY)
    k = 300
    head = DriveCycle(cycle.t[:k], cycle.current[:k], cycle.voltage[:k])
    part = cycle_heat(head, REFERENCE_GEOMETRY)
    assert len(full.q) == len(cycle)
    assert np.array_equal(full.q[:k], part.q)


def test_negative_heat_is_counted_not_clipped():
    cycle = DriveCycle(np.arange(4.0), np.array([10.0, 10.0, -10.0, 0.0]), np.array([3.2, 3.4, 3.4, 3.3]))
    heat = cycle_heat(cycle, REFERENCE_GEOMETRY, OcvTable(), CellElectrical())
    assert heat.power[0] < 0 and heat.negative_fraction == pytest.approx(0.5)
