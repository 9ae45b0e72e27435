import math

import pytest
from hypothesis import given, strategies as st

from pairbench.core import (SUPPORTED_UNITS, CountRateSeries, DomainError, MeasurementLocation, PumpRegime,
                            Quantity, Unit, ValidatedSeries, canonicalize, db_to_transmittance,
                            read_series_csv, read_sidecar, render, validate_series, write_series_csv)


def _series(powers, tau=1e-9):
    return CountRateSeries.from_points([(p, 1e4 * p, 1e4 * p, 10 * p) for p in powers], tau)


class TestDecibels:
    def test_known_values(self):
        assert db_to_transmittance(0) == 1.0
        assert db_to_transmittance(10) == pytest.approx(0.1, rel=1e-15)
        assert db_to_transmittance(3) == pytest.approx(10 ** -0.3, rel=1e-15)
        assert db_to_transmittance(3) == pytest.approx(0.501187, abs=1e-6)

    def test_negative_or_nan_rejected(self):
        with pytest.raises(DomainError):
            db_to_transmittance(-1)
        with pytest.raises(DomainError):
            db_to_transmittance(float("nan"))

    @given(st.floats(0, 50), st.floats(0, 50))
    def test_losses_multiply(self, a, b):
        assert math.isclose(db_to_transmittance(a + b), db_to_transmittance(a) * db_to_transmittance(b),
                            rel_tol=1e-12)

    @given(st.floats(0, 100), st.floats(1e-6, 10))
    def test_strictly_decreasing(self, a, d):
        assert db_to_transmittance(a + d) < db_to_transmittance(a)


class TestUnits:
    @given(st.sampled_from(SUPPORTED_UNITS), st.floats(-1e9, 1e9, allow_nan=False),
           st.floats(0, 1e6, allow_nan=False))
    def test_round_trip(self, unit, value, err):
        q = canonicalize(value, unit, err)
        v, u = render(q, unit)
        assert math.isclose(v, value, rel_tol=1e-14, abs_tol=1e-300)
        assert math.isclose(u, err, rel_tol=1e-14, abs_tol=1e-300)

    def test_percent_becomes_fraction(self):
        q = canonicalize(93, "%", 3)
        assert q.unit is Unit.DIMENSIONLESS
        assert q.value == pytest.approx(0.93)
        assert q.uncertainty == pytest.approx(0.03)
        assert render(q, "%") == pytest.approx((93, 3))

    def test_brightness_scales(self):
        assert canonicalize(4.4e6, "cts s^-1 mW^-2").value == pytest.approx(4.4)
        assert canonicalize(20000, "Mcts s^-1 mW^-2").unit is Unit.BRIGHTNESS

    def test_unknown_unit(self):
        with pytest.raises(DomainError):
            canonicalize(1.0, "furlongs")

    def test_render_wrong_kind(self):
        with pytest.raises(DomainError):
            render(canonicalize(1.0, "mW"), "%")

    def test_quantity_invariants(self):
        with pytest.raises(DomainError):
            Quantity(float("inf"))
        with pytest.raises(DomainError):
            Quantity(1.0, -0.1)
        assert Quantity(2.0).uncertainty == 0.0
        assert Quantity(2.0, 0.2).scaled(3).uncertainty == pytest.approx(0.6)


class TestLocations:
    def test_ordering_follows_loss(self):
        assert MeasurementLocation.GENERATION < MeasurementLocation.POST_SOURCE < MeasurementLocation.DETECTOR
        assert len(MeasurementLocation) == 3

    def test_parse(self):
        assert MeasurementLocation.parse("detector") is MeasurementLocation.DETECTOR
        assert MeasurementLocation.parse(2) is MeasurementLocation.POST_SOURCE
        with pytest.raises(DomainError):
            MeasurementLocation.parse("fibre")


class TestRegime:
    def test_pulsed_needs_positive(self):
        with pytest.raises(DomainError):
            PumpRegime.pulsed(0.0, 1e9)
        with pytest.raises(DomainError):
            PumpRegime.pulsed(100e6, -1.0)

    def test_dict_round_trip(self):
        for r in (PumpRegime.cw(), PumpRegime.pulsed(100e6, 5e10)):
            assert PumpRegime.from_dict(r.to_dict()) == r
        assert PumpRegime.cw().is_cw


class TestValidation:
    def test_five_good_points(self):
        assert isinstance(validate_series(_series([0.1, 0.2, 0.3, 0.4, 0.5])), ValidatedSeries)

    def test_repeated_power(self):
        v = validate_series(_series([0.1, 0.2, 0.2, 0.4, 0.5]))
        assert [(x.rule, x.index) for x in v] == [("powers not strictly increasing", 2)]

    def test_too_few_points(self):
        v = validate_series(_series([0.1, 0.2, 0.3]))
        assert any(x.rule == "minimum 4 points" for x in v)

    def test_negative_rate_and_tau(self):
        s = CountRateSeries.from_points([(0.1, 1, 1, 1), (0.2, -1, 1, 1), (0.3, 1, 1, 1), (0.4, 1, 1, 1)], 0.0)
        rules = {x.rule for x in validate_series(s)}
        assert rules == {"rates must be non-negative", "tau must be > 0"}

    def test_nonpositive_power(self):
        v = validate_series(_series([0.0, 0.2, 0.3, 0.4]))
        assert v[0].rule == "powers must be strictly positive" and v[0].index == 0


def test_csv_round_trip(tmp_path):
    s = _series([0.1, 0.25, 0.5, 1.0])
    path = tmp_path / "s.csv"
    write_series_csv(s, path)
    back = read_series_csv(path, s.tau)
    assert back.points == s.points


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("p_avg_mw,r_s_cps\n1,2\n")
    with pytest.raises(DomainError, match="missing CSV columns"):
        read_series_csv(path, 1e-9)


def test_sidecar(tmp_path):
    path = tmp_path / "side.json"
    path.write_text('{"tau_s": 2e-9, "regime": {"kind": "cw"}, "integration_time_s": 5}')
    side = read_sidecar(path)
    assert side == {"tau": 2e-9, "regime": PumpRegime.cw(), "integration_time": 5.0}
