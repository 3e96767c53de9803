"""Impact estimation tests.

Oracles are closed forms, frozen before the assertions were written. The
stuck-damper scenario pins the zone-to-supply difference at 19 degF with
300 CFM of excess flow for 168 hours, so the metered waste is

    1.08 * 300 * 19 * 168 / 1e6 * c1  =  1.1376288 MMBTU  (c1 = 1.1)

and the flat annualization of a 7-day window is that times 365/7. The
annualizer is checked against a direct sum over the reference year done
in plain Python, never through the module under test.
"""

import dataclasses
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hvacdisagg.calibrate import fit_model
from hvacdisagg.errors import DisaggError, FitError
from hvacdisagg.faults import RULE_NAMES, FaultFinding, run_all
from hvacdisagg.impact import (
    METHOD_MODEL,
    METHOD_NOT_ESTIMABLE,
    METHOD_SETPOINT,
    REPORT_HEADER,
    ImpactEstimate,
    annualize,
    build_report,
    estimate_all,
    estimate_impact,
    fault_energy_loss,
    format_report,
    prioritize,
    write_report_csv,
)

# hand value: 1.08 * 300 * 19 * 168 / 1e6 * 1.1
DAMPER_LOSS_MMBTU = 1.1376288
# same window extrapolated flat: every fault day wastes the same amount
DAMPER_ANNUAL_MMBTU = DAMPER_LOSS_MMBTU * 365.0 / 7.0

DAY = 86400


def brute_annual(slope, intercept, reference):
    """Clamped sum over the reference year, plain Python."""
    total = 0.0
    for x in reference:
        v = slope * float(x) + intercept
        if v > 0.0:
            total += v
    return total


def _reference_year():
    d = np.arange(1, 366)
    return 50.0 + 20.0 * np.sin(2 * np.pi * (d - 201) / 365.0)


def _finding(rule, equipment, start, end):
    return FaultFinding(rule=rule, rule_name=RULE_NAMES[rule],
                        equipment=equipment, window_start=start,
                        window_end=end, statistic=0.0, threshold=0.0)


@pytest.fixture(scope="module")
def impact_model(impact_loaded):
    return fit_model(impact_loaded.data)


@pytest.fixture(scope="module")
def faulted_model(faulted_loaded):
    return fit_model(faulted_loaded.data)


class TestAnnualize:
    def test_linear_law_matches_direct_sum(self):
        oat = np.linspace(45.0, 65.0, 30)
        losses = 0.1 * oat - 4.0
        ref = _reference_year()
        res = annualize(losses, oat, ref)
        assert not res.fallback
        assert res.slope == pytest.approx(0.1, rel=1e-9)
        assert res.intercept == pytest.approx(-4.0, rel=1e-9)
        assert abs(res.r) == pytest.approx(1.0, abs=1e-12)
        assert res.annual_mmbtu == pytest.approx(brute_annual(0.1, -4.0, ref), rel=1e-6)

    def test_cold_weather_law_clamps_hot_days(self):
        # heating-season waste: negative slope, so the reference summer
        # would predict negative loss and must contribute zero instead
        oat = np.linspace(20.0, 55.0, 24)
        losses = 10.0 - 0.2 * oat
        ref = _reference_year()
        res = annualize(losses, oat, ref)
        want = brute_annual(-0.2, 10.0, ref)
        assert res.annual_mmbtu == pytest.approx(want, rel=1e-6)
        assert res.annual_mmbtu >= 0.0
        assert want < 365.0 * float(np.mean(losses))  # the clamp actually bit

    def test_uncorrelated_losses_fall_back_to_mean(self):
        # loss period 2 against weather period 3: correlation exactly zero
        oat = np.array([40.0, 50.0, 60.0] * 4)
        losses = np.array([1.0, 2.0] * 6)
        res = annualize(losses, oat, _reference_year())
        assert res.fallback
        assert res.r == pytest.approx(0.0, abs=1e-12)
        assert res.annual_mmbtu == pytest.approx(1.5 * 365.0, rel=1e-12)

    def test_flat_weather_falls_back_to_mean(self):
        losses = np.array([1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0])
        res = annualize(losses, np.full(7, 50.0), _reference_year())
        assert res.fallback
        assert res.annual_mmbtu == pytest.approx(float(np.mean(losses)) * 365.0)
        assert res.slope == 0.0

    def test_too_few_days(self):
        with pytest.raises(FitError, match="at least 7"):
            annualize(np.ones(6), np.linspace(40, 60, 6), _reference_year())

    def test_shape_mismatch(self):
        with pytest.raises(FitError, match="equal-length"):
            annualize(np.ones(10), np.ones(9), _reference_year())


@given(slope=st.floats(-2.0, 2.0), intercept=st.floats(-50.0, 50.0))
@settings(max_examples=100, deadline=None)
def test_annualize_reproduces_any_exact_law(slope, intercept):
    assume(abs(slope) > 0.02)
    oat = np.linspace(30.0, 70.0, 20)
    ref = _reference_year()
    res = annualize(slope * oat + intercept, oat, ref)
    assert not res.fallback
    want = brute_annual(slope, intercept, ref)
    assert res.annual_mmbtu == pytest.approx(want, rel=1e-9, abs=1e-9)


class TestFaultEnergyLoss:
    def test_damper_loss_closed_form(self, impact_loaded, impact_model):
        (inj,) = impact_loaded.truth.injections
        finding = _finding(5, inj.equipment, inj.start, inj.end)
        loss = fault_energy_loss(finding, impact_model, impact_loaded.data)
        assert loss == pytest.approx(DAMPER_LOSS_MMBTU, rel=1e-9)

    def test_short_window_rejected(self, impact_loaded, impact_model):
        (inj,) = impact_loaded.truth.injections
        finding = _finding(5, inj.equipment, inj.start, inj.start + 3 * DAY)
        with pytest.raises(DisaggError, match="shorter than 7 days"):
            fault_energy_loss(finding, impact_model, impact_loaded.data)

    def test_missing_setpoint_not_estimable(self, impact_loaded, impact_model):
        data = impact_loaded.data
        (inj,) = impact_loaded.truth.injections
        crippled = dataclasses.replace(
            data.vavs[inj.equipment], flow_setpoint=None)
        data = dataclasses.replace(data, vavs={**data.vavs, inj.equipment: crippled})
        finding = _finding(5, inj.equipment, inj.start, inj.end)
        assert fault_energy_loss(finding, impact_model, data) is None

    def test_loss_clamped_at_zero(self, impact_loaded, impact_model):
        # a box delivering under setpoint saves coil energy; that must
        # never surface as negative waste
        data = impact_loaded.data
        vav = data.vavs["VAV1-01"]
        starved = dataclasses.replace(vav, flow=vav.flow_setpoint - 100.0)
        data = dataclasses.replace(data, vavs={**data.vavs, "VAV1-01": starved})
        finding = _finding(5, "VAV1-01", data.start, data.start + 8 * DAY)
        assert fault_energy_loss(finding, impact_model, data) == 0.0


class TestEstimateImpact:
    def test_flat_fallback_on_steady_weather(self, impact_loaded, impact_model):
        # the scenario's daily-mean OAT is the same every day, so the
        # weather regression is degenerate and the mean carries the year
        (inj,) = impact_loaded.truth.injections
        finding = _finding(5, inj.equipment, inj.start, inj.end)
        est = estimate_impact(finding, impact_model, impact_loaded.data,
                              impact_loaded.reference_oat)
        assert est.method == METHOD_SETPOINT
        assert est.observed_mmbtu == pytest.approx(DAMPER_LOSS_MMBTU, rel=1e-9)
        assert est.annual_mmbtu == pytest.approx(DAMPER_ANNUAL_MMBTU, rel=1e-9)
        assert est.r == 0.0
        assert "flat extrapolation" in est.notes

    def test_no_weather_data_still_extrapolates(self, impact_loaded, impact_model):
        data = dataclasses.replace(impact_loaded.data, oat=None)
        (inj,) = impact_loaded.truth.injections
        finding = _finding(5, inj.equipment, inj.start, inj.end)
        est = estimate_impact(finding, impact_model, data,
                              impact_loaded.reference_oat)
        assert est.annual_mmbtu == pytest.approx(DAMPER_ANNUAL_MMBTU, rel=1e-9)
        assert "outdoor-air" in est.notes

    def test_not_estimable_has_no_numbers(self, impact_loaded, impact_model):
        data = impact_loaded.data
        (inj,) = impact_loaded.truth.injections
        crippled = dataclasses.replace(data.vavs[inj.equipment], flow_setpoint=None)
        data = dataclasses.replace(data, vavs={**data.vavs, inj.equipment: crippled})
        finding = _finding(5, inj.equipment, inj.start, inj.end)
        est = estimate_impact(finding, impact_model, data, impact_loaded.reference_oat)
        assert est.method == METHOD_NOT_ESTIMABLE
        assert not est.estimable
        assert est.observed_mmbtu is None
        assert est.annual_mmbtu is None
        assert "setpoint" in est.notes

    def test_method_tags_by_rule(self, faulted_loaded, faulted_model):
        result = run_all(faulted_loaded.data)
        estimates = estimate_all(result.findings, faulted_model,
                                 faulted_loaded.data, faulted_loaded.reference_oat)
        methods = {e.finding.rule: e.method for e in estimates}
        assert methods == {
            1: METHOD_MODEL, 2: METHOD_MODEL, 3: METHOD_MODEL,
            4: METHOD_SETPOINT, 5: METHOD_SETPOINT,
        }
        for est in estimates:
            assert est.observed_mmbtu >= 0.0
            assert est.annual_mmbtu >= 0.0


class TestPrioritize:
    def _estimate(self, rule, equipment, annual, method=METHOD_SETPOINT):
        finding = _finding(rule, equipment, 0, 7 * DAY)
        if annual is None:
            return ImpactEstimate(finding=finding, method=METHOD_NOT_ESTIMABLE)
        return ImpactEstimate(finding=finding, method=method,
                              observed_mmbtu=annual / 52.0, annual_mmbtu=annual)

    def test_descending_annual_not_estimable_last(self):
        ests = [
            self._estimate(2, "AH2", 15.0),
            self._estimate(1, "AH1", None),
            self._estimate(5, "VAV1", 40.0),
            self._estimate(3, "AH3", 22.0),
        ]
        ordered = prioritize(ests)
        assert [e.annual_mmbtu for e in ordered] == [40.0, 22.0, 15.0, None]

    def test_ties_break_on_rule_then_equipment(self):
        ests = [
            self._estimate(5, "VAV2", 10.0),
            self._estimate(5, "VAV1", 10.0),
            self._estimate(4, "VAV9", 10.0),
        ]
        ordered = prioritize(ests)
        assert [(e.finding.rule, e.finding.equipment) for e in ordered] == [
            (4, "VAV9"), (5, "VAV1"), (5, "VAV2")]

    def test_order_independent_of_input_order(self):
        ests = [self._estimate(r, f"E{r}{i}", float(a))
                for i, (r, a) in enumerate([(1, 5), (2, 9), (3, 9), (4, 1), (5, 30)])]
        ests.append(self._estimate(2, "E99", None))
        want = prioritize(ests)
        for seed in range(5):
            shuffled = list(ests)
            random.Random(seed).shuffle(shuffled)
            assert prioritize(shuffled) == want


class TestReport:
    def _impacts(self):
        mk = TestPrioritize()._estimate
        return prioritize([
            mk(5, "VAV1", 10.0), mk(5, "VAV2", 5.0),
            mk(2, "AH1", 30.0, METHOD_MODEL),
            mk(4, "VAV3", None),
        ])

    def test_rows_grouped_by_rule(self):
        rows = build_report(self._impacts())
        assert [(r.rule, r.count, r.annual_mmbtu, r.not_estimable) for r in rows] == [
            (2, 1, 30.0, 0),
            (5, 2, 15.0, 0),
            (4, 1, None, 1),
        ]
        assert rows[0].possible_fault == RULE_NAMES[2]

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report_csv(build_report(self._impacts()), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(REPORT_HEADER)
        assert lines[1] == "2,cooling valve leak,1,30.000,0"
        assert lines[-1] == "4,min-flow config error,1,,1"

    def test_text_table(self):
        text = format_report(build_report(self._impacts()))
        lines = text.splitlines()
        assert text.endswith("\n")
        assert lines[0].startswith("rule")
        assert set(lines[1]) == {"-", " "}
        assert any("not estimable" in ln for ln in lines)
        assert all(ln == ln.rstrip() for ln in lines)

    def test_report_stable_under_shuffling(self):
        impacts = list(self._impacts())
        want = build_report(impacts)
        for seed in range(5):
            shuffled = list(impacts)
            random.Random(seed).shuffle(shuffled)
            assert build_report(prioritize(shuffled)) == want
