"""Heat transfer estimators and the assembled per-building dataset.

All power figures are MMBTU/hr. The folded air constant 1.08 BTU/(hr*CFM*degF)
is standard-air density times specific heat with the unit conversions baked
in. Estimators are elementwise over aligned vectors; NaN rows stay NaN so the
complete-row policy downstream keeps working.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .building import (
    FALLBACK_MEAN_ZONE_TEMPS,
    FALLBACK_OAT_DAMPER_MIX,
    FALLBACK_PARENT_AHU_SAT,
    FALLBACK_SCHEDULE,
    EquipmentGraph,
    PointBinding,
    PointRole,
)
from .errors import DisaggError, SeriesError
from .timeseries import align

__all__ = [
    "PhysicalConstants",
    "vav_cooling_power",
    "economizer_term",
    "estimate_mixed_air",
    "ahu_power",
    "ahu_mode",
    "vav_heating_power",
    "occupancy_schedule",
    "VavData",
    "AhuData",
    "BuildingData",
    "assemble",
]

_MMBTU = 1e6


@dataclass(frozen=True)
class PhysicalConstants:
    air_power_k: float = 1.08  # BTU/(hr*CFM*degF)
    mode_deadband_f: float = 0.5  # degF on (mixed - supply) before an AHU counts as active


DEFAULT_CONSTANTS = PhysicalConstants()


def vav_cooling_power(flow_cfm, zone_temp_f, supply_temp_f, k: float = 1.08):
    """Cooling delivered to a zone, clamped at zero (Btu balance, MMBTU/hr)."""
    p = k * np.asarray(flow_cfm, float) * (
        np.asarray(zone_temp_f, float) - np.asarray(supply_temp_f, float)
    ) / _MMBTU
    return np.maximum(p, 0.0)


def economizer_term(flow_cfm, return_temp_f, mixed_temp_f, k: float = 1.08):
    """Signed outside-air credit: positive when the mix is cooler than return."""
    return (
        k
        * np.asarray(flow_cfm, float)
        * (np.asarray(return_temp_f, float) - np.asarray(mixed_temp_f, float))
        / _MMBTU
    )


def estimate_mixed_air(oat_f, return_temp_f, damper_fraction):
    """Mixed-air temperature from linear damper mixing.

    The damper command must already be a 0..1 fraction; anything outside that
    range (beyond float fuzz) is a data error, not something to clamp away.
    """
    d = np.asarray(damper_fraction, dtype=float)
    finite = d[~np.isnan(d)]
    if finite.size and (finite.min() < -1e-6 or finite.max() > 1.0 + 1e-6):
        raise SeriesError(
            f"damper command outside [0, 1]: range {finite.min():.4f}..{finite.max():.4f}"
        )
    d = np.clip(d, 0.0, 1.0)
    return d * np.asarray(oat_f, float) + (1.0 - d) * np.asarray(return_temp_f, float)


def ahu_mode(mixed_temp_f, supply_temp_f, deadband_f: float = 0.5):
    """+1 cooling, -1 heating, 0 within the deadband, NaN where inputs are gaps."""
    dt = np.asarray(mixed_temp_f, float) - np.asarray(supply_temp_f, float)
    mode = np.zeros_like(dt)
    mode[dt >= deadband_f] = 1.0
    mode[dt <= -deadband_f] = -1.0
    mode[np.isnan(dt)] = np.nan
    return mode


def ahu_power(mixed_temp_f, supply_temp_f, flow_cfm, k: float = 1.08, deadband_f: float = 0.5):
    """Coil power at the air handler, split by mode.

    Returns (cooling, heating) vectors in MMBTU/hr. A temperature difference
    inside the deadband counts as neither; both sides read zero there.
    """
    mixed = np.asarray(mixed_temp_f, float)
    supply = np.asarray(supply_temp_f, float)
    flow = np.asarray(flow_cfm, float)
    p = k * flow * (mixed - supply) / _MMBTU
    mode = ahu_mode(mixed, supply, deadband_f)
    cooling = np.where(mode == 1.0, p, 0.0)
    heating = np.where(mode == -1.0, -p, 0.0)
    bad = np.isnan(p)
    cooling[bad] = np.nan
    heating[bad] = np.nan
    return cooling, heating


def vav_heating_power(hot_water_f, supply_air_f, flow_cfm, valve_fraction, k: float = 1.08):
    """Reheat power scaled by valve position, clamped at zero."""
    v = np.asarray(valve_fraction, float)
    finite = v[~np.isnan(v)]
    if finite.size and (finite.min() < -1e-6 or finite.max() > 1.0 + 1e-6):
        raise SeriesError(
            f"heating valve command outside [0, 1]: range {finite.min():.4f}..{finite.max():.4f}"
        )
    p = (
        k
        * (np.asarray(hot_water_f, float) - np.asarray(supply_air_f, float))
        * np.asarray(flow_cfm, float)
        * np.clip(v, 0.0, 1.0)
        / _MMBTU
    )
    return np.maximum(p, 0.0)


def occupancy_schedule(timestamps, start_s: int, end_s: int, weekdays_only: bool = True):
    """Fallback occupancy from a fixed daily window, evaluated on UTC wall clock."""
    ts = np.asarray(timestamps, dtype=np.int64)
    second = ts % 86400
    occupied = (second >= start_s) & (second < end_s)
    if weekdays_only:
        weekday = (ts // 86400 + 3) % 7  # epoch day zero was a Thursday
        occupied &= weekday < 5
    return occupied.astype(float)


@dataclass
class VavData:
    vav_id: str
    ahu_id: str | None
    zone_temp: np.ndarray
    flow: np.ndarray
    supply_temp: np.ndarray
    flow_setpoint: np.ndarray | None = None
    heating_valve: np.ndarray | None = None
    occupied: np.ndarray | None = None
    min_flow: np.ndarray | None = None
    zone_upper_limit: np.ndarray | None = None


@dataclass
class AhuData:
    ahu_id: str
    supply_temp: np.ndarray
    return_temp: np.ndarray
    flow_sum: np.ndarray
    mixed_temp: np.ndarray | None = None
    mixed_temp_measured: np.ndarray | None = None
    mixed_temp_estimated: np.ndarray | None = None
    damper: np.ndarray | None = None
    cooling_valve: np.ndarray | None = None
    heating_valve: np.ndarray | None = None


@dataclass
class BuildingData:
    """Everything on one grid: per-VAV and per-AHU vectors plus meters."""

    graph: EquipmentGraph
    start: int
    interval_s: int
    n_rows: int
    cooling_meter: np.ndarray
    heating_meter: np.ndarray
    vavs: dict
    ahus: dict
    oat: np.ndarray | None = None
    hot_water_temp: np.ndarray | None = None
    fallbacks_used: tuple = ()
    excluded_vavs: tuple = ()
    warnings: tuple = ()

    def timestamps(self) -> np.ndarray:
        return self.start + self.interval_s * np.arange(self.n_rows, dtype=np.int64)

    @property
    def end(self) -> int:
        return self.start + self.n_rows * self.interval_s

    def row_mask(self, window_start: int | None = None, window_end: int | None = None):
        ts = self.timestamps()
        mask = np.ones(self.n_rows, dtype=bool)
        if window_start is not None:
            mask &= ts >= window_start
        if window_end is not None:
            mask &= ts < window_end
        return mask

    # ------------------------------------------------------------------
    # derived powers; each returns vectors aligned to the frame rows

    def vav_cooling_powers(self, k: float = 1.08) -> dict:
        return {
            v.vav_id: vav_cooling_power(v.flow, v.zone_temp, v.supply_temp, k)
            for v in self.vavs.values()
        }

    def sum_vav_cooling(self, k: float = 1.08) -> np.ndarray:
        powers = list(self.vav_cooling_powers(k).values())
        return np.sum(powers, axis=0)

    def economizer_terms(self, k: float = 1.08) -> dict:
        out = {}
        for a in self.ahus.values():
            if a.mixed_temp is None:
                raise DisaggError(f"AHU '{a.ahu_id}': no mixed-air temperature available")
            out[a.ahu_id] = economizer_term(a.flow_sum, a.return_temp, a.mixed_temp, k)
        return out

    def sum_economizer(self, k: float = 1.08) -> np.ndarray:
        return np.sum(list(self.economizer_terms(k).values()), axis=0)

    def ahu_powers(self, k: float = 1.08, deadband_f: float = 0.5) -> dict:
        out = {}
        for a in self.ahus.values():
            if a.mixed_temp is None:
                raise DisaggError(f"AHU '{a.ahu_id}': no mixed-air temperature available")
            out[a.ahu_id] = ahu_power(a.mixed_temp, a.supply_temp, a.flow_sum, k, deadband_f)
        return out

    def sum_ahu_cooling(self, k: float = 1.08, deadband_f: float = 0.5) -> np.ndarray:
        return np.sum([c for c, _ in self.ahu_powers(k, deadband_f).values()], axis=0)

    def sum_ahu_heating(self, k: float = 1.08, deadband_f: float = 0.5) -> np.ndarray:
        return np.sum([h for _, h in self.ahu_powers(k, deadband_f).values()], axis=0)

    def vav_heating_powers(self, k: float = 1.08) -> dict:
        """Reheat per VAV, only for boxes with a bound heating valve."""
        if self.hot_water_temp is None:
            return {}
        out = {}
        for v in self.vavs.values():
            if v.heating_valve is None:
                continue
            out[v.vav_id] = vav_heating_power(
                self.hot_water_temp, v.supply_temp, v.flow, v.heating_valve, k
            )
        return out

    def sum_vav_heating(self, k: float = 1.08) -> np.ndarray | None:
        powers = list(self.vav_heating_powers(k).values())
        if not powers:
            return None
        return np.sum(powers, axis=0)

    def ahu_modes(self, deadband_f: float = 0.5) -> dict:
        out = {}
        for a in self.ahus.values():
            if a.mixed_temp is None:
                raise DisaggError(f"AHU '{a.ahu_id}': no mixed-air temperature available")
            out[a.ahu_id] = ahu_mode(a.mixed_temp, a.supply_temp, deadband_f)
        return out

    def cooling_rows(self, deadband_f: float = 0.5) -> np.ndarray:
        """Rows where every air handler is cooling or idle (gap rows excluded)."""
        mask = np.ones(self.n_rows, dtype=bool)
        for mode in self.ahu_modes(deadband_f).values():
            mask &= mode >= 0.0  # NaN compares False and drops the row
        return mask

    def heating_rows(self, deadband_f: float = 0.5) -> np.ndarray:
        mask = np.ones(self.n_rows, dtype=bool)
        for mode in self.ahu_modes(deadband_f).values():
            mask &= mode <= 0.0
        return mask


def _mean_rows(arrays: list) -> np.ndarray:
    return np.mean(np.vstack(arrays), axis=0)


def assemble(
    graph: EquipmentGraph,
    binding: PointBinding,
    series_map: dict,
) -> BuildingData:
    """Align all bound series and resolve every fallback the registry allows.

    Refuses to run when a required input has neither a bound point nor a
    fallback: air handler supply temperature, the two building meters, and a
    mixed-air story (measured, or outside air plus damper to estimate one).
    """
    if not series_map:
        raise DisaggError("no trend data to assemble")

    named = {}
    slot_name = {}
    for slot, series in series_map.items():
        name = f"{slot[0]}:{slot[1].value}"
        named[name] = series
        slot_name[slot] = name
    frame = align(named)

    def col(equipment_id, role):
        slot = (equipment_id, role)
        if slot not in slot_name:
            return None
        return frame.column(slot_name[slot])

    bid = graph.building_id
    cooling_meter = col(bid, PointRole.BUILDING_COOLING_POWER)
    heating_meter = col(bid, PointRole.BUILDING_HEATING_POWER)
    if cooling_meter is None or heating_meter is None:
        raise DisaggError("building meter series missing from trend data")
    oat = col(bid, PointRole.OUTSIDE_AIR_TEMP)
    hot_water = col(bid, PointRole.HOT_WATER_SUPPLY_TEMP)

    ts = frame.start + frame.interval_s * np.arange(frame.n_rows, dtype=np.int64)
    schedule = occupancy_schedule(
        ts, graph.occupied_start_s, graph.occupied_end_s, graph.occupied_weekdays_only
    )

    fallbacks: list = []
    warnings = list(graph.warnings) + list(binding.warnings)
    excluded: list = []

    vavs: dict = {}
    for node in graph.vavs:
        vid = node.vav_id
        zone = col(vid, PointRole.ZONE_TEMP)
        flow = col(vid, PointRole.VAV_SUPPLY_FLOW)
        if node.ahu_id is None or zone is None or flow is None:
            excluded.append(vid)
            continue
        supply = col(vid, PointRole.VAV_SUPPLY_AIR_TEMP)
        if supply is None:
            parent_sat = col(node.ahu_id, PointRole.AHU_SUPPLY_AIR_TEMP)
            if parent_sat is None:
                excluded.append(vid)
                warnings.append(f"VAV '{vid}': no discharge temp and no parent AHU temp; excluded")
                continue
            supply = parent_sat
            fallbacks.append((vid, PointRole.VAV_SUPPLY_AIR_TEMP, FALLBACK_PARENT_AHU_SAT))

        occ = col(vid, PointRole.OCCUPIED_CMD)
        if occ is None:
            occ = schedule
            fallbacks.append((vid, PointRole.OCCUPIED_CMD, FALLBACK_SCHEDULE))

        min_flow = col(vid, PointRole.VAV_MIN_FLOW)
        if min_flow is None and node.min_flow_cfm is not None:
            min_flow = np.full(frame.n_rows, float(node.min_flow_cfm))
        zone_upper = col(vid, PointRole.ZONE_UPPER_LIMIT)
        if zone_upper is None and node.zone_upper_limit_f is not None:
            zone_upper = np.full(frame.n_rows, float(node.zone_upper_limit_f))

        vavs[vid] = VavData(
            vav_id=vid,
            ahu_id=node.ahu_id,
            zone_temp=zone,
            flow=flow,
            supply_temp=supply,
            flow_setpoint=col(vid, PointRole.VAV_SUPPLY_FLOW_SETPOINT),
            heating_valve=col(vid, PointRole.VAV_HEATING_VALVE_CMD),
            occupied=occ,
            min_flow=min_flow,
            zone_upper_limit=zone_upper,
        )

    for vid in excluded:
        if not any(vid in w for w in warnings):
            warnings.append(f"VAV '{vid}' excluded from sums (missing flow, zone temp, or AHU)")

    ahus: dict = {}
    for node in graph.ahus:
        aid = node.ahu_id
        supply = col(aid, PointRole.AHU_SUPPLY_AIR_TEMP)
        if supply is None:
            raise DisaggError(f"AHU '{aid}' has no supply air temperature point; cannot model")
        children = [v for v in vavs.values() if v.ahu_id == aid]
        if not children:
            raise DisaggError(f"AHU flow unknown: '{aid}' has no child VAVs with flow data")
        flow_sum = np.sum([v.flow for v in children], axis=0)

        ret = col(aid, PointRole.AHU_RETURN_AIR_TEMP)
        if ret is None:
            ret = _mean_rows([v.zone_temp for v in children])
            fallbacks.append((aid, PointRole.AHU_RETURN_AIR_TEMP, FALLBACK_MEAN_ZONE_TEMPS))

        damper = col(aid, PointRole.ECONOMIZER_DAMPER_POS)
        measured_mix = col(aid, PointRole.AHU_MIXED_AIR_TEMP)
        estimated_mix = None
        if damper is not None and oat is not None:
            estimated_mix = estimate_mixed_air(oat, ret, damper)
        mixed = measured_mix
        if mixed is None:
            if estimated_mix is None:
                raise DisaggError(
                    f"AHU '{aid}' has neither a mixed-air sensor nor outside-air "
                    "temp plus damper to estimate one"
                )
            mixed = estimated_mix
            fallbacks.append((aid, PointRole.AHU_MIXED_AIR_TEMP, FALLBACK_OAT_DAMPER_MIX))

        ahus[aid] = AhuData(
            ahu_id=aid,
            supply_temp=supply,
            return_temp=ret,
            flow_sum=flow_sum,
            mixed_temp=mixed,
            mixed_temp_measured=measured_mix,
            mixed_temp_estimated=estimated_mix,
            damper=damper,
            cooling_valve=col(aid, PointRole.AHU_COOLING_VALVE_CMD),
            heating_valve=col(aid, PointRole.AHU_HEATING_VALVE_CMD),
        )

    if not vavs:
        raise DisaggError("no usable VAVs; nothing to disaggregate")

    return BuildingData(
        graph=graph,
        start=frame.start,
        interval_s=frame.interval_s,
        n_rows=frame.n_rows,
        cooling_meter=cooling_meter,
        heating_meter=heating_meter,
        vavs=vavs,
        ahus=ahus,
        oat=oat,
        hot_water_temp=hot_water,
        fallbacks_used=tuple(fallbacks),
        excluded_vavs=tuple(excluded),
        warnings=tuple(warnings),
    )
