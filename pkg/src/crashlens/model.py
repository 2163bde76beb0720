"""Domain types for in-depth powered-two-wheeler crash cases."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional


class PtwClass(str, Enum):
    L1_MOPED = "L1"
    L3_MOTORCYCLE = "L3"
    MOFA = "MOFA"


class MaidsConfig(str, Enum):
    """The 25 MAIDS crash-group configurations, plus UNKNOWN."""

    PTW_INTO_OV_PERPENDICULAR = "ptw_into_ov_perpendicular"
    OV_INTO_PTW_PERPENDICULAR = "ov_into_ptw_perpendicular"
    OV_TURNING_LEFT_ACROSS_PTW = "ov_turning_left_across_ptw"
    OV_TURNING_RIGHT_ACROSS_PTW = "ov_turning_right_across_ptw"
    OPPOSITE_OV_TURNS_PTW_IMPACTING = "opposite_ov_turns_ptw_impacting"
    OPPOSITE_OV_TURNS_OV_IMPACTING = "opposite_ov_turns_ov_impacting"
    PTW_OVERTAKING_OV_TURNING_LEFT = "ptw_overtaking_ov_turning_left"
    OV_U_TURN_AHEAD_OF_PTW = "ov_u_turn_ahead_of_ptw"
    SIDESWIPE_SAME_DIRECTION = "sideswipe_same_direction"
    PTW_OVERTAKING_OV_TURNING_RIGHT = "ptw_overtaking_ov_turning_right"
    PTW_IMPACTING_REAR_OF_OV = "ptw_impacting_rear_of_ov"
    HEAD_ON = "head_on"
    SIDESWIPE_OPPOSITE_DIRECTION = "sideswipe_opposite_direction"
    PTW_FALLING_NO_OV = "ptw_falling_no_ov"
    PTW_RUNNING_OFF_NO_OV = "ptw_running_off_no_ov"
    OTHER_PTW_NO_OV = "other_ptw_no_ov"
    PTW_FALLING_AVOIDING_OV = "ptw_falling_avoiding_ov"
    OV_IMPACTING_REAR_OF_PTW = "ov_impacting_rear_of_ptw"
    PTW_IMPACTING_OBJECT = "ptw_impacting_object"
    OTHER_PTW_OV_IMPACT = "other_ptw_ov_impact"
    PTW_IMPACTING_PEDESTRIAN_OR_ANIMAL = "ptw_impacting_pedestrian_or_animal"
    PTW_TURNING_LEFT_ACROSS_OV = "ptw_turning_left_across_ov"
    OV_FAILING_TO_YIELD = "ov_failing_to_yield"
    PTW_RUNNING_OFF_AVOIDING_OV = "ptw_running_off_avoiding_ov"
    PTW_TURNING_RIGHT_ACROSS_OV = "ptw_turning_right_across_ov"
    UNKNOWN = "unknown"


class MergedConfig(str, Enum):
    SCP_LD = "SCP_LD"
    TIP_LD = "TIP_LD"
    TAP_OD = "TAP_OD"
    TAP_SD = "TAP_SD"
    RE_SD = "RE_SD"
    HS_OD = "HS_OD"
    SV = "SV"
    OTHER = "OTHER"

    @property
    def label(self) -> str:
        return "OTHER" if self is MergedConfig.OTHER else self.value.replace("_", "/")


SELECTED_CONFIGS = tuple(c for c in MergedConfig if c is not MergedConfig.OTHER)


class Actor(str, Enum):
    RIDER_MC = "RIDER_MC"
    DRIVER_OV = "DRIVER_OV"
    ENVIRONMENT = "ENVIRONMENT"
    OTHER = "OTHER"

    @property
    def is_human(self) -> bool:
        return self in (Actor.RIDER_MC, Actor.DRIVER_OV)


class Stage(str, Enum):
    DETECTION = "DETECTION"
    COMPREHENSION = "COMPREHENSION"
    DECISION = "DECISION"
    EXECUTION = "EXECUTION"
    UNKNOWN_TYPE = "UNKNOWN_TYPE"


class FactorDetail(str, Enum):
    VIEW_OBSTRUCTION = "VIEW_OBSTRUCTION"
    ADVERSE_WEATHER = "ADVERSE_WEATHER"
    ROADWAY_MAINTENANCE_DEFECT = "ROADWAY_MAINTENANCE_DEFECT"
    ROADWAY_DESIGN_DEFECT = "ROADWAY_DESIGN_DEFECT"
    ROADSIDE_ENVIRONMENT = "ROADSIDE_ENVIRONMENT"
    TEMPORARY_TRAFFIC_CONTROL = "TEMPORARY_TRAFFIC_CONTROL"
    TRAFFIC_OBSTRUCTION = "TRAFFIC_OBSTRUCTION"
    UNINVOLVED_OV_MANEUVER = "UNINVOLVED_OV_MANEUVER"
    OV_AVOIDING_COLLISION = "OV_AVOIDING_COLLISION"
    PTW_AVOIDING_COLLISION = "PTW_AVOIDING_COLLISION"
    OV_POST_CRASH_MOTION = "OV_POST_CRASH_MOTION"
    PTW_MAINTENANCE_PROBLEM = "PTW_MAINTENANCE_PROBLEM"
    OTHER = "OTHER"


class Action(str, Enum):
    BRAKE = "BRAKE"
    SWERVE = "SWERVE"
    NO_ACTION = "NO_ACTION"
    OTHER = "OTHER"
    UNKNOWN = "UNKNOWN"


class Quality(str, Enum):
    PROPER = "PROPER"
    IMPROPER = "IMPROPER"
    UNKNOWN = "UNKNOWN"


class Alignment(str, Enum):
    STRAIGHT = "STRAIGHT"
    CURVE_LEFT = "CURVE_LEFT"
    CURVE_RIGHT = "CURVE_RIGHT"
    CORNER = "CORNER"
    JOG = "JOG"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class ContributingFactor:
    actor: Actor
    stage: Optional[Stage] = None
    detail: Optional[FactorDetail] = None

    @property
    def key(self) -> str:
        """Stable 'ACTOR.STAGE' or 'ACTOR.DETAIL' label used in tables and profiles."""
        part = self.stage if self.actor.is_human else self.detail
        return f"{self.actor.value}.{part.value if part is not None else 'UNSET'}"

    @classmethod
    def from_key(cls, key: str) -> "ContributingFactor":
        actor_s, _, part = key.partition(".")
        actor = Actor(actor_s)
        if actor.is_human:
            return cls(actor, stage=Stage(part))
        return cls(actor, detail=FactorDetail(part))


@dataclass(frozen=True)
class EvasiveResponse:
    action: Action
    selection_quality: Quality = Quality.UNKNOWN
    execution_quality: Quality = Quality.UNKNOWN


@dataclass(frozen=True)
class CrashRecord:
    case_id: str
    ptw_class: PtwClass
    mais: Optional[int]
    maids_config: MaidsConfig
    primary_factor: Optional[ContributingFactor] = None
    evasive: Optional[EvasiveResponse] = None
    alignment: Alignment = Alignment.UNKNOWN
    posted_speed_kmh: Optional[float] = None
    impact_speed_kmh: Optional[float] = None
    tpei_s: Optional[float] = None
    rider_impairment_primary: bool = False
    mechanical_primary: bool = False


@dataclass(frozen=True)
class Violation:
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.field}: {self.reason}"


def validate_record(record: CrashRecord) -> list[Violation]:
    """Return every invariant violation in ``record``; an empty list means accepted."""
    out: list[Violation] = []
    if not record.case_id:
        out.append(Violation("case_id", "empty identifier"))
    if record.mais is not None and not 0 <= record.mais <= 6:
        out.append(Violation("mais", "mais out of range"))
    if record.posted_speed_kmh is not None and not record.posted_speed_kmh > 0:
        out.append(Violation("posted_speed_kmh", "posted speed must be positive"))
    if record.impact_speed_kmh is not None and record.impact_speed_kmh < 0:
        out.append(Violation("impact_speed_kmh", "negative speed"))
    if record.tpei_s is not None and record.tpei_s < 0:
        out.append(Violation("tpei_s", "negative time"))

    factor = record.primary_factor
    if factor is not None:
        if factor.actor.is_human and factor.stage is None:
            out.append(Violation("factor_stage", "stage required for rider/driver failure"))
        if not factor.actor.is_human and factor.detail is None:
            out.append(Violation("factor_detail", "detail required for environment/other factor"))

    ev = record.evasive
    if ev is not None and ev.action is Action.NO_ACTION:
        if ev.selection_quality is not Quality.UNKNOWN:
            out.append(Violation("evasive_selection", "selection not assessable without action"))
        if ev.execution_quality is not Quality.UNKNOWN:
            out.append(Violation("evasive_execution", "execution not assessable without action"))
    return out


def is_severe(record: CrashRecord) -> Optional[bool]:
    """MAIS3+ dichotomy; ``None`` when the injury score is missing."""
    if record.mais is None:
        return None
    return record.mais >= 3
