import json
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from importlib import import_module
from typing import Dict, List, Optional, Tuple

from fusion_framework.core.errors import InvalidScenarioError
from fusion_framework.core.records import ActivityLabel

SCENARIO_PACKAGE = "fusion_framework.scenarios"

DEFAULT_ORIGIN = (45.784, 4.873)
DEFAULT_VENUES = {"office": (0.0, 0.0)}


@dataclass(frozen=True)
class HrProfile:
    """Heart-rate shift of one phase relative to each subject's baseline.

    Every subject gets ``plateau_bpm``; ``bout_bpm`` is added while walking and
    for ``recovery_s`` afterwards. A random ``stressed_subjects`` count of
    subjects draws its extra shift from ``stressed_bpm``, the others from
    ``others_bpm``. ``rr_sd_scale`` multiplies the beat-to-beat noise.
    """

    plateau_bpm: float = 0.0
    bout_bpm: float = 0.0
    recovery_s: float = 420.0
    stressed_subjects: Tuple[int, int] = (0, 0)
    stressed_bpm: Tuple[float, float] = (0.0, 0.0)
    others_bpm: Tuple[float, float] = (0.0, 0.0)
    rr_sd_scale: float = 1.0


@dataclass(frozen=True)
class MotionProfile:
    """Where a phase is spent; an optional walk to ``destination`` after ``lead_s``.

    With ``return_trip`` the group walks back so that it is home ``lead_s``
    before the phase ends.
    """

    venue: str = "office"
    destination: Optional[str] = None
    lead_s: float = 420.0
    return_trip: bool = False
    speed_mps: float = 1.4
    at_desks: bool = False


@dataclass(frozen=True)
class PhaseSpec:
    label: ActivityLabel
    duration_s: float
    hr_profile: HrProfile = field(default_factory=HrProfile)
    motion_profile: MotionProfile = field(default_factory=MotionProfile)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    subjects: int
    phases: Tuple[PhaseSpec, ...]
    seed: int
    start_epoch_ms: int = 1456387200000
    origin: Tuple[float, float] = DEFAULT_ORIGIN
    # venue name -> (north_m, east_m) from the origin
    venues: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_VENUES))
    baseline_rr_ms: float = 850.0
    rr_sd_ms: float = 30.0
    fix_interval_s: float = 10.0
    outdoor_accuracy_m: Tuple[float, float] = (4.0, 50.0)
    indoor_accuracy_m: Tuple[float, float] = (50.0, 1200.0)
    jitter_fraction: float = 0.1
    latency_ms: int = 20
    jitter_ms: int = 30
    drop_rate: float = 0.0005
    offset_bound_ms: int = 2000
    desk_spacing_m: float = 3.0

    @property
    def duration_s(self) -> float:
        return sum(p.duration_s for p in self.phases)

    def validate(self) -> None:
        if not self.name:
            raise InvalidScenarioError("scenario needs a name")
        if isinstance(self.subjects, bool) or not isinstance(self.subjects, int) or self.subjects < 1:
            raise InvalidScenarioError(f"subjects must be a positive integer, got {self.subjects!r}")
        if not self.phases:
            raise InvalidScenarioError(f"scenario '{self.name}' has no phases")
        for phase in self.phases:
            if not isinstance(phase.label, ActivityLabel):
                raise InvalidScenarioError(f"unknown phase label {phase.label!r}")
            if not phase.duration_s > 0:
                raise InvalidScenarioError(f"phase '{phase.label.value}' needs a positive duration")
            motion = phase.motion_profile
            for venue in (motion.venue, motion.destination):
                if venue is not None and venue not in self.venues:
                    raise InvalidScenarioError(f"unknown venue '{venue}' in phase '{phase.label.value}'")
            if motion.destination is not None:
                if not motion.speed_mps > 0:
                    raise InvalidScenarioError("walking speed must be positive")
                walk_s = walk_duration_s(self, motion)
                legs = 2 if motion.return_trip else 1
                if legs * (motion.lead_s + walk_s) > phase.duration_s:
                    raise InvalidScenarioError(
                        f"walk of phase '{phase.label.value}' does not fit in {phase.duration_s:.0f} s"
                    )
            low, high = phase.hr_profile.stressed_subjects
            if low < 0 or high < low:
                raise InvalidScenarioError("stressed_subjects must be a non-decreasing pair")
        for low, high in (self.outdoor_accuracy_m, self.indoor_accuracy_m):
            if not 0 < low <= high:
                raise InvalidScenarioError("accuracy ranges must be positive and ordered")
        if self.jitter_ms < 0 or self.latency_ms < 0 or not 0 <= self.drop_rate < 1:
            raise InvalidScenarioError("latency, jitter and drop rate must be non-negative")


def venue_distance_m(spec: ScenarioSpec, a: str, b: str) -> float:
    (n1, e1), (n2, e2) = spec.venues[a], spec.venues[b]
    return ((n2 - n1) ** 2 + (e2 - e1) ** 2) ** 0.5


def walk_duration_s(spec: ScenarioSpec, motion: MotionProfile) -> float:
    return venue_distance_m(spec, motion.venue, motion.destination) / motion.speed_mps


class BaseScenario(ABC):
    """
    An abstract base class for scenario definitions.

    A scenario module ``<name>_scenario.py`` holds one subclass; its settings
    are read from ``<name>_scenario.json`` beside the module.
    """

    def __init__(self, settings: Optional[dict] = None):
        self.settings = settings or {}

    @abstractmethod
    def get_phases(self) -> List[PhaseSpec]:
        """
        Builds the ordered phases of the scenario from its settings.
        """
        pass

    def get_spec(self, seed: int, start_epoch_ms: int = 1456387200000) -> ScenarioSpec:
        settings = self.settings
        venues = {name: tuple(pos) for name, pos in settings.get("venues", DEFAULT_VENUES).items()}
        spec = ScenarioSpec(
            name=settings.get("name", type(self).__name__),
            subjects=settings.get("subjects", 4),
            phases=tuple(self.get_phases()),
            seed=seed,
            start_epoch_ms=start_epoch_ms,
            origin=tuple(settings.get("origin", DEFAULT_ORIGIN)),
            venues=venues,
            **{k: settings[k] for k in _SPEC_OVERRIDES if k in settings},
        )
        spec.validate()
        return spec


_SPEC_OVERRIDES = (
    "baseline_rr_ms",
    "rr_sd_ms",
    "fix_interval_s",
    "jitter_fraction",
    "latency_ms",
    "jitter_ms",
    "drop_rate",
    "offset_bound_ms",
    "desk_spacing_m",
)


def hr_profile_from_settings(values: Optional[dict]) -> HrProfile:
    values = dict(values or {})
    for name in ("stressed_subjects", "stressed_bpm", "others_bpm"):
        if name in values:
            values[name] = tuple(values[name])
    try:
        return HrProfile(**values)
    except TypeError as e:
        raise InvalidScenarioError(f"bad hr profile settings: {e}") from e


def motion_profile_from_settings(values: Optional[dict]) -> MotionProfile:
    try:
        return MotionProfile(**(values or {}))
    except TypeError as e:
        raise InvalidScenarioError(f"bad motion profile settings: {e}") from e


def phases_from_settings(settings: dict) -> List[PhaseSpec]:
    """Phases listed as ``{"label", "duration_s", "hr", "motion"}`` objects."""
    phases = []
    for entry in settings.get("phases", []):
        try:
            label = ActivityLabel(entry["label"])
            duration = float(entry["duration_s"])
        except (KeyError, ValueError, TypeError) as e:
            raise InvalidScenarioError(f"bad phase entry {entry!r}: {e}") from e
        phases.append(
            PhaseSpec(
                label,
                duration,
                hr_profile_from_settings(entry.get("hr")),
                motion_profile_from_settings(entry.get("motion")),
            )
        )
    return phases


def available_scenarios() -> List[str]:
    directory = os.path.dirname(__file__)
    return sorted(f[: -len("_scenario.py")] for f in os.listdir(directory) if f.endswith("_scenario.py"))


def load_scenario(name: str) -> BaseScenario:
    """Finds the ``BaseScenario`` subclass of ``<name>_scenario`` and its settings."""
    module_name = f"{SCENARIO_PACKAGE}.{name}_scenario"
    try:
        scenario_module = import_module(module_name)
    except ImportError:
        raise InvalidScenarioError(
            f"unknown scenario '{name}' (available: {', '.join(available_scenarios())})"
        ) from None

    scenario_class = None
    for obj in scenario_module.__dict__.values():
        try:
            if issubclass(obj, BaseScenario) and obj is not BaseScenario:
                scenario_class = obj
                break
        except TypeError:
            continue
    if scenario_class is None:
        raise InvalidScenarioError(f"no BaseScenario subclass in {module_name}")

    settings_path = os.path.join(os.path.dirname(scenario_module.__file__), f"{name}_scenario.json")
    if os.path.exists(settings_path):
        with open(settings_path, "r") as f:
            settings = json.load(f)
    else:
        settings = {}
    settings.setdefault("name", name)
    return scenario_class(settings)
