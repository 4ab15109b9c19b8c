from typing import List

from fusion_framework.core.records import ActivityLabel
from fusion_framework.scenarios.base_scenario import (
    BaseScenario,
    MotionProfile,
    PhaseSpec,
    hr_profile_from_settings,
)


class LunchScenario(BaseScenario):
    """
    A group lunch: walk to a nearby restaurant and back, a card game, then desk work.

    The walk is a social physical activity with two bouts, the card game a
    social cognitive one stressing only one or two players, and the desk work
    the rest period.
    """

    def get_phases(self) -> List[PhaseSpec]:
        durations = self.settings.get("durations_s", {})
        walk = self.settings.get("walk", {})
        return [
            PhaseSpec(
                ActivityLabel.PHYSICAL,
                float(durations.get("physical", 2400)),
                hr_profile_from_settings(self.settings.get("physical_hr", {"plateau_bpm": 6, "bout_bpm": 8})),
                MotionProfile(
                    venue="office",
                    destination=walk.get("destination", "restaurant"),
                    lead_s=float(walk.get("lead_s", 420)),
                    return_trip=True,
                    speed_mps=float(walk.get("speed_mps", 1.4)),
                ),
            ),
            PhaseSpec(
                ActivityLabel.COGNITIVE,
                float(durations.get("cognitive", 2400)),
                hr_profile_from_settings(
                    self.settings.get(
                        "cognitive_hr",
                        {"stressed_subjects": [1, 2], "stressed_bpm": [8, 12], "others_bpm": [2, 4]},
                    )
                ),
                MotionProfile(venue="office"),
            ),
            PhaseSpec(
                ActivityLabel.REST,
                float(durations.get("rest", 7200)),
                hr_profile_from_settings(self.settings.get("rest_hr")),
                MotionProfile(venue="office", at_desks=True),
            ),
        ]
