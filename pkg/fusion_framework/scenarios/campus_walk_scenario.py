from typing import List

from fusion_framework.scenarios.base_scenario import BaseScenario, PhaseSpec, phases_from_settings


class CampusWalkScenario(BaseScenario):
    """
    One subject rests at a desk, walks to another building and climbs the
    stairs, then rests there. Exertion lowers beat-to-beat variability.
    """

    def get_phases(self) -> List[PhaseSpec]:
        return phases_from_settings(self.settings)
