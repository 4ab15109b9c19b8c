from typing import List

from fusion_framework.scenarios.base_scenario import BaseScenario, PhaseSpec, phases_from_settings


class RestaurantTripScenario(BaseScenario):
    """
    Four subjects walk to a restaurant, have lunch there and walk back; used
    for co-location and movement detection.
    """

    def get_phases(self) -> List[PhaseSpec]:
        return phases_from_settings(self.settings)
