import threading
from collections import defaultdict
from typing import Dict, List, Optional

from fusion_framework.core.records import RecordKind
from fusion_framework.core.topic_bus import Subscription, TopicBus, TopicEnvelope


class EventCollector:
    """A passive subscriber that records every envelope of every topic it joins.

    The report bundle is rebuilt from what the collector saw, so the reports
    depend only on what the stages published.
    """

    def __init__(self, subscriber_id: str = "report-writer"):
        self.subscriber_id = subscriber_id
        self._events: Dict[str, List[TopicEnvelope]] = defaultdict(list)
        self._subscriptions: List[Subscription] = []
        self._lock = threading.Lock()

    def attach(self, bus: TopicBus) -> None:
        """Subscribes to every topic currently registered on ``bus``."""
        for topic in bus.topics:
            self._subscriptions.append(
                bus.subscribe(topic, self.subscriber_id, callback=self.event_consumer)
            )

    def event_consumer(self, envelope: TopicEnvelope) -> None:
        with self._lock:
            self._events[envelope.topic_name].append(envelope)

    def get_events_log(self) -> Dict[str, List[TopicEnvelope]]:
        with self._lock:
            return {name: list(envelopes) for name, envelopes in self._events.items()}

    def payloads(self, kind: RecordKind, publisher_id: Optional[str] = None) -> Dict[str, list]:
        """Payloads grouped by subject for every ``<kind>/<subject>`` topic, in topic order.

        With ``publisher_id`` only that publisher's envelopes are kept.
        """
        prefix = f"{kind.value}/"
        with self._lock:
            return {
                name[len(prefix):]: [
                    e.payload for e in envelopes if publisher_id is None or e.publisher_id == publisher_id
                ]
                for name, envelopes in sorted(self._events.items())
                if name.startswith(prefix)
            }

    def clear_events_log(self) -> None:
        with self._lock:
            self._events.clear()

    @property
    def delivery_count(self) -> int:
        return sum(s.delivery_count for s in self._subscriptions)
