"""In-process publisher/subscriber bus.

Topics are the abstraction layer between producers and consumers: a
subscriber only knows a topic name, so the publisher behind it can be
swapped without touching the subscriber side. Topic names follow the
``kind/subject-id`` convention, e.g. ``rr/subject1``.
"""

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Deque, Dict, List, Optional, Union

from fusion_framework.core.errors import (
    DuplicateTopicError,
    EmptyTopicNameError,
    SchemaMismatchError,
    UnknownKindError,
    UnknownTopicError,
)
from fusion_framework.core.records import RecordKind, record_kind

logger = logging.getLogger(__name__)

DEFAULT_PUBLISHER = "default"


def wall_clock_ms() -> int:
    return time.time_ns() // 1_000_000


def topic_name(kind: RecordKind, subject_id: str) -> str:
    return f"{kind.value}/{subject_id}"


@dataclass(frozen=True)
class TopicEnvelope:
    topic_name: str
    publish_ts: int
    sequence: int
    publisher_id: str
    payload: Any


class Subscription:
    """A subscriber's queue on one topic.

    Envelopes published after the subscription are delivered exactly once, in
    publish order: handed to the callback when one is given, queued otherwise.
    Callbacks run outside every bus lock; a failing callback is logged and
    does not stop delivery to the other subscribers.
    """

    def __init__(
        self,
        topic_name: str,
        subscriber_id: str,
        high_water: int,
        callback: Optional[Callable[[TopicEnvelope], None]] = None,
    ):
        self.topic_name = topic_name
        self.subscriber_id = subscriber_id
        self.delivery_count = 0
        self.active = True
        self._callback = callback
        self._high_water = high_water
        self._above_high_water = False
        self._queue: Deque[TopicEnvelope] = deque()
        # envelopes accepted for the callback but not yet handed over
        self._inbox: Deque[TopicEnvelope] = deque()
        self._dispatching = False
        self._lock = threading.Lock()

    def _accept(self, envelope: TopicEnvelope) -> bool:
        """Takes ``envelope`` in publish order; True when a callback dispatch is due."""
        with self._lock:
            if self._callback is not None:
                self._inbox.append(envelope)
                return True
            self._queue.append(envelope)
            self.delivery_count += 1
            depth = len(self._queue)
            if depth > self._high_water and not self._above_high_water:
                self._above_high_water = True
                logger.warning(
                    "Subscriber %s on %s exceeded high-water mark (%d pending)",
                    self.subscriber_id,
                    self.topic_name,
                    depth,
                )
            return False

    def _dispatch(self) -> None:
        """Hands the inbox to the callback; one thread at a time, in order."""
        with self._lock:
            if self._dispatching:
                return
            self._dispatching = True
        while True:
            with self._lock:
                if not self._inbox:
                    self._dispatching = False
                    return
                envelope = self._inbox.popleft()
                self.delivery_count += 1
            try:
                self._callback(envelope)
            except Exception:
                logger.exception(
                    "Subscriber %s failed on %s #%d", self.subscriber_id, envelope.topic_name, envelope.sequence
                )

    @property
    def pending(self) -> int:
        with self._lock:
            return len(self._queue)

    def get(self) -> Optional[TopicEnvelope]:
        """Pops the oldest pending envelope, or None when the queue is empty."""
        with self._lock:
            if not self._queue:
                return None
            envelope = self._queue.popleft()
            self._reset_high_water()
            return envelope

    def drain(self) -> List[TopicEnvelope]:
        with self._lock:
            envelopes = list(self._queue)
            self._queue.clear()
            self._reset_high_water()
            return envelopes

    def _reset_high_water(self) -> None:
        if self._above_high_water and len(self._queue) <= self._high_water:
            self._above_high_water = False

    def __repr__(self) -> str:
        return (
            f"Subscription(topic={self.topic_name!r}, subscriber={self.subscriber_id!r}, "
            f"delivered={self.delivery_count})"
        )


class Topic:
    """Handle for a registered topic. Safe to pass between threads."""

    def __init__(self, name: str, schema_kind: RecordKind):
        self.name = name
        self.schema_kind = schema_kind
        self.envelopes: List[TopicEnvelope] = []
        self._subscriptions: List[Subscription] = []
        self._sequences: Dict[str, int] = {}
        self._last_publish_ts: Dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return sum(1 for s in self._subscriptions if s.active)

    def __repr__(self) -> str:
        return f"Topic({self.name!r}, {self.schema_kind.value}, subscribers={self.subscriber_count})"


TopicRef = Union[Topic, str]


class TopicBus:
    """Registry of topics plus the publish/subscribe entry points."""

    def __init__(self, high_water: int = 10000, clock: Callable[[], int] = wall_clock_ms):
        self.high_water = high_water
        self._clock = clock
        self._topics: Dict[str, Topic] = {}
        self._lock = threading.Lock()

    @property
    def topics(self) -> List[Topic]:
        with self._lock:
            return list(self._topics.values())

    def create_topic(self, name: str, schema_kind: RecordKind) -> Topic:
        if not name:
            raise EmptyTopicNameError("topic name must be non-empty")
        if not isinstance(schema_kind, RecordKind):
            raise UnknownKindError(f"unknown schema kind {schema_kind!r}")
        with self._lock:
            if name in self._topics:
                raise DuplicateTopicError(f"topic '{name}' already registered")
            topic = Topic(name, schema_kind)
            self._topics[name] = topic
        logger.debug("Created topic %s (%s)", name, schema_kind.value)
        return topic

    def get_topic(self, ref: TopicRef) -> Topic:
        name = ref.name if isinstance(ref, Topic) else ref
        with self._lock:
            topic = self._topics.get(name)
        if topic is None or (isinstance(ref, Topic) and topic is not ref):
            raise UnknownTopicError(f"unknown topic '{name}'")
        return topic

    def publish(
        self,
        ref: TopicRef,
        payload: Any,
        publisher_id: str = DEFAULT_PUBLISHER,
        publish_ts: Optional[int] = None,
    ) -> TopicEnvelope:
        topic = self.get_topic(ref)
        try:
            kind = record_kind(payload)
        except UnknownKindError as e:
            raise SchemaMismatchError(str(e)) from e
        if kind is not topic.schema_kind:
            raise SchemaMismatchError(
                f"topic '{topic.name}' carries {topic.schema_kind.value}, got {kind.value}"
            )
        with topic._lock:
            sequence = topic._sequences.get(publisher_id, -1) + 1
            topic._sequences[publisher_id] = sequence
            ts = self._clock() if publish_ts is None else int(publish_ts)
            # publish_ts never goes backwards for a given publisher
            ts = max(ts, topic._last_publish_ts.get(publisher_id, ts))
            topic._last_publish_ts[publisher_id] = ts
            envelope = TopicEnvelope(topic.name, ts, sequence, publisher_id, payload)
            topic.envelopes.append(envelope)
            due = [s for s in topic._subscriptions if s.active and s._accept(envelope)]
        for subscription in due:
            subscription._dispatch()
        return envelope

    def subscribe(
        self,
        ref: TopicRef,
        subscriber_id: str,
        callback: Optional[Callable[[TopicEnvelope], None]] = None,
    ) -> Subscription:
        """Subscribes to envelopes published from now on; nothing is replayed."""
        topic = self.get_topic(ref)
        subscription = Subscription(topic.name, subscriber_id, self.high_water, callback)
        with topic._lock:
            topic._subscriptions.append(subscription)
        logger.debug("Subscribed %s to %s", subscriber_id, topic.name)
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        topic = self.get_topic(subscription.topic_name)
        with topic._lock:
            subscription.active = False
            topic._subscriptions = [s for s in topic._subscriptions if s is not subscription]
