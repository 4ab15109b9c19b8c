import json
import tempfile

import pytest
from hypothesis import given, settings, strategies as st

from fusion_framework.core.errors import MalformedRecordError, UnknownKindError
from fusion_framework.core.records import GpsFix, HrvWindow, RecordKind, RrSample, SyncBatch
from fusion_framework.ingest.ban_ingest import build_sync_batch
from fusion_framework.storage.store import Store
from tests.helpers import rr_samples


def rr_batch(n, device_id="subject1", first_seq=0, start=10_000):
    samples = [
        RrSample(device_id, first_seq + i, 850, start + (first_seq + i) * 850) for i in range(n)
    ]
    return build_sync_batch(device_id, -1, samples)


def test_fresh_batch_then_duplicate(tmp_path):
    store = Store.open(str(tmp_path))
    batch = rr_batch(100)
    assert store.merge_batch(batch) == (100, 0)
    assert store.merge_batch(batch) == (0, 100)
    assert len(store) == 100


def test_duplicates_inside_one_batch(tmp_path):
    store = Store.open(str(tmp_path))
    sample = RrSample("subject1", 0, 850, 10_850)
    assert store.merge_batch(SyncBatch("subject1", (sample, sample), 0, (10_850, 10_850))) == (1, 1)


def test_malformed_record_leaves_store_unchanged(tmp_path):
    store = Store.open(str(tmp_path))
    store.merge_batch(rr_batch(5))
    before = store.state()
    records = rr_batch(5, first_seq=5).records + (RrSample("subject1", 10, 100, 99_000),)
    with pytest.raises(MalformedRecordError):
        store.merge_batch(SyncBatch("subject1", records, 0, (0, 99_000)))
    assert store.state() == before
    assert len(store) == 5


def test_foreign_device_in_batch_is_malformed(tmp_path):
    store = Store.open(str(tmp_path))
    records = rr_batch(2).records + (RrSample("subject2", 0, 850, 10_000),)
    with pytest.raises(MalformedRecordError):
        store.merge_batch(SyncBatch("subject1", records))
    assert len(store) == 0


def test_query_empty_store(tmp_path):
    store = Store.open(str(tmp_path))
    assert store.query("subject1", RecordKind.RR_SAMPLE) == []
    assert store.last_timestamp("subject1", "rr") is None
    assert store.devices() == []


def test_query_range(tmp_path):
    store = Store.open(str(tmp_path))
    samples = [
        RrSample("subject1", 0, 850, 1000),
        RrSample("subject1", 1, 850, 1850),
        RrSample("subject1", 2, 850, 2700),
    ]
    store.merge_batch(build_sync_batch("subject1", -1, samples[::-1]))
    assert store.query("subject1", "rr", 1500, 3000) == samples[1:]
    assert store.query("subject1", "rr", 1000, 1850) == samples[:1]
    assert store.query("subject1", "rr") == store.query("subject1", "rr")
    with pytest.raises(ValueError):
        store.query("subject1", "rr", 3000, 1000)


def test_query_unknown_kind(tmp_path):
    store = Store.open(str(tmp_path))
    with pytest.raises(UnknownKindError):
        store.query("subject1", "nonsense")
    with pytest.raises(UnknownKindError):
        store.query("subject1", RecordKind.RECONSTRUCTED_BEAT)


def test_query_matches_file_scan(tmp_path):
    store = Store.open(str(tmp_path))
    store.merge_batch(rr_batch(40))
    store.merge_batch(rr_batch(40, first_seq=20))
    store.flush()

    start, end = 20_000, 40_000
    with open(tmp_path / "subject1.rr.jsonl") as f:
        scanned = [RrSample.from_dict(json.loads(line)["body"]) for line in f]
    expected = sorted(
        (s for s in scanned if start <= s.reception_ts < end), key=lambda s: (s.reception_ts, s.seq)
    )
    assert len(scanned) == 60
    assert store.query("subject1", RecordKind.RR_SAMPLE, start, end) == expected


def test_reopen_gives_identical_results(tmp_path):
    records = rr_samples([850, 870, 840], [4, -3, 0]) + [
        GpsFix("subject1", 11_000, 45.7841234, 4.8731234, 12.5),
        HrvWindow("subject1", 0, 300_000, 340, 71.2, 44.1, 30.5, 512.25, 301.0, 1.7018, 62.98),
    ]
    with Store.open(str(tmp_path)) as store:
        store.merge_batch(build_sync_batch("subject1", -1, records))
        expected_state = store.state()
        expected = {kind: store.query("subject1", kind) for kind in ("rr", "gps", "hrv")}

    reopened = Store.open(str(tmp_path))
    assert reopened.state() == expected_state
    assert {kind: reopened.query("subject1", kind) for kind in ("rr", "gps", "hrv")} == expected
    for name, lines in expected_state.items():
        assert (tmp_path / name).read_text().splitlines() == lines


def test_reopen_rejects_corrupt_file(tmp_path):
    (tmp_path / "subject1.rr.jsonl").write_text('{"body": {"device_id": "subject1"}, "received_at": 0}\n')
    with pytest.raises(MalformedRecordError):
        Store.open(str(tmp_path))


def test_disjoint_batches_commute(tmp_path):
    a = rr_batch(30)
    b = build_sync_batch(
        "subject2", -1, [GpsFix("subject2", 1000 * i, 45.784, 4.873, 6.0) for i in range(10)]
    )
    first = Store.open(str(tmp_path / "ab"))
    first.merge_batches([a, b])
    second = Store.open(str(tmp_path / "ba"))
    second.merge_batches([b, a])
    assert first.state() == second.state()
    assert first.devices() == ["subject1", "subject2"]


def test_last_timestamp(tmp_path):
    store = Store.open(str(tmp_path))
    store.merge_batch(rr_batch(10))
    assert store.last_timestamp("subject1", RecordKind.RR_SAMPLE) == 10_000 + 9 * 850
    assert store.last_timestamp("subject1", RecordKind.GPS_FIX) is None


def test_snapshot_is_isolated_from_later_merges(tmp_path):
    store = Store.open(str(tmp_path))
    store.merge_batch(rr_batch(5))
    snapshot = store.snapshot()
    store.merge_batch(rr_batch(5, first_seq=5))
    assert len(snapshot.query("subject1", "rr")) == 5
    assert len(store.query("subject1", "rr")) == 10


@settings(max_examples=50)
@given(st.lists(st.integers(min_value=0, max_value=200), min_size=1, max_size=60, unique=True))
def test_merge_is_idempotent(seqs):
    samples = [RrSample("subject1", seq, 900, 5000 + seq * 900) for seq in sorted(seqs)]
    batch = build_sync_batch("subject1", -1, samples)
    with tempfile.TemporaryDirectory() as directory:
        store = Store.open(directory)
        assert store.merge_batch(batch) == (len(samples), 0)
        once = store.state()
        assert store.merge_batch(batch) == (0, len(samples))
        assert store.state() == once
