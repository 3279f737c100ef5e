"""Record store: JSONL round trip, fixed key order, append/rewrite."""

from __future__ import annotations

import json

import pytest

from sinq.model import Winner
from sinq.store import (
    RECORD_SCHEMA,
    RecordStore,
    StoreError,
    TranscriptLog,
    record_from_dict,
    record_to_dict,
    record_to_line,
)
from conftest import make_record, make_transcript as _transcript


class TestSerialization:
    def test_round_trip_identity(self):
        record = make_record()
        assert record_from_dict(record_to_dict(record)) == record

    def test_schema_field_first_and_fixed_key_order(self):
        line = record_to_line(make_record())
        data = json.loads(line)
        assert list(data)[0] == "schema"
        assert data["schema"] == RECORD_SCHEMA
        assert list(data) == [
            "schema", "record_id", "round_label", "created_at", "agent_versions",
            "instance", "alice_transcript", "bob_samples", "winner", "difficulty_history",
        ]

    def test_line_is_deterministic(self):
        assert record_to_line(make_record()) == record_to_line(make_record())

    def test_unknown_schema_rejected(self):
        data = record_to_dict(make_record())
        data["schema"] = "sinq_record_v999"
        with pytest.raises(StoreError):
            record_from_dict(data)

    def test_inconsistent_difficulty_rejected(self):
        data = record_to_dict(make_record())
        data["instance"]["difficulty"]["n_correct"] = 9
        data["instance"]["difficulty"]["difficulty"] = 1.0
        with pytest.raises((StoreError, ValueError)):
            record_from_dict(data)

    def test_winner_aggregation(self):
        assert make_record(n_correct=1).winner is Winner.BOB
        assert make_record(n_correct=0).winner is Winner.ALICE


class TestRecordStore:
    def test_append_and_load(self, tmp_path):
        store = RecordStore(tmp_path / "games.jsonl")
        r1, r2 = make_record(4, tid="a" * 16), make_record(0, tid="b" * 16)
        store.append(r1)
        store.append(r2)
        assert store.load() == [r1, r2]

    def test_source_ids_for_resume(self, tmp_path):
        store = RecordStore(tmp_path / "games.jsonl")
        store.append(make_record())
        assert store.source_ids() == {"mbpp-tttttt"}

    def test_missing_file_is_empty(self, tmp_path):
        assert RecordStore(tmp_path / "absent.jsonl").load() == []

    def test_rewrite_replaces_atomically(self, tmp_path):
        store = RecordStore(tmp_path / "games.jsonl")
        store.append(make_record(4))
        updated = make_record(10)
        store.rewrite([updated])
        assert store.load() == [updated]
        assert len(list(tmp_path.iterdir())) == 1  # no temp file left behind

    def test_corrupt_line_reports_location(self, tmp_path):
        path = tmp_path / "games.jsonl"
        path.write_text("not json\n", encoding="utf-8")
        with pytest.raises(StoreError, match="games.jsonl:1"):
            RecordStore(path).load()

    def test_utf8_content_survives(self, tmp_path):
        record = make_record()
        store = RecordStore(tmp_path / "games.jsonl")
        store.append(record)
        raw = (tmp_path / "games.jsonl").read_text(encoding="utf-8")
        assert '"RecursionError"' in raw


class TestTranscriptLog:
    def test_appends_verbatim_before_parsing(self, tmp_path):
        log = TranscriptLog.beside(tmp_path / "games.jsonl")
        log.append(_transcript("raw ```unparseable"), context="alice")
        lines = log.path.read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[0])["response_text"] == "raw ```unparseable"
        assert json.loads(lines[0])["context"] == "alice"
        assert log.path.name == "games.transcripts.jsonl"
