"""
Tests for snapshot schedules, the store and the ANS1 file format.
"""
import numpy as np
import pytest

from aniso_decay.errors import GridError, ScheduleError, SnapshotFormatError
from aniso_decay.grid_spectral import VelocityField, make_grid
from aniso_decay.snapshots import (
    MANIFEST_NAME,
    Schedule,
    SnapshotStore,
    make_schedule,
    read_snapshot,
    write_snapshot,
)


class TestSchedule:

    def test_head_then_geometric_tail(self):
        times = make_schedule(0.25, 1.0, 2, 8.0).times
        s = np.sqrt(2.0)
        expected = [0.0, 0.25, 0.5, 0.75, 1.0, s, 2.0, 2 * s, 4.0, 4 * s, 8.0]
        np.testing.assert_allclose(times, expected, rtol=1e-12)

    def test_extra_times_and_end_are_included(self):
        times = make_schedule(0.5, 1.0, 1, 6.0, extra=(3.0,)).times
        assert 3.0 in times and times[-1] == 6.0

    def test_refine_keeps_the_coarse_times(self):
        schedule = make_schedule(0.05, 0.5, 4, 16.0, extra=(1.0, 8.0))
        fine = schedule.refine().times
        for t in schedule.times:
            assert np.min(np.abs(fine - t)) < 1e-9
        assert len(fine) > len(schedule.times)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 2, 8.0), (2.0, 1.0, 2, 8.0),
                                      (0.25, 1.0, 0, 8.0), (0.25, 1.0, 2, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(ScheduleError):
            Schedule(*args)

    def test_descriptor(self):
        d = make_schedule(0.25, 1.0, 2, 8.0, extra=(3.0,)).descriptor
        assert d == {"head_dt": 0.25, "head_end": 1.0, "per_octave": 2, "t_end": 8.0, "extra": [3.0]}


class TestSnapshotStore:

    def test_first_snapshot_is_at_zero(self, grid):
        store = SnapshotStore(grid)
        with pytest.raises(ScheduleError):
            store.append(0.5, VelocityField.zeros(grid))

    def test_times_must_increase(self, zero_store, grid):
        with pytest.raises(ScheduleError):
            zero_store.append(2.0, VelocityField.zeros(grid))

    def test_snapshots_must_be_certified(self, zero_store, grid):
        with pytest.raises(ScheduleError):
            zero_store.append(3.0, VelocityField(grid, np.zeros((3, *grid.shape))))

    def test_grid_must_match(self, zero_store):
        other = make_grid(8, 8, 24.0, 8.0)
        with pytest.raises(GridError):
            zero_store.append(3.0, VelocityField.zeros(other))

    def test_lookup(self, zero_store):
        assert zero_store.index_of(1.5) == 3
        assert zero_store.t_max == 2.0
        with pytest.raises(ScheduleError):
            zero_store.index_of(1.25)

    def test_subsample(self, zero_store):
        sub = zero_store.subsample([1.0, 2.0])
        assert sub.times == [0.0, 1.0, 2.0]
        with pytest.raises(ScheduleError):
            zero_store.subsample([0.75])

    def test_save_and_load_are_bit_exact(self, short_store, tmp_path):
        manifest = short_store.save(tmp_path)
        assert manifest.name == MANIFEST_NAME
        loaded = SnapshotStore.load(tmp_path)
        assert loaded.grid == short_store.grid
        assert loaded.times == short_store.times
        assert loaded.schedule == short_store.schedule
        for a, b in zip(loaded.fields, short_store.fields):
            assert np.array_equal(np.asarray(a.data), b.data)
            assert a.divergence_free

    def test_load_needs_a_manifest(self, tmp_path):
        with pytest.raises(SnapshotFormatError):
            SnapshotStore.load(tmp_path)


class TestSnapshotFile:

    def test_header_layout(self, corollary_u0, tmp_path):
        path = tmp_path / "u.ans"
        write_snapshot(path, corollary_u0, 0.75)
        raw = path.read_bytes()
        assert raw[:4] == b"ANS1"
        assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [16, 16, 16]
        assert np.frombuffer(raw[16:40], dtype="<f8").tolist() == [24.0, 8.0, 0.75]
        assert len(raw) == 40 + 8 * 3 * 16 ** 3

    def test_round_trip(self, corollary_u0, tmp_path):
        path = tmp_path / "u.ans"
        write_snapshot(path, corollary_u0, 0.75)
        grid, t, u = read_snapshot(path, mmap=True)
        assert grid == corollary_u0.grid and t == 0.75
        assert np.array_equal(np.asarray(u.data), corollary_u0.data)

    def test_bad_magic(self, corollary_u0, tmp_path):
        path = tmp_path / "u.ans"
        write_snapshot(path, corollary_u0, 0.0)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(SnapshotFormatError):
            read_snapshot(path)

    def test_truncated_file(self, corollary_u0, tmp_path):
        path = tmp_path / "u.ans"
        write_snapshot(path, corollary_u0, 0.0)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SnapshotFormatError):
            read_snapshot(path)
