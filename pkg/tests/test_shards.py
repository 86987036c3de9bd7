import numpy as np
import pytest

from crowdtwin import geohash as gh
from crowdtwin.plyio import write_ply
from crowdtwin.points import PointCloud
from crowdtwin.shards import (
    REVIEW_APPROVED,
    REVIEW_REJECTED,
    RegionStore,
    ReviewConflictError,
    chunk_centroid_latlon,
)

from conftest import random_full_cloud


@pytest.fixture
def store(tmp_path):
    return RegionStore(tmp_path / "data", precision=8)


def test_shard_for_same_cell_is_same_shard(store):
    a = store.shard_for(35.90001, 139.41001)
    b = store.shard_for(35.90002, 139.41002)
    assert a is b


def test_adjacent_cells_distinct(store):
    a = store.shard_for(35.90, 139.41)
    b = store.shard_for(35.905, 139.42)
    assert a is not b


def test_shard_count_equals_distinct_codes(store, rng):
    codes = set()
    for _ in range(1000):
        lat = rng.uniform(35.0, 36.0)
        lon = rng.uniform(139.0, 140.0)
        store.shard_for(lat, lon)
        codes.add(gh.encode(lat, lon, 8))
    assert set(store.codes()) == codes


def test_version_bumps_and_isolation(store, rng):
    a = store.shard_for(35.90, 139.41)
    b = store.shard_for(35.905, 139.42)
    assert (a.version, b.version) == (0, 0)
    a.add_chunk(write_ply(random_full_cloud(rng, 5), "binary"))
    assert (a.version, b.version) == (1, 0)
    b.set_tile(random_full_cloud(rng, 4))
    assert (a.version, b.version) == (1, 1)
    a.set_tile(random_full_cloud(rng, 4))
    a.get_or_create_game()
    assert (a.version, b.version) == (2, 1)


def test_persistence_reload_round_trips(store, rng, tmp_path):
    shard = store.shard_for(35.90, 139.41)
    cloud = random_full_cloud(rng, 20)
    chunk_id = shard.add_chunk(write_ply(cloud, "binary"))
    tile = random_full_cloud(rng, 12)
    shard.set_tile(tile)
    game = shard.get_or_create_game()
    game.discover(3, 4)
    game.paint(game.nodes["3_4"], "red")
    shard.persist_game()
    item = shard.add_review(chunk_id, {"transform": {"rotation": np.eye(3).tolist(), "translation": [0, 0, 0]}})

    # fresh store over the same directory reconstructs everything
    reloaded = RegionStore(tmp_path / "data", precision=8)
    shard2 = reloaded.shard_for_code(shard.geohash)
    assert shard2.chunk_ids == [chunk_id]
    assert shard2.read_chunk(chunk_id) == cloud
    assert np.array_equal(shard2.udt_tile.positions, tile.positions)
    assert shard2.game.nodes["3_4"].team == "red"
    assert shard2.reviews[item.item_id].status == "pending"
    assert shard2.version == shard.version


def test_tile_bytes_stable_across_reload(store, rng, tmp_path):
    shard = store.shard_for(35.90, 139.41)
    shard.set_tile(random_full_cloud(rng, 50))
    served_before = write_ply(shard.udt_tile, "binary")
    reloaded = RegionStore(tmp_path / "data", precision=8)
    served_after = write_ply(reloaded.shard_for_code(shard.geohash).udt_tile, "binary")
    assert served_before == served_after


def test_review_transitions_exactly_once(store, rng):
    shard = store.shard_for(35.90, 139.41)
    cid = shard.add_chunk(write_ply(random_full_cloud(rng, 5), "binary"))
    item = shard.add_review(cid, {"transform": None})
    resolved = shard.resolve_review(item.item_id, REVIEW_APPROVED)
    assert resolved.status == REVIEW_APPROVED
    with pytest.raises(ReviewConflictError):
        shard.resolve_review(item.item_id, REVIEW_REJECTED)


def test_pending_reviews_across_shards(store, rng):
    a = store.shard_for(35.90, 139.41)
    b = store.shard_for(35.905, 139.42)
    ca = a.add_chunk(write_ply(random_full_cloud(rng, 5), "binary"))
    cb = b.add_chunk(write_ply(random_full_cloud(rng, 5), "binary"))
    ia = a.add_review(ca, {})
    ib = b.add_review(cb, {})
    pending = {i.item_id for i in store.pending_reviews()}
    assert pending == {ia.item_id, ib.item_id}
    a.resolve_review(ia.item_id, REVIEW_REJECTED)
    assert {i.item_id for i in store.pending_reviews()} == {ib.item_id}


def test_chunk_centroid_latlon_uses_device_position(rng):
    anchor = gh.GeoAnchor(35.90, 139.41)
    cloud = PointCloud.from_positions(
        rng.normal(size=(10, 3)).astype(np.float32),
        device_position=np.tile(np.array([30.0, 40.0, 1.4], dtype=np.float32), (10, 1)),
    )
    lat, lon = chunk_centroid_latlon(cloud, anchor)
    x, y = anchor.to_local(lat, lon)
    assert abs(x - 30.0) < 1e-6 and abs(y - 40.0) < 1e-6
