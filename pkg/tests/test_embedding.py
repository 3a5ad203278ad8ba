"""Feature embedding: reference embedder, batch recovery, vectors file,
and the external-embedder process contract."""

import struct
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_corpus, save_png, themed_pixels
from imgtriage import ingest
from imgtriage.embedding import (
    BLOCK_GRID,
    FEATURES_PER_BLOCK,
    EmbedderConfig,
    EmbeddingError,
    ExternalEmbedderError,
    ReferenceEmbedder,
    VectorsFileError,
    embed_batch_recursive,
    embed_reference,
    embed_representatives,
    l2_normalize,
    load_pixels,
    propagate_vectors,
    read_vectors,
    run_external_embedder,
    write_vectors,
)

BASE = BLOCK_GRID * BLOCK_GRID * FEATURES_PER_BLOCK  # one full feature tile


# --- reference embedder ---------------------------------------------------


def test_black_image_embeds_to_zero():
    px = np.zeros((32, 32, 3), dtype=np.uint8)
    v = embed_reference(px, dim=64)
    assert v.shape == (64,)
    assert v.dtype == np.float32
    assert not v.any()


def test_uniform_color_means_and_no_edges():
    px = np.zeros((32, 32, 3), dtype=np.uint8)
    px[..., 0] = 255  # pure red
    v = embed_reference(px, dim=BASE)
    blocks = v.reshape(-1, FEATURES_PER_BLOCK)
    np.testing.assert_allclose(blocks[:, 0], 1.0)
    assert not blocks[:, 1:].any()  # no green, no blue, no gradients


def test_embedding_is_deterministic():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(48, 40, 3), dtype=np.uint8)
    assert np.array_equal(embed_reference(px, 128), embed_reference(px, 128))


def test_one_pixel_change_is_block_local():
    rng = np.random.default_rng(1)
    px = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    v0 = embed_reference(px, dim=BASE)
    px2 = px.copy()
    px2[17, 9] = 255 - px2[17, 9]  # inside block (8, 4) of the 16x16 grid
    v1 = embed_reference(px2, dim=BASE)
    off = (8 * BLOCK_GRID + 4) * FEATURES_PER_BLOCK
    changed = np.flatnonzero(v0 != v1)
    assert changed.size > 0
    assert changed.min() >= off and changed.max() < off + FEATURES_PER_BLOCK


def test_tiling_repeats_the_base_features():
    rng = np.random.default_rng(2)
    px = rng.integers(0, 256, size=(33, 31, 3), dtype=np.uint8)
    v = embed_reference(px, dim=2 * BASE)
    assert np.array_equal(v[:BASE], v[BASE:])
    short = embed_reference(px, dim=64)
    assert np.array_equal(short, v[:64])


def test_tiny_image_leaves_missing_blocks_zero():
    px = np.full((3, 3, 3), 255, dtype=np.uint8)  # smaller than the 16x16 grid
    v = embed_reference(px, dim=BASE)
    blocks = v.reshape(-1, FEATURES_PER_BLOCK)
    assert blocks[:, 0].max() == 1.0
    assert (blocks[:, 0] == 0).sum() > 200  # most blocks are empty


@pytest.mark.parametrize("dim", [0, 1, 7, 12, -8])
def test_dim_must_be_divisible_by_8(dim):
    with pytest.raises(ValueError):
        embed_reference(np.zeros((4, 4, 3), dtype=np.uint8), dim=dim)


def test_non_rgb_raster_rejected():
    with pytest.raises(EmbeddingError):
        embed_reference(np.zeros((4, 4), dtype=np.uint8), dim=64)


def test_load_pixels_converts_to_rgb(tmp_path):
    from PIL import Image

    p = tmp_path / "gray.png"
    Image.fromarray(np.full((5, 6), 128, dtype=np.uint8), mode="L").save(p)
    px = load_pixels(p)
    assert px.shape == (5, 6, 3)
    with pytest.raises(EmbeddingError):
        load_pixels(tmp_path / "missing.png")


def test_embedder_config_validation():
    with pytest.raises(ValueError):
        EmbedderConfig(backend="gpu")
    with pytest.raises(ValueError):
        EmbedderConfig(dim=1)
    with pytest.raises(ValueError):
        EmbedderConfig(batch_size=0)
    with pytest.raises(ValueError):
        EmbedderConfig(normalize="unit")
    with pytest.raises(ValueError):
        EmbedderConfig(backend="external")  # no command


# --- recursive batch recovery ---------------------------------------------


class CountingEmbedder:
    """Fails on any batch containing a poison id; counts invocations."""

    def __init__(self, poison, dim=16):
        self.poison = set(poison)
        self.dim = dim
        self.calls = 0

    def __call__(self, ids):
        self.calls += 1
        hit = [i for i in ids if i in self.poison]
        if hit:
            raise RuntimeError(f"poison in batch: {hit[0]}")
        return [np.full(self.dim, float(len(i)), dtype=np.float32) for i in ids]


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_single_poison_isolated_with_bounded_extra_calls(n):
    ids = [f"img-{i:03d}" for i in range(n)]
    embedder = CountingEmbedder({ids[n // 2]})
    result = embed_batch_recursive(ids, embedder)
    assert len(result.succeeded) == n - 1
    assert len(result.failed) == 1
    assert result.failed[0].image_id == ids[n // 2]
    assert "poison" in result.failed[0].reason
    extra = embedder.calls - 1
    assert extra <= 2 * (n - 1).bit_length() + 1  # 2*ceil(log2 n) + 1


def test_all_ids_end_up_in_exactly_one_bucket():
    ids = [f"i{i}" for i in range(13)]
    embedder = CountingEmbedder({"i3", "i7", "i12"})
    result = embed_batch_recursive(ids, embedder)
    got = sorted(f.image_id for f in result.failed) + sorted(
        v.image_id for v in result.succeeded
    )
    assert sorted(got) == sorted(ids)
    assert {f.image_id for f in result.failed} == {"i3", "i7", "i12"}


def test_empty_batch_is_a_noop():
    embedder = CountingEmbedder(set())
    result = embed_batch_recursive([], embedder)
    assert result.succeeded == [] and result.failed == []
    assert embedder.calls == 0


def test_miscounting_embedder_is_an_error():
    with pytest.raises(EmbeddingError, match="returned 1 vectors"):
        embed_batch_recursive(["a", "b"], lambda ids: [np.zeros(4, np.float32)])


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 40),
    poison=st.sets(st.integers(0, 39), max_size=6),
)
def test_recovery_partition_property(n, poison):
    ids = [f"p{i}" for i in range(n)]
    bad = {f"p{i}" for i in poison if i < n}
    embedder = CountingEmbedder(bad)
    result = embed_batch_recursive(ids, embedder)
    assert {f.image_id for f in result.failed} == bad
    assert [v.image_id for v in result.succeeded] == [i for i in ids if i not in bad]


# --- representative embedding ---------------------------------------------


def test_embed_representatives_order_and_exclusions(tmp_path):
    root = tmp_path / "c"
    build_corpus(root, n_unique=6, n_duplicates=2, seed=5)
    records = ingest.scan_corpus(root)
    groups = ingest.deduplicate(records)
    config = EmbedderConfig(dim=64, batch_size=3)

    rep_ids, matrix, failures = embed_representatives(
        groups, records, config, ReferenceEmbedder(config, root, records)
    )
    assert failures == []
    assert matrix.shape == (len(groups), 64)
    order = {r.image_id: i for i, r in enumerate(records)}
    assert rep_ids == sorted(rep_ids, key=lambda i: order[i])

    # excluding the duplicated groups drops exactly their representatives
    dup_groups = [g for g in groups if g.frequency >= 2]
    assert len(dup_groups) == 2  # dup_00000 and dup_00001 each double a source
    excluded = ingest.exclude_high_frequency(records, groups, min_frequency=2)
    rep_ids2, matrix2, _ = embed_representatives(
        groups, excluded, config, ReferenceEmbedder(config, root, excluded)
    )
    for g in dup_groups:
        assert g.representative_image_id not in rep_ids2
    assert matrix2.shape[0] == len(groups) - 2


def test_l2_normalize_unit_norms_and_zero_rows():
    m = np.array([[3.0, 4.0], [0.0, 0.0]], dtype=np.float32)
    out = l2_normalize(m)
    np.testing.assert_allclose(out[0], [0.6, 0.8], rtol=1e-6)
    assert not out[1].any()


def test_propagate_vectors_covers_all_members_or_names_missing():
    g1 = ingest.DedupGroup("g-a", "rep-a", ("rep-a", "dup-a"), 2)
    g2 = ingest.DedupGroup("g-b", "rep-b", ("rep-b",), 1)
    mapping = propagate_vectors([g1, g2], {"rep-a": 0, "rep-b": 1})
    assert mapping == {"rep-a": 0, "dup-a": 0, "rep-b": 1}
    with pytest.raises(EmbeddingError, match="g-b"):
        propagate_vectors([g1, g2], {"rep-a": 0})


# --- vectors file ---------------------------------------------------------


def test_vectors_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    matrix = rng.standard_normal((5, 12)).astype(np.float32)
    ordinals = [9, 2, 4, 0, 17]
    path = tmp_path / "v.fvec"
    write_vectors(path, ordinals, matrix)
    got_ord, got_m = read_vectors(path)
    assert got_ord.tolist() == ordinals
    assert np.array_equal(got_m, matrix)
    # byte-identical rewrite
    first = path.read_bytes()
    write_vectors(path, ordinals, matrix)
    assert path.read_bytes() == first


def test_vectors_bad_magic_names_offset_zero(tmp_path):
    path = tmp_path / "v.fvec"
    path.write_bytes(b"JUNK!\nrest")
    with pytest.raises(VectorsFileError, match="byte offset 0"):
        read_vectors(path)


def test_vectors_truncated_body_names_offset(tmp_path):
    path = tmp_path / "v.fvec"
    write_vectors(path, [0, 1], np.zeros((2, 4), dtype=np.float32))
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(VectorsFileError, match="byte offset"):
        read_vectors(path)


def test_vectors_nan_names_row_and_ordinal(tmp_path):
    m = np.zeros((3, 4), dtype=np.float32)
    m[1, 2] = np.nan
    path = tmp_path / "v.fvec"
    write_vectors(path, [10, 20, 30], m)
    with pytest.raises(VectorsFileError, match=r"row 1 \(ordinal 20\)"):
        read_vectors(path)


def test_vectors_header_mismatch(tmp_path):
    path = tmp_path / "v.fvec"
    path.write_bytes(b"FVEC1\ncount=nope dim=4\n")
    with pytest.raises(VectorsFileError, match="malformed header"):
        read_vectors(path)


# --- external embedder contract -------------------------------------------


GOOD_SCRIPT = """\
import json, struct, sys
manifest, out, dim = sys.argv[1], sys.argv[2], int(sys.argv[3])
lines = [l for l in open(manifest).read().splitlines() if l]
with open(out, "wb") as fh:
    fh.write(b"FVEC1\\n")
    fh.write(f"count={len(lines)} dim={dim}\\n".encode())
    for i, line in enumerate(lines):
        rec = json.loads(line)
        fh.write(struct.pack("<Q", i))
        seed = rec["byte_size"] % 7
        fh.write(struct.pack(f"<{dim}f", *((seed + j) % 5 / 5.0 for j in range(dim))))
"""

NAN_SCRIPT = GOOD_SCRIPT.replace(
    "seed = rec[\"byte_size\"] % 7",
    "seed = float('nan') if i == 1 else 0.0",
)

CRASH_SCRIPT = """\
import sys
sys.stderr.write("model exploded: out of frobnication\\n")
sys.exit(3)
"""

WRONG_DIM_SCRIPT = GOOD_SCRIPT.replace("int(sys.argv[3])", "int(sys.argv[3]) + 8")

BAD_ORDINAL_SCRIPT = GOOD_SCRIPT.replace("struct.pack(\"<Q\", i)", "struct.pack(\"<Q\", 0)")


def _write_script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body)
    return (sys.executable, str(path))


@pytest.fixture()
def rep_manifest(tmp_path):
    root = tmp_path / "c"
    build_corpus(root, n_unique=4, seed=9)
    records = ingest.scan_corpus(root)
    path = tmp_path / "reps.jsonl"
    ingest.write_manifest(records, path)
    return path, records


def test_external_embedder_happy_path(rep_manifest, tmp_path):
    manifest, records = rep_manifest
    config = EmbedderConfig(
        backend="external", dim=16, command=_write_script(tmp_path, "ok.py", GOOD_SCRIPT)
    )
    ordinals, matrix = run_external_embedder(manifest, tmp_path / "out.fvec", config)
    assert ordinals.tolist() == list(range(len(records)))
    assert matrix.shape == (len(records), 16)


def test_external_embedder_nonzero_exit_carries_stderr(rep_manifest, tmp_path):
    manifest, _ = rep_manifest
    config = EmbedderConfig(
        backend="external", dim=16, command=_write_script(tmp_path, "boom.py", CRASH_SCRIPT)
    )
    with pytest.raises(ExternalEmbedderError, match="exited 3") as err:
        run_external_embedder(manifest, tmp_path / "out.fvec", config)
    assert "out of frobnication" in str(err.value)


def test_external_embedder_wrong_dim_rejected(rep_manifest, tmp_path):
    manifest, _ = rep_manifest
    config = EmbedderConfig(
        backend="external", dim=16, command=_write_script(tmp_path, "wd.py", WRONG_DIM_SCRIPT)
    )
    with pytest.raises(ExternalEmbedderError, match="dim 24, expected 16"):
        run_external_embedder(manifest, tmp_path / "out.fvec", config)


def test_external_embedder_nan_names_image_id(rep_manifest, tmp_path):
    manifest, records = rep_manifest
    config = EmbedderConfig(
        backend="external", dim=16, command=_write_script(tmp_path, "nan.py", NAN_SCRIPT)
    )
    with pytest.raises(ExternalEmbedderError, match=records[1].image_id):
        run_external_embedder(manifest, tmp_path / "out.fvec", config)


def test_external_embedder_ordinals_must_cover_range(rep_manifest, tmp_path):
    manifest, _ = rep_manifest
    config = EmbedderConfig(
        backend="external",
        dim=16,
        command=_write_script(tmp_path, "bo.py", BAD_ORDINAL_SCRIPT),
    )
    with pytest.raises(ExternalEmbedderError, match="0..N-1"):
        run_external_embedder(manifest, tmp_path / "out.fvec", config)
