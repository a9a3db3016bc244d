"""Dataset layer: formats, loading, splitting, subsampling, augmentation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmviab import synthclinic
from mmviab.data import (
    Dataset,
    DatasetSchema,
    EHRSchema,
    EHRVector,
    EmbryoSample,
    InterpretableFeatures,
    MorphFeatures,
    TreatmentCycle,
    apply_frame_geometry,
    augment_sample,
    fit_ehr_normalizer,
    fit_interp_normalizer,
    io,
    normalize_ehr,
    normalize_interp,
    stratified_split,
    subsample_frames,
    subsample_indices,
)
from mmviab.data.preprocess import TabularNormalizer
from mmviab.errors import ConfigError, DataError

SCHEMA = DatasetSchema(
    ehr=EHRSchema(
        numeric=("age", "amh"),
        categorical=(("protocol", ("a", "b")),),
    ),
    interp=("t_first", "symmetry"),
)


def stub_cycle(tid, n_embryos=2, n_transferred=1, n_births=0, t=4, hw=6, seed=0,
               with_morph=True, with_interp=True):
    rng = np.random.default_rng(seed)
    embryos = []
    for j in range(n_embryos):
        transferred = j < n_transferred
        morph = None
        if with_morph:
            morph = MorphFeatures(
                zona_sem=rng.integers(0, 3, (t, hw, hw), dtype=np.uint8),
                blast_inst=rng.integers(0, 4, (t, hw, hw), dtype=np.uint8),
                pronuc_inst=rng.integers(0, 3, (t, hw, hw), dtype=np.uint8),
                frag=rng.random(t).astype(np.float32),
                stage=np.minimum(np.arange(t, dtype=np.uint8) + 1, 8),
                n_zona_classes=3,
                n_stage_classes=9,
            )
        interp = None
        if with_interp:
            interp = InterpretableFeatures(
                {"t_first": float(rng.uniform(100, 900)), "symmetry": float(rng.random())})
        embryos.append(EmbryoSample(
            embryo_id=f"{tid}E{j}",
            video=rng.integers(0, 256, (t, hw, hw, 1), dtype=np.uint8),
            transferred=transferred,
            morph=morph,
            interp=interp,
            label=n_births / n_transferred if transferred else None,
        ))
    ehr = EHRVector(
        numeric={"age": float(rng.uniform(20, 45)), "amh": float(rng.uniform(0.1, 9))},
        categorical={"protocol": "a" if rng.random() < 0.5 else "b"},
    )
    return TreatmentCycle(treatment_id=tid, ehr=ehr, embryos=embryos,
                          n_transferred=n_transferred, n_births=n_births)


def stub_dataset(n_treatments, n_successes, seed=0):
    cycles = [
        stub_cycle(f"T{i:05d}", n_births=1 if i < n_successes else 0, seed=seed + i)
        for i in range(n_treatments)
    ]
    return Dataset(schema=SCHEMA, cycles=cycles)


class TestBinaryFormats:
    def test_video_round_trip_bit_exact(self, tmp_path):
        video = np.random.default_rng(1).integers(0, 256, (5, 7, 9, 1), dtype=np.uint8)
        io.write_video(tmp_path / "v.video", video)
        back = io.read_video(tmp_path / "v.video", "E0")
        assert back.dtype == np.uint8
        assert np.array_equal(back, video)

    def test_video_magic_mismatch_names_embryo(self, tmp_path):
        (tmp_path / "junk.video").write_bytes(b"NOTAVIDEO")
        with pytest.raises(DataError, match="E77"):
            io.read_video(tmp_path / "junk.video", "E77")

    def test_morph_round_trip_bit_exact(self, tmp_path):
        morph = stub_cycle("T0").embryos[0].morph
        io.write_morph(tmp_path / "m.morph", morph)
        back = io.read_morph(tmp_path / "m.morph", "E0")
        assert np.array_equal(back.zona_sem, morph.zona_sem)
        assert np.array_equal(back.blast_inst, morph.blast_inst)
        assert np.array_equal(back.pronuc_inst, morph.pronuc_inst)
        assert back.frag.dtype == np.float32
        assert np.array_equal(back.frag, morph.frag)
        assert np.array_equal(back.stage, morph.stage)
        assert back.n_zona_classes == morph.n_zona_classes
        assert back.n_stage_classes == morph.n_stage_classes

    def test_ehr_csv_round_trip_exact(self, tmp_path):
        ehr = EHRVector(numeric={"age": 33.123456789012345, "amh": 0.1},
                        categorical={"protocol": "b"})
        io.write_ehr_csv(tmp_path / "e.csv", ehr, SCHEMA.ehr)
        back = io.read_ehr_csv(tmp_path / "e.csv", SCHEMA.ehr, "T0")
        assert back.numeric == ehr.numeric
        assert back.categorical == ehr.categorical


class TestWriteLoad:
    def test_generated_dataset_round_trips(self, tmp_path):
        cfg = synthclinic.SynthConfig(n_treatments=20, frames_raw=12, frame_size=16,
                                      embryos_low=1, embryos_high=3, seed=7)
        root = synthclinic.generate_dataset(cfg, tmp_path / "ds")
        ds = io.load_dataset(root)
        assert len(ds) == 20
        ds.validate()

    def test_load_write_is_bit_exact(self, tmp_path):
        original = stub_dataset(4, 2, seed=3)
        root = io.write_dataset(original, tmp_path / "a")
        loaded = io.load_dataset(root)
        for c0, c1 in zip(original.cycles, loaded.cycles):
            assert c1.treatment_id == c0.treatment_id
            assert c1.ehr.numeric == c0.ehr.numeric
            assert c1.ehr.categorical == c0.ehr.categorical
            assert (c1.n_transferred, c1.n_births) == (c0.n_transferred, c0.n_births)
            for e0, e1 in zip(c0.embryos, c1.embryos):
                assert np.array_equal(e1.video, e0.video)
                assert np.array_equal(e1.morph.frag, e0.morph.frag)
                assert e1.interp.values == e0.interp.values
                assert e1.label == e0.label

    def test_empty_manifest_gives_empty_sequence(self, tmp_path):
        root = io.write_dataset(Dataset(schema=SCHEMA, cycles=[]), tmp_path / "empty")
        ds = io.load_dataset(root)
        assert len(ds) == 0

    def test_missing_video_file_names_embryo(self, tmp_path):
        root = io.write_dataset(stub_dataset(2, 1), tmp_path / "ds")
        (root / "treatments" / "T00001" / "T00001E0.video").unlink()
        with pytest.raises(DataError, match="T00001E0"):
            io.load_dataset(root)

    def test_missing_manifest_is_a_data_error(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            io.load_dataset(tmp_path / "nowhere")


class TestStratifiedSplit:
    def test_corpus_shaped_counts(self):
        # 1700 treatments with 260 successes must split 8:1:1 into
        # 1360/170/170 totals carrying 208/26/26 successes
        ds = stub_dataset(1700, 260, seed=1)
        train, val, test = stratified_split(ds.cycles, ratios=(8, 1, 1), seed=0)
        assert (len(train), len(val), len(test)) == (1360, 170, 170)
        counts = tuple(sum(1 for c in part if c.successful) for part in (train, val, test))
        assert counts == (208, 26, 26)

    def test_single_stratum_8_1_1(self):
        ds = stub_dataset(10, 0)
        train, val, test = stratified_split(ds.cycles, seed=5)
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_same_seed_identical_membership(self):
        ds = stub_dataset(40, 12)
        a = stratified_split(ds.cycles, seed=9)
        b = stratified_split(ds.cycles, seed=9)
        for part_a, part_b in zip(a, b):
            assert [c.treatment_id for c in part_a] == [c.treatment_id for c in part_b]

    def test_different_seed_changes_membership(self):
        ds = stub_dataset(40, 12)
        a, _, _ = stratified_split(ds.cycles, seed=0)
        b, _, _ = stratified_split(ds.cycles, seed=1)
        assert [c.treatment_id for c in a] != [c.treatment_id for c in b]

    def test_too_few_treatments_rejected(self):
        ds = stub_dataset(9, 3)
        with pytest.raises(ConfigError, match="at least 10"):
            stratified_split(ds.cycles)

    def test_understaffed_stratum_rejected(self):
        ds = stub_dataset(12, 2)  # success stratum smaller than 3 splits
        with pytest.raises(ConfigError, match="success stratum"):
            stratified_split(ds.cycles)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(10, 60), frac=st.floats(0.2, 0.8), seed=st.integers(0, 99))
    def test_partition_property(self, n, frac, seed):
        n_succ = max(3, min(n - 3, int(frac * n)))
        ds = stub_dataset(n, n_succ, seed=2)
        parts = stratified_split(ds.cycles, seed=seed)
        ids = [c.treatment_id for part in parts for c in part]
        assert len(ids) == len(set(ids)) == n  # disjoint and exhaustive
        assert sorted(ids) == sorted(c.treatment_id for c in ds.cycles)


class TestSubsampling:
    def test_cap_360_stride_4_gives_90(self):
        idx = subsample_indices(360)
        assert len(idx) == 90
        assert idx[0] == 0 and idx[1] == 4 and idx[-1] == 356

    def test_short_video(self):
        assert subsample_indices(10).tolist() == [0, 4, 8]

    def test_long_video_clipped_first(self):
        video = np.arange(400, dtype=np.uint8).reshape(400, 1, 1, 1)
        out = subsample_frames(video)
        assert out.shape[0] == 90
        assert out[-1, 0, 0, 0] == 356 % 256

    @given(t=st.integers(1, 500))
    def test_output_length_formula(self, t):
        assert len(subsample_indices(t)) == math.ceil(min(t, 360) / 4)


def _centroid(mask2d):
    ys, xs = np.nonzero(mask2d)
    return ys.mean(), xs.mean()


class TestAugmentation:
    def test_flip_is_involution(self):
        arr = np.random.default_rng(0).integers(0, 256, (3, 8, 8, 1), dtype=np.uint8)
        for flip in ("horizontal", "vertical"):
            twice = apply_frame_geometry(apply_frame_geometry(arr, flip, 0), flip, 0)
            assert np.array_equal(twice, arr)

    def test_quarter_turns_are_cyclic(self):
        arr = np.random.default_rng(1).integers(0, 256, (2, 6, 6, 1), dtype=np.uint8)
        out = arr
        for _ in range(4):
            out = apply_frame_geometry(out, "none", 1)
        assert np.array_equal(out, arr)
        assert np.array_equal(apply_frame_geometry(arr, "none", 4), arr)

    @pytest.mark.parametrize("seed", range(8))
    def test_video_and_masks_share_coordinate_map(self, seed):
        # a synthetic blob at a known location must land on the same centroid
        # in the video and in every mask channel after augmentation
        cycle = stub_cycle("T0", n_embryos=1, t=3, hw=11, seed=seed)
        sample = cycle.embryos[0]
        sample.video[:] = 0
        sample.video[:, 2:4, 7:9, 0] = 200
        for vol in (sample.morph.zona_sem, sample.morph.blast_inst, sample.morph.pronuc_inst):
            vol[:] = 0
            vol[:, 2:4, 7:9] = 1
        out = augment_sample(sample, np.random.default_rng(seed))
        ref = _centroid(out.video[0, :, :, 0] > 0)
        for vol in (out.morph.zona_sem, out.morph.blast_inst, out.morph.pronuc_inst):
            assert _centroid(vol[0] > 0) == ref

    def test_scalars_pass_through_bit_exact(self):
        cycle = stub_cycle("T0", n_embryos=1, n_births=1, seed=4)
        sample = cycle.embryos[0]
        out = augment_sample(sample, np.random.default_rng(2))
        assert out.label == sample.label
        assert out.interp.values == sample.interp.values
        assert np.array_equal(out.morph.frag, sample.morph.frag)
        assert np.array_equal(out.morph.stage, sample.morph.stage)

    def test_non_square_frames_rejected(self):
        sample = EmbryoSample(
            embryo_id="E0",
            video=np.zeros((2, 4, 6, 1), dtype=np.uint8),
            transferred=True,
        )
        with pytest.raises(ConfigError, match="square"):
            augment_sample(sample, np.random.default_rng(0))

    def test_all_twelve_geometries_reachable(self):
        from mmviab.data.preprocess import draw_augmentation
        rng = np.random.default_rng(0)
        seen = {draw_augmentation(rng) for _ in range(300)}
        assert ("none", 0) in seen
        assert len(seen) == 12  # 3 flips x 4 rotations


class TestNormalization:
    def test_train_columns_standardized(self):
        cycles = [stub_cycle(f"T{i}", seed=i) for i in range(30)]
        norm = fit_ehr_normalizer(SCHEMA.ehr, cycles)
        rows = np.stack([normalize_ehr(norm, c.ehr) for c in cycles])
        numeric = rows[:, : len(SCHEMA.ehr.numeric)]
        assert np.allclose(numeric.mean(axis=0), 0, atol=1e-9)
        assert np.allclose(numeric.std(axis=0), 1, atol=1e-6)

    def test_constant_column_maps_to_zero(self):
        norm = TabularNormalizer.for_numeric(("x",))
        feats = [InterpretableFeatures({"x": 5.0}) for _ in range(4)]
        norm.fit(feats)
        assert normalize_interp(norm, feats[0]) == pytest.approx([0.0])

    def test_one_hot_layout(self):
        cycles = [stub_cycle(f"T{i}", seed=i) for i in range(5)]
        norm = fit_ehr_normalizer(SCHEMA.ehr, cycles)
        ehr = EHRVector(numeric={"age": 30.0, "amh": 2.0}, categorical={"protocol": "b"})
        vec = normalize_ehr(norm, ehr)
        assert vec.shape == (norm.width,) == (2 + 3,)
        block = vec[2:]
        assert block.sum() == 1.0 and block[1] == 1.0

    def test_unseen_category_maps_to_unknown_slot(self):
        cycles = [stub_cycle(f"T{i}", seed=i) for i in range(5)]
        norm = fit_ehr_normalizer(SCHEMA.ehr, cycles)
        ehr = EHRVector(numeric={"age": 30.0, "amh": 2.0}, categorical={"protocol": "zzz"})
        block = normalize_ehr(norm, ehr)[2:]
        assert block.tolist() == [0.0, 0.0, 1.0]

    def test_interp_normalizer_requires_features(self):
        embryos = [EmbryoSample(embryo_id="E0", video=np.zeros((1, 2, 2, 1), np.uint8),
                                transferred=False)]
        with pytest.raises(DataError, match="interpretable"):
            fit_interp_normalizer(("t_first",), embryos)


class TestDomainValidation:
    def test_births_cannot_exceed_transferred(self):
        cycle = stub_cycle("T0", n_transferred=1, n_births=1)
        cycle.n_births = 2
        with pytest.raises(DataError, match="exceeds"):
            cycle.validate(SCHEMA)

    def test_transferred_label_must_match_outcome(self):
        cycle = stub_cycle("T0", n_transferred=2, n_births=1, n_embryos=2)
        cycle.embryos[0].label = 0.75
        with pytest.raises(DataError, match="label"):
            cycle.validate(SCHEMA)

    def test_non_transferred_label_rejected(self):
        cycle = stub_cycle("T0", n_embryos=2, n_transferred=1)
        cycle.embryos[1].label = 0.5
        with pytest.raises(DataError, match="non-transferred"):
            cycle.validate(SCHEMA)

    def test_duplicate_treatment_ids_rejected(self):
        ds = Dataset(schema=SCHEMA, cycles=[stub_cycle("T0"), stub_cycle("T0")])
        with pytest.raises(DataError, match="duplicate"):
            ds.validate()
