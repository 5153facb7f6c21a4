import numpy as np
import pytest

from styleseg import (
    DomainStyle,
    LesionSpec,
    Sample,
    SynthConfig,
    default_source_style,
    default_target_style,
    generate_synthetic,
    images_array,
    load_dataset,
    load_image,
    masks_array,
    save_images,
    split,
)
from styleseg.data import _rgb_to_hue


@pytest.fixture(scope="module")
def small_domains():
    return generate_synthetic(SynthConfig(count=6, image_size=32, seed=0))


class TestGeneration:
    def test_counts_shapes_and_dtype(self, small_domains):
        src, tgt = small_domains
        assert len(src) == 6 and len(tgt) == 6
        for s in src + tgt:
            assert s.image.shape == (3, 32, 32)
            assert s.image.dtype == np.float32
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert s.mask.shape == (32, 32)
            assert s.mask.dtype == np.bool_

    def test_masks_nonempty_and_not_full(self, small_domains):
        src, tgt = small_domains
        for s in src + tgt:
            frac = s.mask.mean()
            assert 0.0 < frac < 0.9

    def test_deterministic(self):
        cfg = SynthConfig(count=3, image_size=16, seed=11)
        a_src, a_tgt = generate_synthetic(cfg)
        b_src, b_tgt = generate_synthetic(cfg)
        for a, b in zip(a_src + a_tgt, b_src + b_tgt):
            assert a.id == b.id
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.mask, b.mask)

    def test_domain_tags_and_ids(self, small_domains):
        src, tgt = small_domains
        assert all(s.domain_tag == "source" for s in src)
        assert all(s.domain_tag == "target" for s in tgt)
        assert src[0].id == "sou_0000" and tgt[2].id == "tar_0002"

    def test_background_hues_separate_domains(self, small_domains):
        src, tgt = small_domains
        for s in src:
            bg_hue = float(np.median(_rgb_to_hue(s.image)[~s.mask]))
            assert 0.18 <= bg_hue <= 0.44, f"source background drifted to hue {bg_hue}"
        for s in tgt:
            bg_hue = float(np.median(_rgb_to_hue(s.image)[~s.mask]))
            assert 0.80 <= bg_hue <= 1.0, f"target background drifted to hue {bg_hue}"

    def test_lesions_darker_than_background(self, small_domains):
        src, tgt = small_domains
        for s in src + tgt:
            lum = s.image.mean(axis=0)
            assert lum[s.mask].mean() < lum[~s.mask].mean()

    def test_rejects_degenerate_config(self):
        with pytest.raises(ValueError):
            SynthConfig(count=0)
        with pytest.raises(ValueError):
            SynthConfig(image_size=4)

    def test_style_validation(self):
        with pytest.raises(ValueError):
            DomainStyle(
                hue=(0.5, 0.4), saturation=(0, 1), value=(0, 1),
                lesion_hue=(0, 1), lesion_saturation=(0, 1), lesion_value=(0, 1),
            )
        with pytest.raises(ValueError):
            LesionSpec(radius=(0.3, 0.2))
        with pytest.raises(ValueError):
            LesionSpec(shape="star")

    def test_default_styles_use_disjoint_hue_bands(self):
        s, t = default_source_style(), default_target_style()
        assert s.hue[1] < t.hue[0]
        assert s.lesion_hue[1] < t.lesion_hue[0]


class TestSplit:
    def test_single_fraction_identity(self, small_domains):
        src, _ = small_domains
        parts = split(src, (1.0,), seed=0)
        assert len(parts) == 1
        assert sorted(s.id for s in parts[0]) == sorted(s.id for s in src)

    def test_even_split_disjoint(self, small_domains):
        src, _ = small_domains
        a, b = split(src, (0.5, 0.5), seed=3)
        assert len(a) == 3 and len(b) == 3
        assert not {s.id for s in a} & {s.id for s in b}

    def test_seeded(self, small_domains):
        src, _ = small_domains
        p1 = split(src, (0.5, 0.5), seed=3)
        p2 = split(src, (0.5, 0.5), seed=3)
        assert [[s.id for s in part] for part in p1] == [[s.id for s in part] for part in p2]

    def test_rejects_bad_arguments(self, small_domains):
        src, _ = small_domains
        with pytest.raises(ValueError):
            split([], (1.0,), seed=0)
        with pytest.raises(ValueError):
            split(src, (0.5, 0.4), seed=0)
        with pytest.raises(ValueError):
            split(src, (1.5, -0.5), seed=0)


class TestSaveLoad:
    def test_round_trip_within_quantization(self, small_domains, tmp_path):
        src, _ = small_domains
        save_images(src, tmp_path / "src")
        loaded = load_dataset(tmp_path / "src", expected_size=32)
        assert [s.id for s in loaded] == sorted(s.id for s in src)
        by_id = {s.id: s for s in src}
        for s in loaded:
            orig = by_id[s.id]
            assert float(np.abs(s.image - orig.image).max()) <= 0.5 / 255.0 + 1e-6
            assert np.array_equal(s.mask, orig.mask)

    def test_checksum_tracks_pixels(self, small_domains, tmp_path):
        src, _ = small_domains
        m1 = save_images(src, tmp_path / "a")
        m2 = save_images(src, tmp_path / "b")
        assert m1.checksum == m2.checksum
        bumped = [
            Sample(id=s.id, image=s.image.copy(), mask=s.mask, domain_tag=s.domain_tag)
            for s in src
        ]
        bumped[0].image[0, 0, 0] = 1.0 - bumped[0].image[0, 0, 0]
        m3 = save_images(bumped, tmp_path / "c")
        assert m3.checksum != m1.checksum
        assert m3.entries[0][4] != m1.entries[0][4]
        assert m3.entries[1][4] == m1.entries[1][4]

    def test_manifest_rows(self, small_domains, tmp_path):
        src, _ = small_domains
        manifest = save_images(src[:2], tmp_path / "m")
        assert len(manifest.entries) == 2
        sid, img_path, mask_path, tag, checksum = manifest.entries[0]
        assert sid == src[0].id and tag == "source"
        assert img_path.endswith(f"{sid}.png") and mask_path.endswith(f"{sid}.png")
        assert len(checksum) == 64
        header = (tmp_path / "m" / "manifest.csv").read_text().splitlines()[0]
        assert header == "id,image_path,mask_path,domain_tag,checksum"

    def test_empty_list_gives_empty_manifest(self, tmp_path):
        manifest = save_images([], tmp_path / "empty")
        assert manifest.entries == ()

    def test_bare_arrays_accepted(self, tmp_path):
        imgs = np.random.default_rng(0).random((2, 3, 16, 16), dtype=np.float32)
        manifest = save_images(imgs, tmp_path / "bare")
        assert [e[0] for e in manifest.entries] == ["img_0000", "img_0001"]
        loaded = load_dataset(tmp_path / "bare", expected_size=16)
        assert loaded[0].mask is None

    def test_duplicate_ids_rejected(self, small_domains, tmp_path):
        src, _ = small_domains
        dup = [src[0], src[0]]
        with pytest.raises(ValueError):
            save_images(dup, tmp_path / "dup")

    def test_load_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "missing")
        (tmp_path / "hollow" / "images").mkdir(parents=True)
        with pytest.raises(ValueError):
            load_dataset(tmp_path / "hollow")
        (tmp_path / "bad" / "images").mkdir(parents=True)
        bad_file = tmp_path / "bad" / "images" / "junk.png"
        bad_file.write_bytes(b"not a png")
        with pytest.raises(ValueError, match="junk.png"):
            load_dataset(tmp_path / "bad")

    def test_domain_tag_from_directory_name(self, small_domains, tmp_path):
        src, _ = small_domains
        save_images(src[:1], tmp_path / "renamed")
        loaded = load_dataset(tmp_path / "renamed", expected_size=32)
        assert loaded[0].domain_tag == "renamed"

    def test_load_image_single_file(self, small_domains, tmp_path):
        src, _ = small_domains
        save_images(src[:1], tmp_path / "one")
        path = tmp_path / "one" / "images" / f"{src[0].id}.png"
        img = load_image(path, expected_size=32)
        assert img.shape == (3, 32, 32) and img.dtype == np.float32
        assert float(np.abs(img - src[0].image).max()) <= 0.5 / 255.0 + 1e-6
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "one" / "images" / "absent.png")
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"garbage")
        with pytest.raises(ValueError):
            load_image(bad)

    def test_resize_path(self, small_domains, tmp_path):
        src, _ = small_domains
        save_images(src[:1], tmp_path / "rs")
        loaded = load_dataset(tmp_path / "rs", expected_size=16)
        assert loaded[0].image.shape == (3, 16, 16)
        assert loaded[0].mask.shape == (16, 16)


class TestArraysAndValidation:
    def test_images_array_stacks(self, small_domains):
        src, _ = small_domains
        arr = images_array(src)
        assert arr.shape == (6, 3, 32, 32)

    def test_masks_array_requires_masks(self, small_domains):
        src, _ = small_domains
        assert masks_array(src).shape == (6, 32, 32)
        unmasked = [Sample(id="x", image=src[0].image, mask=None, domain_tag="t")]
        with pytest.raises(ValueError, match="x"):
            masks_array(unmasked)

    def test_sample_shape_validation(self):
        with pytest.raises(ValueError):
            Sample(id="bad", image=np.zeros((16, 16), dtype=np.float32), mask=None, domain_tag="")
        with pytest.raises(ValueError):
            Sample(
                id="bad",
                image=np.zeros((3, 16, 16), dtype=np.float32),
                mask=np.zeros((8, 8), dtype=bool),
                domain_tag="",
            )
