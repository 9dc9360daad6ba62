import logging

import numpy as np
import pytest

from splitdet.datasets import (
    AnnotatedSample,
    ClassMap,
    builtin_class_maps,
    letterbox_image,
    letterbox_sample,
    load_image,
    load_manifest,
    load_voc_xml,
    materialize_samples,
    save_manifest,
    synth_class_map,
    synth_shapes,
    take_first,
)
from splitdet.structures import GroundTruthBox

VOC_TEMPLATE = """<annotation>
  <filename>{filename}</filename>
  <size><width>{width}</width><height>{height}</height><depth>3</depth></size>
  {objects}
</annotation>
"""

OBJECT_TEMPLATE = """<object>
    <name>{name}</name>
    <bndbox><xmin>{xmin}</xmin><ymin>{ymin}</ymin><xmax>{xmax}</xmax><ymax>{ymax}</ymax></bndbox>
  </object>"""


def write_voc(directory, stem, objects, width=500, height=400):
    text = VOC_TEMPLATE.format(
        filename=f"{stem}.jpg",
        width=width,
        height=height,
        objects="\n  ".join(OBJECT_TEMPLATE.format(**obj) for obj in objects),
    )
    (directory / f"{stem}.xml").write_text(text)


class TestClassMaps:
    def test_builtin_sizes(self):
        maps = builtin_class_maps()
        assert len(maps["trash_icra19"]) == 3
        assert len(maps["wpbb"]) == 2
        assert len(maps["voc2012"]) == 20

    def test_trash_names(self):
        assert builtin_class_maps()["trash_icra19"].names == ("bio", "plastic", "rov")

    def test_wpbb_names(self):
        assert builtin_class_maps()["wpbb"].names == ("bag", "bottle")

    def test_bijection(self):
        for class_map in builtin_class_maps().values():
            for class_id, name in enumerate(class_map.names):
                assert class_map.id_of(name) == class_id
                assert class_map.name_of(class_id) == name

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            ClassMap(("a", "a"))

    def test_unknown_lookups(self):
        class_map = ClassMap(("a", "b"))
        with pytest.raises(KeyError):
            class_map.id_of("c")
        with pytest.raises(KeyError):
            class_map.name_of(2)


class TestVocLoader:
    def test_single_object(self, tmp_path):
        write_voc(tmp_path, "im1", [dict(name="bottle", xmin=10, ymin=20, xmax=110, ymax=220)])
        samples = load_voc_xml(tmp_path, builtin_class_maps()["voc2012"])
        assert len(samples) == 1
        (box,) = samples[0].boxes
        assert box.box == (10.0, 20.0, 110.0, 220.0)
        assert box.class_id == builtin_class_maps()["voc2012"].id_of("bottle")

    def test_empty_directory(self, tmp_path):
        assert load_voc_xml(tmp_path, ClassMap(("a",))) == []

    def test_inverted_box_skipped(self, tmp_path, caplog):
        write_voc(tmp_path, "bad", [dict(name="bottle", xmin=110, ymin=20, xmax=10, ymax=220)])
        write_voc(tmp_path, "good", [dict(name="bottle", xmin=1, ymin=2, xmax=30, ymax=40)])
        with caplog.at_level(logging.WARNING):
            samples = load_voc_xml(tmp_path, builtin_class_maps()["voc2012"])
        assert [s.key for s in samples] == ["good"]
        assert any("bad" in record.message for record in caplog.records)

    def test_out_of_bounds_box_skipped(self, tmp_path, caplog):
        write_voc(tmp_path, "oob", [dict(name="bottle", xmin=10, ymin=20, xmax=600, ymax=220)])
        with caplog.at_level(logging.WARNING):
            assert load_voc_xml(tmp_path, builtin_class_maps()["voc2012"]) == []

    def test_unknown_class_skipped(self, tmp_path, caplog):
        write_voc(tmp_path, "odd", [dict(name="kraken", xmin=1, ymin=2, xmax=3, ymax=4)])
        with caplog.at_level(logging.WARNING):
            assert load_voc_xml(tmp_path, builtin_class_maps()["voc2012"]) == []

    def test_deterministic_ordering(self, tmp_path):
        for stem in ["c", "a", "b"]:
            write_voc(tmp_path, stem, [dict(name="bottle", xmin=1, ymin=2, xmax=3, ymax=4)])
        samples = load_voc_xml(tmp_path, builtin_class_maps()["voc2012"])
        assert [s.key for s in samples] == ["a", "b", "c"]

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(OSError):
            load_voc_xml(tmp_path / "nope", ClassMap(("a",)))


class TestTakeFirst:
    def test_subset(self):
        samples = synth_shapes(5, 64, 2, seed=0)
        assert [s.key for s in take_first(samples, 3)] == [s.key for s in samples[:3]]

    def test_zero(self):
        assert take_first(synth_shapes(2, 64, 2, seed=0), 0) == []

    def test_saturation(self):
        samples = synth_shapes(2, 64, 2, seed=0)
        assert take_first(samples, 10) == samples

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            take_first([], -1)


class TestSynthShapes:
    def test_determinism(self):
        a = synth_shapes(20, 96, 2, seed=7)
        b = synth_shapes(20, 96, 2, seed=7)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
            assert sa.boxes == sb.boxes

    def test_different_seeds_differ(self):
        a = synth_shapes(3, 96, 2, seed=1)
        b = synth_shapes(3, 96, 2, seed=2)
        assert any(not np.array_equal(sa.image, sb.image) for sa, sb in zip(a, b))

    def test_boxes_inside_image(self):
        for sample in synth_shapes(50, 80, 4, seed=3):
            for gt in sample.boxes:
                x0, y0, x1, y1 = gt.box
                assert 0 <= x0 < x1 <= 80
                assert 0 <= y0 < y1 <= 80

    def test_class_histogram_roughly_uniform(self):
        num_classes = 3
        counts = np.zeros(num_classes)
        for sample in synth_shapes(1000, 64, num_classes, seed=5):
            for gt in sample.boxes:
                counts[gt.class_id] += 1
        fractions = counts / counts.sum()
        assert np.all(np.abs(fractions - 1 / num_classes) < 0.1 / num_classes + 0.05)

    def test_class_map_names(self):
        assert len(synth_class_map(8)) == 8
        with pytest.raises(ValueError):
            synth_class_map(9)

    def test_num_classes_bounds(self):
        with pytest.raises(ValueError):
            synth_shapes(1, 64, 0, seed=0)
        with pytest.raises(ValueError):
            synth_shapes(1, 32, 2, seed=0)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        class_map = synth_class_map(2)
        samples = synth_shapes(3, 64, 2, seed=9)
        manifest = materialize_samples(samples, tmp_path / "data", class_map)
        loaded = load_manifest(manifest, class_map)
        assert len(loaded) == 3
        for orig, back in zip(samples, loaded):
            assert back.boxes == orig.boxes
            assert np.array_equal(load_image(back), orig.image)

    def test_schema_validation(self, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text('[{"image": "x.png"}]')
        with pytest.raises(Exception):
            load_manifest(bad, synth_class_map(2))

    def test_save_requires_materialized(self, tmp_path):
        sample = synth_shapes(1, 64, 2, seed=0)[0]
        with pytest.raises(ValueError, match="materialize"):
            save_manifest([sample], tmp_path / "m.json", synth_class_map(2))


class TestLetterbox:
    def test_square_identity_size(self):
        image = np.zeros((64, 64, 3), dtype=np.uint8)
        out, transform = letterbox_image(image, 128)
        assert out.shape == (128, 128, 3)
        assert transform.scale == 2.0

    def test_aspect_preserved_with_padding(self):
        image = np.full((50, 100, 3), 200, dtype=np.uint8)
        out, transform = letterbox_image(image, 100)
        assert out.shape == (100, 100, 3)
        # Vertical padding: 25 rows top and bottom are black.
        assert np.all(out[:25] == 0)
        assert np.all(out[75:] == 0)
        assert transform.pad_y == 25.0

    def test_box_roundtrip_within_pixel(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            width = int(rng.integers(40, 300))
            height = int(rng.integers(40, 300))
            image = np.zeros((height, width, 3), dtype=np.uint8)
            _, transform = letterbox_image(image, 128)
            x0, y0 = rng.uniform(0, width * 0.6), rng.uniform(0, height * 0.6)
            x1 = rng.uniform(x0 + 1, width)
            y1 = rng.uniform(y0 + 1, height)
            mapped = transform.apply_box((x0, y0, x1, y1))
            back = transform.invert_box(mapped)
            assert np.allclose(back, (x0, y0, x1, y1), atol=1.0)

    def test_sample_letterbox_maps_boxes(self):
        sample = AnnotatedSample(
            key="s",
            boxes=[GroundTruthBox((10, 10, 30, 30), 0)],
            image=np.zeros((60, 60, 3), dtype=np.uint8),
        )
        image, boxes, transform = letterbox_sample(sample, 120)
        assert image.shape == (120, 120, 3)
        assert boxes[0].box == (20.0, 20.0, 60.0, 60.0)


def test_sample_requires_exactly_one_source():
    with pytest.raises(ValueError):
        AnnotatedSample(key="x", boxes=[])
    with pytest.raises(ValueError):
        AnnotatedSample(
            key="x", boxes=[], image_path="a.png", image=np.zeros((4, 4, 3), dtype=np.uint8)
        )
