import math

import numpy as np
import pytest

from ansel.core import (
    CropRect,
    EmbeddingVector,
    FaceBox,
    FrameRecord,
    LmParams,
    PhotoIdea,
    PortfolioEntry,
    Provenance,
    ShotList,
    check_frame_order,
    validate_embedding,
)
from ansel.errors import DimensionMismatch, NonFiniteValue, ValidationError


class TestValidateEmbedding:
    def test_well_formed(self):
        v = validate_embedding([1.0, 0.0], 2)
        assert v.dim == 2
        assert not v.normalized
        assert np.array_equal(v.values, [1.0, 0.0])

    def test_length_violation(self):
        with pytest.raises(DimensionMismatch):
            validate_embedding([1.0], 2)

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteValue):
            validate_embedding([math.nan, 0.0], 2)

    def test_inf_rejected(self):
        with pytest.raises(NonFiniteValue):
            validate_embedding([math.inf, 0.0], 2)

    def test_zero_dim_rejected(self):
        with pytest.raises(DimensionMismatch):
            validate_embedding([], 0)

    def test_values_immutable(self):
        v = validate_embedding([1.0, 2.0], 2)
        with pytest.raises(ValueError):
            v.values[0] = 9.0

    def test_normalized_flag_checked(self):
        with pytest.raises(ValidationError):
            EmbeddingVector(values=np.array([3.0, 4.0]), dim=2, normalized=True)


class TestFaceBox:
    def test_valid(self):
        b = FaceBox(x=0, y=0, w=10, h=12, confidence=0.5)
        assert b.w == 10

    @pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (-1, 5)])
    def test_nonpositive_size(self, w, h):
        with pytest.raises(ValidationError):
            FaceBox(x=0, y=0, w=w, h=h, confidence=0.5)

    def test_confidence_range(self):
        with pytest.raises(ValidationError):
            FaceBox(x=0, y=0, w=1, h=1, confidence=1.5)


class TestFrameOrder:
    def test_sorted_ok(self):
        frames = [FrameRecord(i, float(i), f"f{i}.png") for i in range(5)]
        check_frame_order(frames)

    def test_duplicate_id(self):
        frames = [FrameRecord(0, 0.0, "a"), FrameRecord(0, 1.0, "b")]
        with pytest.raises(ValidationError):
            check_frame_order(frames)

    def test_decreasing_timestamp(self):
        frames = [FrameRecord(0, 5.0, "a"), FrameRecord(1, 1.0, "b")]
        with pytest.raises(ValidationError):
            check_frame_order(frames)

    def test_id_sort_implies_time_sort(self):
        frames = [FrameRecord(i, i * 0.5, "x") for i in (3, 0, 2, 1)]
        check_frame_order(frames)
        ordered = sorted(frames, key=lambda f: f.frame_id)
        ts = [f.timestamp_s for f in ordered]
        assert ts == sorted(ts)


class TestShotListTypes:
    def test_ordinals_must_be_dense(self):
        prov = Provenance(prompt_text="p", lm_params=LmParams(), attempt_count=1)
        with pytest.raises(ValidationError):
            ShotList(
                event_name="e",
                ideas=(PhotoIdea(1, "a"), PhotoIdea(3, "b")),
                provenance=prov,
            )

    def test_empty_idea_text(self):
        with pytest.raises(ValidationError):
            PhotoIdea(1, "   ")

    def test_lm_params_defaults(self):
        p = LmParams()
        assert p.model_id == "text-davinci-002"
        assert p.temperature == 0.7
        assert p.max_tokens == 2000
        assert p.top_p == 1.0
        assert p.frequency_penalty == 0.0
        assert p.presence_penalty == 0.0

    def test_lm_params_validation(self):
        with pytest.raises(ValidationError):
            LmParams(temperature=-0.1)
        with pytest.raises(ValidationError):
            LmParams(top_p=0.0)
        with pytest.raises(ValidationError):
            LmParams(max_tokens=0)


class TestCropRect:
    def test_half_open_geometry(self):
        r = CropRect(0, 0, 10, 4)
        assert r.width == 10 and r.height == 4

    @pytest.mark.parametrize("coords", [(5, 0, 5, 10), (0, 9, 10, 9), (-1, 0, 5, 5)])
    def test_degenerate_rejected(self, coords):
        with pytest.raises(ValidationError):
            CropRect(*coords)


class TestPortfolioEntry:
    def test_score_band(self):
        PortfolioEntry(idea_index=1, frame_id=0, score=1.0)
        with pytest.raises(ValidationError):
            PortfolioEntry(idea_index=1, frame_id=0, score=1.1)
