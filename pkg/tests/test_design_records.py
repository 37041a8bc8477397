"""Design construction and record validation."""

import numpy as np
import pytest

from dynjoint import (CohortValidationError, DesignError, ModelSpec,
                      NewcomerData, SubjectRecord, build_design, stack_cohort,
                      validate_cohort)


def divat_like_spec(**kw):
    return ModelSpec(regime="tt", survival_covariates=("scr3", "ar"), **kw)


class TestBuildDesign:
    def test_intercept_and_time(self):
        rec = SubjectRecord("p1", [2.5], [4.5], {"scr3": 0.3, "ar": 1.0}, 6.0, 0)
        rows = build_design(rec, divat_like_spec())
        np.testing.assert_allclose(rows[0].x, [1.0, 2.5])
        np.testing.assert_allclose(rows[0].d, [1.0, 2.5])
        np.testing.assert_allclose(rows[0].c, [0.3, 1.0])

    def test_intercept_only_random_part(self):
        spec = ModelSpec(regime="nn", random_terms=("1",))
        rec = SubjectRecord("p1", [0.5, 4.0], [1.0, 2.0], {}, 6.0, 1)
        rows = build_design(rec, spec)
        for row in rows:
            np.testing.assert_allclose(row.d, [1.0])

    def test_missing_covariate_named(self):
        rec = SubjectRecord("p9", [1.0], [1.0], {"scr3": 0.2}, 3.0, 1)
        with pytest.raises(DesignError, match="'ar'.*'p9'"):
            build_design(rec, divat_like_spec())

    def test_empty_measurements(self):
        rec = SubjectRecord("p0", [], [], {"scr3": 0.1, "ar": 0.0}, 3.0, 0)
        with pytest.raises(DesignError):
            build_design(rec, divat_like_spec())

    def test_survival_row_constant_across_measurements(self):
        rec = SubjectRecord("p1", [0.5, 1.5, 2.5], [1, 2, 3],
                            {"scr3": 0.3, "ar": 0.0}, 4.0, 1)
        rows = build_design(rec, divat_like_spec())
        for row in rows[1:]:
            np.testing.assert_array_equal(row.c, rows[0].c)


class TestStackCohort:
    def test_shapes_and_indexing(self):
        spec = ModelSpec(regime="nn")
        recs = [
            SubjectRecord("a", [0.5, 1.0], [1.0, 2.0], {}, 2.0, 1),
            SubjectRecord("b", [0.3], [0.5], {}, 1.0, 0),
        ]
        des = stack_cohort(recs, spec)
        assert des.n_subjects == 2
        assert des.n_obs == 3
        np.testing.assert_array_equal(des.subj, [0, 0, 1])
        np.testing.assert_allclose(des.x[:, 1], [0.5, 1.0, 0.3])
        np.testing.assert_allclose(des.x_const, [[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(des.x_tflag, [0.0, 1.0])


class TestRecordValidation:
    def test_times_strictly_positive(self):
        rec = SubjectRecord("a", [0.0, 1.0], [1.0, 2.0], {}, 2.0, 1)
        with pytest.raises(CohortValidationError):
            rec.validate()

    def test_event_before_last_measurement(self):
        rec = SubjectRecord("a", [0.5, 3.0], [1.0, 2.0], {}, 2.0, 1)
        with pytest.raises(CohortValidationError):
            rec.validate()

    def test_event_indicator_binary(self):
        rec = SubjectRecord("a", [0.5], [1.0], {}, 2.0, 2)
        with pytest.raises(CohortValidationError):
            rec.validate()

    def test_no_measurements_allowed_for_prediction_only(self):
        rec = SubjectRecord("a", [], [], {}, 2.0, 0)
        rec.validate(role="predict")
        with pytest.raises(CohortValidationError):
            rec.validate(role="fit")

    def test_duplicate_ids_rejected(self):
        recs = [SubjectRecord("a", [0.5], [1.0], {}, 2.0, 1),
                SubjectRecord("a", [0.5], [1.0], {}, 2.0, 1)]
        with pytest.raises(CohortValidationError, match="duplicate"):
            validate_cohort(recs)


class TestNewcomerData:
    def test_truncation_keeps_landmark_measurement(self):
        data = NewcomerData({}, [0.5, 1.0, 2.0, 3.5], [1, 2, 3, 4],
                            landmark=2.0, horizons=(5.0,))
        cut = data.truncated_to_landmark()
        np.testing.assert_allclose(cut.times, [0.5, 1.0, 2.0])
        np.testing.assert_allclose(cut.values, [1, 2, 3])

    def test_validation(self):
        with pytest.raises(CohortValidationError):
            NewcomerData({}, [1.0], [1.0], landmark=-1.0).validate()
        with pytest.raises(CohortValidationError):
            NewcomerData({}, [-1.0], [1.0], landmark=1.0).validate()
