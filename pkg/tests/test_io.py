import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psiood import io
from psiood.calibration import CalibrationResult, neglog_grid, threshold_sweep
from psiood.core import OOD, UNKNOWN, Dataset, fit_model, ps_matrix
from psiood.detectors import DetectorDecision, psi_detect_batch
from psiood.errors import (
    DuplicateIdError,
    FormatError,
    HeaderMismatchError,
    NonNumericLogitError,
    SchemaViolationError,
    UnknownLabelError,
    UnwritablePathError,
    VersionMismatchError,
)
from psiood.evaluation import distribution_report, evaluate
from psiood.synth import SynthSpec, generate_split, oracle_labels

import virus_figures as vf


def write(tmp_path, text, name="x.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestReadLogits:
    def test_two_rows(self, tmp_path):
        ds = io.read_logits(write(tmp_path, "id,label,logit_a,logit_b\n1,a,1.5,-2\n2,b,0,3e2\n"))
        assert ds.class_names == ("a", "b")
        assert list(ds.labels) == [0, 1]
        assert ds.logits.tolist() == [[1.5, -2.0], [0.0, 300.0]]

    def test_reserved_labels(self, tmp_path):
        ds = io.read_logits(write(tmp_path, "id,label,logit_a,logit_b\n1,__OOD__,1,2\n2,?,0,3\n"))
        assert list(ds.labels) == [OOD, UNKNOWN]
        assert ds[0].is_ood

    def test_quoted_names(self, tmp_path):
        ds = io.read_logits(write(tmp_path, 'id,label,"logit_Rift Valley",logit_b\n1,"Rift Valley",1,2\n'))
        assert ds.class_names == ("Rift Valley", "b")

    @pytest.mark.parametrize(
        "text,err,line,col",
        [
            ("", HeaderMismatchError, 1, None),
            ("id,label,logit_a\n", HeaderMismatchError, 1, None),
            ("id,lbl,logit_a,logit_b\n", HeaderMismatchError, 1, None),
            ("id,label,logit_a,score_b\n", HeaderMismatchError, 1, 4),
            ("id,label,logit_a,logit___OOD__\n", HeaderMismatchError, 1, None),
            ("id,label,logit_a,logit_b\n1,a,1,x\n", NonNumericLogitError, 2, 4),
            ("id,label,logit_a,logit_b\n1,a,1,nan\n", NonNumericLogitError, 2, 4),
            ("id,label,logit_a,logit_b\n1,a,inf,1\n", NonNumericLogitError, 2, 3),
            ("id,label,logit_a,logit_b\n1,a,1e999,1\n", NonNumericLogitError, 2, 3),
            ("id,label,logit_a,logit_b\n1,a,1,2\n1,b,1,2\n", DuplicateIdError, 3, 1),
            ("id,label,logit_a,logit_b\n1,a,1,2\n2,c,1,2\n", UnknownLabelError, 3, 2),
            ("id,label,logit_a,logit_b\n1,a,1\n", FormatError, 2, None),
        ],
    )
    def test_located_errors(self, tmp_path, text, err, line, col):
        p = write(tmp_path, text)
        with pytest.raises(err) as e:
            io.read_logits(p)
        assert e.value.line == line and e.value.column == col
        assert str(p) in str(e.value) and f"line {line}" in str(e.value)

    def test_write_read_write_is_byte_stable(self, tmp_path, small_synth):
        _, splits = small_synth
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        io.write_logits(a, splits["test"])
        io.write_logits(b, io.read_logits(a))
        assert a.read_bytes() == b.read_bytes()

    def test_labels_round_trip(self, tmp_path):
        spec = SynthSpec.symmetric(3, counts={"test": 5, "ood": 4}, seed=3)
        for split in ("test", "ood"):
            p = tmp_path / f"{split}.csv"
            io.write_logits(p, generate_split(spec, split))
            assert np.array_equal(io.read_logits(p).labels, oracle_labels(spec, split))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=2, max_size=12))
    def test_floats_round_trip_exactly(self, tmp_path_factory, values):
        n = len(values) // 2
        ds = Dataset(["a", "b"], [str(i) for i in range(n)], [0] * n, np.array(values[: 2 * n]).reshape(n, 2))
        p = tmp_path_factory.mktemp("rt") / "x.csv"
        io.write_logits(p, ds)
        back = io.read_logits(p)
        assert back.logits.tobytes() == ds.logits.tobytes()


class TestModelDocument:
    def test_round_trip_is_exact(self, tmp_path, small_synth, rng):
        _, splits = small_synth
        m = fit_model(splits["train"]).with_threshold(1 - 10 ** -3.7)
        p = tmp_path / "m.json"
        io.write_model(p, m)
        back = io.read_model(p)
        assert back == m
        X = rng.normal(2.5, 4, (1000, 3))
        assert ps_matrix(back, X).tobytes() == ps_matrix(m, X).tobytes()

    def test_threshold_absent(self, tmp_path, small_synth):
        _, splits = small_synth
        m = fit_model(splits["train"])
        p = tmp_path / "m.json"
        io.write_model(p, m)
        assert "psi_threshold" not in json.loads(p.read_text())
        assert io.read_model(p).psi_threshold is None

    def test_rewrite_is_byte_stable(self, tmp_path, small_synth):
        _, splits = small_synth
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        io.write_model(a, fit_model(splits["train"]).with_threshold(0.99))
        io.write_model(b, io.read_model(a))
        assert a.read_bytes() == b.read_bytes()

    def _doc(self, small_synth):
        _, splits = small_synth
        return io.model_to_dict(fit_model(splits["train"]))

    @pytest.mark.parametrize("value", [0.0, -1.0, "1"])
    def test_tampered_sigma(self, tmp_path, small_synth, value):
        doc = self._doc(small_synth)
        doc["classes"][1]["sigma_wrong"] = value
        p = write(tmp_path, json.dumps(doc), "m.json")
        with pytest.raises(SchemaViolationError, match="classes/1/sigma_wrong"):
            io.read_model(p)

    def test_non_discriminative_class(self, tmp_path, small_synth):
        doc = self._doc(small_synth)
        doc["classes"][0]["mu_wrong"] = doc["classes"][0]["mu_correct"] + 1
        with pytest.raises(SchemaViolationError, match="classes/0"):
            io.read_model(write(tmp_path, json.dumps(doc), "m.json"))

    def test_bad_threshold(self, tmp_path, small_synth):
        doc = self._doc(small_synth)
        doc["psi_threshold"] = 1.0
        with pytest.raises(SchemaViolationError):
            io.read_model(write(tmp_path, json.dumps(doc), "m.json"))

    def test_version(self, tmp_path, small_synth):
        doc = self._doc(small_synth)
        doc["format_version"] = "1.7"
        io.read_model(write(tmp_path, json.dumps(doc), "m.json"))
        doc["format_version"] = "2.0"
        with pytest.raises(VersionMismatchError):
            io.read_model(write(tmp_path, json.dumps(doc), "m.json"))

    def test_wrong_format(self, tmp_path, small_synth):
        doc = self._doc(small_synth)
        doc["format"] = "psiood-report"
        with pytest.raises(SchemaViolationError):
            io.read_model(write(tmp_path, json.dumps(doc), "m.json"))

    def test_invalid_json_is_located(self, tmp_path):
        with pytest.raises(FormatError) as e:
            io.read_model(write(tmp_path, '{\n  "format": ,\n}', "m.json"))
        assert e.value.line == 2

    def test_unwritable(self, tmp_path, small_synth):
        _, splits = small_synth
        with pytest.raises(UnwritablePathError):
            io.write_model(tmp_path / "missing" / "m.json", fit_model(splits["train"]))


class TestDecisions:
    def test_round_trip(self, tmp_path, small_synth):
        _, splits = small_synth
        m = fit_model(splits["train"]).with_threshold(0.99)
        ds = splits["ood"]
        d = psi_detect_batch(m, ds.logits, ds.ids)
        p = tmp_path / "d.csv"
        io.write_decisions(p, d, m.class_names)
        assert io.read_decisions(p, m.class_names) == d

    def test_without_verdict(self, tmp_path):
        d = [DetectorDecision("a", False, 1, 0.25), DetectorDecision("b", True, None, -3.5)]
        p = tmp_path / "d.csv"
        io.write_decisions(p, d, ["x", "y"])
        assert io.read_decisions(p, ["x", "y"]) == d

    @pytest.mark.parametrize(
        "row,err",
        [
            ("a,2,x,0.5,,", FormatError),
            ("a,0,z,0.5,,", UnknownLabelError),
            ("a,0,x,abc,,", NonNumericLogitError),
            ("a,1,x,0.5,,", FormatError),
            ("a,0,x,0.5,Green,OodSample", FormatError),
        ],
    )
    def test_bad_rows(self, tmp_path, row, err):
        p = write(tmp_path, ",".join(io.DECISION_HEADER) + "\n" + row + "\n")
        with pytest.raises(err) as e:
            io.read_decisions(p, ["x", "y"])
        assert e.value.line == 2


class TestReports:
    def test_fig7_evaluation_document(self, tmp_path):
        r = evaluate(*vf.decisions_and_truth(vf.FIG7))
        p = tmp_path / "r.json"
        io.write_report(p, r)
        doc = io.read_report(p)
        rate = doc["ood_detection_rate"]
        assert (rate["numerator"], rate["denominator"]) == (456, 715)
        assert rate["display"] == "0.638" and rate["value"] == 456 / 715
        assert doc["counts"] == {"n_T": r.n_T, "N_T": 1900, "n_OOD": 456, "N_OOD": 715}
        assert doc["confusion"]["column_totals"] == vf.FIG7_COL_TOTALS
        assert doc["confusion"]["total"] == 2615
        wa = doc["weighted_accuracy"]
        assert wa["value"] == r.weighted_accuracy
        assert all(isinstance(v, int) for row in doc["confusion"]["matrix"] for v in row)

    def test_sweep_document(self, tmp_path, small_synth):
        _, splits = small_synth
        m = fit_model(splits["train"])
        grid = neglog_grid(0.5, 4, 0.5)
        rows = threshold_sweep(m, splits["test"], splits["ood"], grid)
        p = tmp_path / "s.json"
        io.write_report(p, rows, detector="psi", best=rows[2], metric="weighted_accuracy")
        doc = io.read_report(p)
        assert len(doc["rows"]) == len(grid)
        assert [r["threshold"] for r in doc["rows"]] == list(grid)
        assert doc["best"]["threshold"] == grid[2]

    def test_calibration_document(self, tmp_path):
        c = CalibrationResult(1 - 10 ** -3.1, 0.75, 4, 3, 0.75, "psi")
        p = tmp_path / "c.json"
        io.write_report(p, c)
        assert io.read_calibration(p) == c

    def test_calibration_kind_checked(self, tmp_path):
        r = evaluate(*vf.decisions_and_truth(vf.FIG7))
        p = tmp_path / "r.json"
        io.write_report(p, r)
        with pytest.raises(SchemaViolationError):
            io.read_calibration(p)

    def test_distribution_document(self, tmp_path, small_synth):
        _, splits = small_synth
        m = fit_model(splits["train"])
        p = tmp_path / "d.json"
        io.write_report(p, distribution_report(m, {"test": splits["test"], "ood": splits["ood"]}))
        doc = io.read_report(p)
        c0 = doc["classes"][0]
        assert sum(c0["splits"]["test"]["correct"]) + sum(c0["splits"]["test"]["wrong"]) == len(splits["test"])
        assert "ood" not in c0["splits"]["test"] and sum(c0["splits"]["ood"]["ood"]) == len(splits["ood"])
        assert len(c0["ps_curve"]["x"]) == len(c0["ps_curve"]["ps"]) >= 200

    def test_unsupported_object(self, tmp_path):
        with pytest.raises(TypeError):
            io.write_report(tmp_path / "x.json", {"a": 1})


class TestJsonEmitter:
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, x):
        assert json.loads(io.dumps({"x": x}))["x"] == x

    def test_integers_stay_integers(self):
        assert json.loads(io.dumps({"a": 3, "b": 3.0})) == {"a": 3, "b": 3.0}
        assert '"b": 3.0' in io.dumps({"b": 3.0})

    def test_synth_spec_round_trip(self, tmp_path):
        s = SynthSpec(2, ((5, 1), (7, 2)), ((0, 1), (1, 0.5)), (3, 2), {"train": 4}, 11, ("x", "y"))
        p = tmp_path / "s.json"
        io.write_synth_spec(p, s)
        assert io.read_synth_spec(p) == s
