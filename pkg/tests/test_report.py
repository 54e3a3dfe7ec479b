"""Metrics report rendering: CSV mirror of the NDJSON stream plus figures."""

import csv
import json

import pytest

from gawwn.errors import FormatError, InputError
from gawwn.report import read_metrics, write_report

GAN_ROWS = [
    {"step": i, "d_loss": 1.5 - 0.01 * i, "g_loss": 0.7 + 0.005 * i,
     "d_acc_real": 0.5, "d_acc_fake": 0.5, "wall_ms": 12.0}
    for i in range(25)
]

EMB_ROWS = [{"step": i, "loss": 2.0 / (i + 1), "wall_ms": 5.0} for i in range(25)]


def _write_ndjson(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path)


class TestReadMetrics:
    def test_round_trips_rows(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", GAN_ROWS)
        assert read_metrics(path) == GAN_ROWS

    def test_skips_blank_lines(self, tmp_path):
        path = tmp_path / "m.ndjson"
        path.write_text('{"step": 0, "loss": 1.0}\n\n{"step": 1, "loss": 0.5}\n')
        assert len(read_metrics(str(path))) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="missing metrics file"):
            read_metrics(str(tmp_path / "nope.ndjson"))

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "m.ndjson"
        path.write_text('{"step": 0}\nnot json\n')
        with pytest.raises(FormatError, match=r"m\.ndjson:2: bad metrics record"):
            read_metrics(str(path))


class TestWriteReport:
    def test_gan_stream_emits_csv_and_both_figures(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", GAN_ROWS)
        out = tmp_path / "report"
        written = write_report(path, str(out))
        names = [w.rsplit("/", 1)[-1] for w in written]
        assert names == ["metrics.csv", "losses.png", "accuracy.png"]
        for w in written:
            assert (out / w.rsplit("/", 1)[-1]).stat().st_size > 0

    def test_csv_matches_stream(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", GAN_ROWS)
        written = write_report(path, str(tmp_path / "report"))
        with open(written[0], newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(GAN_ROWS)
        assert rows[0].keys() == GAN_ROWS[0].keys()
        assert int(rows[3]["step"]) == 3
        assert float(rows[3]["d_loss"]) == GAN_ROWS[3]["d_loss"]

    def test_embedding_stream_has_loss_figure_only(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", EMB_ROWS)
        written = write_report(path, str(tmp_path / "report"))
        names = [w.rsplit("/", 1)[-1] for w in written]
        assert names == ["metrics.csv", "losses.png"]

    def test_short_stream_still_renders(self, tmp_path):
        # fewer rows than the smoothing window
        path = _write_ndjson(tmp_path / "m.ndjson", EMB_ROWS[:3])
        written = write_report(path, str(tmp_path / "report"))
        assert len(written) == 2

    def test_pngs_have_magic_bytes(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", GAN_ROWS)
        written = write_report(path, str(tmp_path / "report"))
        for figure in written[1:]:
            with open(figure, "rb") as fh:
                assert fh.read(8) == b"\x89PNG\r\n\x1a\n"

    def test_empty_stream_rejected(self, tmp_path):
        path = tmp_path / "m.ndjson"
        path.write_text("")
        with pytest.raises(InputError, match="no metric rows"):
            write_report(str(path), str(tmp_path / "report"))

    def test_creates_output_dir(self, tmp_path):
        path = _write_ndjson(tmp_path / "m.ndjson", EMB_ROWS)
        nested = tmp_path / "a" / "b" / "report"
        write_report(path, str(nested))
        assert (nested / "metrics.csv").exists()
