import pytest

from phytoseg import report
from phytoseg.errors import DataError
from phytoseg.metrics import EvalRecord


def _sample_records():
    return [
        EvalRecord("img_a", "plots", "zeroshot", 0.5, False, 0, False),
        EvalRecord("img_b", "plots", "zeroshot", 0.75, False, 0, True),
        EvalRecord("img_a", "plots", "zeroshot", 0.9, True, 4, False),
    ]


def test_csv_round_trip(tmp_path):
    path = report.write_records(tmp_path / "results.csv", _sample_records())
    rows = report.read_records(path)
    assert rows == _sample_records()


def test_csv_header_is_the_documented_schema(tmp_path):
    path = report.write_records(tmp_path / "results.csv", [])
    header = path.read_text().splitlines()[0]
    assert header == "image_id,dataset,method,iou,mask_input_used,seed,both_empty"


def test_read_missing_file_or_columns(tmp_path):
    with pytest.raises(DataError):
        report.read_records(tmp_path / "absent.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("image_id,iou\na,0.5\n")
    with pytest.raises(DataError) as err:
        report.read_records(bad)
    assert "method" in str(err.value)


def test_both_empty_column_is_optional(tmp_path):
    legacy = tmp_path / "legacy.csv"
    legacy.write_text(
        "image_id,dataset,method,iou,mask_input_used,seed\n"
        "a,plots,zeroshot,0.500000,0,0\n"
    )
    (row,) = report.read_records(legacy)
    assert row.both_empty is False
    assert row.iou == 0.5


def test_format_cell():
    assert report.format_cell(0.6716, 0.2894) == "0.672 ± 0.289"
    assert report.format_cell(1.0, 0.0) == "1.000 ± 0.000"


def test_comparison_table_layout():
    records = _sample_records() + [
        EvalRecord("img_c", "trees", "unet@8", 0.25, False, 0, False),
    ]
    table = report.comparison_table(records)
    lines = table.splitlines()
    assert lines[0].split() == ["method", "plots", "trees"]
    assert set(lines[1]) == {"-", " "}
    assert any("unet@8" in line and "-" in line for line in lines[2:])
    body = "\n".join(lines[2:])
    assert "0.717 ± 0.165" in body  # zeroshot on plots over {0.5, 0.75, 0.9}


def test_ablation_table_sections():
    text = report.ablation_table(_sample_records())
    assert text.index("boxes only") < text.index("with mask input")
    assert "(n=2)" in text and "(n=1)" in text
    boxes_only = report.ablation_table([r for r in _sample_records()
                                        if not r.mask_input_used])
    assert "with mask input" not in boxes_only


def test_summary_lines():
    lines = report.summary_lines(_sample_records())
    assert lines == ["zeroshot on plots: 0.717 ± 0.165 over 3 images"]
