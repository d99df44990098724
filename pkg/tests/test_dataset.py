import numpy as np
import pandas as pd
import pytest

from gridcast.dataset import (
    TimeSeriesTable, inspect_table, load_grid_csv, repair_gaps, split_train_test, table_from_frame,
)
from gridcast.errors import (
    CutoffOutOfRange, DataError, DuplicateTimestamp, GapTooLarge, MissingColumn, NegativeValue,
    UnorderedTimestamps, UnparseableTimestamp,
)

from conftest import hourly_frame


def write(tmp_path, text, name="grid.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def csv_rows(n, ci=None, start="2022-01-01T00:00:00Z"):
    t0 = pd.Timestamp(start)
    ci = ci if ci is not None else [100.0 + i for i in range(n)]
    lines = ["datetime,carbon_intensity,solar"]
    for i in range(n):
        ts = (t0 + pd.Timedelta(hours=i)).strftime("%Y-%m-%dT%H:%M:%SZ")
        lines.append(f"{ts},{ci[i]},{5 * i}")
    return "\n".join(lines) + "\n"


def test_load_three_rows(tmp_path):
    table = load_grid_csv(write(tmp_path, csv_rows(3)), "X")
    assert len(table) == 3
    assert table.schema == frozenset({"solar"})
    assert table.source_columns == ("solar",)
    assert table.weather_columns == ()
    assert str(table.timestamps.tz) == "UTC"
    np.testing.assert_array_equal(table.carbon_intensity, [100.0, 101.0, 102.0])


def test_missing_ci_column(tmp_path):
    p = write(tmp_path, "datetime,solar\n2022-01-01T00:00:00Z,1\n")
    with pytest.raises(MissingColumn) as info:
        load_grid_csv(p, "X")
    assert info.value.name == "carbon_intensity"


def test_negative_ci_reports_row(tmp_path):
    ci = [100.0] * 10
    ci[6] = -5
    with pytest.raises(NegativeValue) as info:
        load_grid_csv(write(tmp_path, csv_rows(10, ci)), "X")
    assert (info.value.row, info.value.column) == (7, "carbon_intensity")


def test_duplicate_timestamp(tmp_path):
    text = csv_rows(3) + "2022-01-01T01:00:00Z,1,1\n"
    with pytest.raises(DuplicateTimestamp):
        load_grid_csv(write(tmp_path, text), "X")


def test_unordered_rows(tmp_path):
    text = ("datetime,carbon_intensity\n2022-01-01T02:00:00Z,1\n"
            "2022-01-01T01:00:00Z,1\n")
    with pytest.raises(UnorderedTimestamps) as info:
        load_grid_csv(write(tmp_path, text), "X")
    assert info.value.row == 2


@pytest.mark.parametrize("bad", ["yesterday", "2022-01-01T00:30:00Z"])
def test_bad_timestamps(tmp_path, bad):
    text = f"datetime,carbon_intensity\n2021-12-31T23:00:00Z,1\n{bad},2\n"
    with pytest.raises(UnparseableTimestamp) as info:
        load_grid_csv(write(tmp_path, text), "X")
    assert info.value.row == 2


def test_non_numeric_cell(tmp_path):
    text = "datetime,carbon_intensity\n2022-01-01T00:00:00Z,abc\n"
    with pytest.raises(DataError, match="row 1"):
        load_grid_csv(write(tmp_path, text), "X")


def test_offsets_normalized_to_utc(tmp_path):
    text = "datetime,carbon_intensity\n2022-01-01T01:00:00+01:00,7\n2022-01-01T01:00:00Z,8\n"
    table = load_grid_csv(write(tmp_path, text), "X")
    assert list(table.timestamps) == [pd.Timestamp("2022-01-01T00:00Z"),
                                      pd.Timestamp("2022-01-01T01:00Z")]


def test_blank_cells_and_unknown_columns(tmp_path):
    text = ("datetime,carbon_intensity,forecast_dswrf,notes\n"
            "2022-01-01T00:00:00Z,1,,x\n2022-01-01T01:00:00Z,,3,y\n")
    with pytest.warns(UserWarning, match="notes"):
        table = load_grid_csv(write(tmp_path, text), "X")
    assert np.isnan(table.frame["forecast_dswrf"].iloc[0])
    assert np.isnan(table.frame["carbon_intensity"].iloc[1])
    assert "notes" not in table.frame.columns


def test_column_order_is_canonical():
    f = hourly_frame(2, forecast_temp=[1.0, 2], wind=[1.0, 1], carbon_intensity=[5.0, 5],
                     forecast_dswrf=[0.0, 0], coal=[3.0, 3])
    table = table_from_frame(f, "X")
    assert list(table.frame.columns) == ["carbon_intensity", "coal", "wind",
                                         "forecast_dswrf", "forecast_temp"]


def make_table(hours, ci, **extra):
    idx = pd.DatetimeIndex([pd.Timestamp("2022-01-01", tz="UTC") + pd.Timedelta(hours=h)
                            for h in hours])
    return table_from_frame(pd.DataFrame({"carbon_intensity": ci, **extra}, index=idx), "X")


def test_repair_midpoint():
    out = repair_gaps(make_table([0, 1, 3], [10.0, 20.0, 40.0]), max_gap_hours=2)
    assert len(out) == 4
    assert out.frame["carbon_intensity"].iloc[2] == 30.0
    assert out.is_contiguous()


def test_repair_contiguous_is_identity():
    t = make_table(range(5), [1.0, 2, 3, 4, 5])
    assert repair_gaps(t, 6) is t


def test_repair_gap_too_large():
    with pytest.raises(GapTooLarge) as info:
        repair_gaps(make_table([0, 8], [1.0, 2.0]), max_gap_hours=6)
    assert info.value.start_ts == pd.Timestamp("2022-01-01T01:00Z")
    assert info.value.length == 7


def test_repair_blank_cells_like_absent_rows():
    t = make_table(range(5), [1.0, np.nan, np.nan, 4.0, 5.0], solar=[0.0, 1, np.nan, 3, 4])
    out = repair_gaps(t, 2)
    np.testing.assert_allclose(out.frame["carbon_intensity"], [1, 2, 3, 4, 5])
    np.testing.assert_allclose(out.frame["solar"], [0, 1, 2, 3, 4])


def test_repair_rejects_edge_blank():
    with pytest.raises(GapTooLarge):
        repair_gaps(make_table(range(3), [np.nan, 1.0, 2.0]), 6)


def test_repair_max_gap_exact_boundary():
    assert len(repair_gaps(make_table([0, 7], [0.0, 7.0]), 6)) == 8
    with pytest.raises(GapTooLarge):
        repair_gaps(make_table([0, 8], [0.0, 8.0]), 6)


def test_split_counts():
    t = make_table(range(100), np.arange(100.0) + 1)
    train, test = split_train_test(t, t.timestamps[60])
    assert (len(train), len(test)) == (60, 40)
    assert train.end < test.start


def test_split_cutoff_at_start():
    t = make_table(range(10), np.ones(10))
    with pytest.raises(CutoffOutOfRange):
        split_train_test(t, t.start)


def test_inspect_reports_gaps():
    report = inspect_table(make_table([0, 1, 5], [1.0, 2.0, 3.0]))
    assert "rows: 3" in report
    assert "absent-row gaps: 1" in report
    assert "3 h" in report


def test_table_between():
    t = make_table(range(10), np.arange(10.0))
    part = t.between(t.timestamps[2], t.timestamps[5])
    assert isinstance(part, TimeSeriesTable) and len(part) == 3
