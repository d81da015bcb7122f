import json
import math

import numpy as np

from nhg.report import VerificationReport, jsonable, rows_to_csv


def test_jsonable_handles_numpy_and_nonfinite():
    data = {"a": np.float64(1.5), "b": np.int64(2), "c": np.array([1, 2]), "d": math.inf,
            "e": math.nan, "f": np.bool_(True), 3: (1, 2)}
    out = jsonable(data)
    assert out == {"a": 1.5, "b": 2, "c": [1, 2], "d": "inf", "e": "nan", "f": True,
                   "3": [1, 2]}
    json.dumps(out)


def test_report_dict_and_summary():
    rep = VerificationReport("op_x", "sc", False, margins={"m": 0.123456}, seed=4)
    d = rep.to_dict()
    assert d["pass"] is False and d["seed"] == 4 and d["op"] == "op_x"
    assert not rep
    assert rep.summary().startswith("[FAIL] op_x: m=0.1235")


def test_csv_roundtrip_precision():
    rows = [{"t": 0.1, "v": 1 / 3}, {"t": 0.2, "v": 2.0}]
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "t,v"
    assert float(lines[1].split(",")[1]) == 1 / 3
    assert rows_to_csv([]) == ""
