"""One test per acceptance criterion; tolerances live in motility.acceptance."""

import json

import pytest

from motility import acceptance as acc

RESULTS = []

CRITERIA = [
    (1, acc.check_steady),
    (2, acc.check_dual_criterion),
    (3, acc.check_phi1),
    (4, acc.check_q),
    (5, acc.check_multiplicities),
    (6, acc.check_inequality),
    (7, acc.check_tw_residual),
    (8, acc.check_fig1),
    (9, acc.check_fig2),
    (10, acc.check_tw_kernel),
    (11, acc.check_decay),
    (12, acc.check_conjecture),
]


@pytest.mark.parametrize("key,check", CRITERIA, ids=[f"criterion_{k:02d}_{c.__name__[6:]}" for k, c in CRITERIA])
def test_criterion(key, check):
    res = check()
    assert res.key == key
    RESULTS.append(res)
    print(res.line())
    assert res.passed, json.dumps(res.to_dict()["detail"], indent=1)
