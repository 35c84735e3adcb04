"""One test per acceptance criterion, run at the stated tolerances.

Irreversibility (criterion 2) audits every run the others produced, so it
goes last.
"""

import pytest

from qsfrac import acceptance

ORDER = [k for k in acceptance.CRITERIA if k != 2] + [2]


@pytest.mark.slow
@pytest.mark.acceptance
@pytest.mark.parametrize("cid", ORDER, ids=[f"criterion_{k}" for k in ORDER])
def test_criterion(cid, acceptance_log):
    res = acceptance.CRITERIA[cid]()
    line = res.line()
    print(line)
    acceptance_log.append(line)
    assert res.passed, line
