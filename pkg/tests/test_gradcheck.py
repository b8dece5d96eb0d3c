import pytest

from rpcl.gradcheck import SuiteResult, SUITES, run_all, reward_loss_suite


def test_run_all():
    results = run_all(instances=10)
    assert [r.name for r in results] == ['reward', 'categorical', 'gaussian', 'critic']
    for result in results:
        assert result.instances == 10
        assert result.passed, result.as_dict()


def test_suites_are_seeded():
    assert reward_loss_suite(instances=5) == reward_loss_suite(instances=5)


@pytest.mark.slow
@pytest.mark.parametrize('name', list(SUITES))
def test_full_suite(name):
    result = SUITES[name](instances=1000)
    assert result.passed, result.as_dict()


def test_suite_result():
    assert SuiteResult('x', 1, 1e-6).as_dict()['result'] == 'pass'
    failed = SuiteResult('x', 1, 1e-3)
    assert not failed.passed
    assert failed.as_dict()['result'] == 'FAIL'
