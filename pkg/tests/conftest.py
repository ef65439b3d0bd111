import ast
import pytest
from pathlib import Path

from python_keed.synth import gen_record

FIXTURE_DIR = Path(__file__).parent / "fixtures"

# Map fixture parameter names to their payload directories
_KINDS = {
    "header": "header",
    "annotation": "annotation",
    "config": "config",
}


def discover_payloads(kind_dir):
    """Discover payload fixtures of one kind.

    Searches fixtures/{kind_dir}/ for *_payload_*.txt files with optional
    companion .expected files (Python literals).

    Returns list of (payload_text, expected_value, fixture_id) tuples.
    """
    pairs = []
    path = FIXTURE_DIR / kind_dir
    if not path.is_dir():
        return pairs
    for payload_file in sorted(path.glob("*_payload_*.txt")):
        expected_file = payload_file.with_suffix(".expected")
        expected = None
        if expected_file.exists():
            expected = ast.literal_eval(expected_file.read_text())
        pairs.append((payload_file.read_text(), expected, payload_file.stem))
    return pairs


@pytest.fixture
def fixture_dir():
    """Return the path to the test fixtures directory."""
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def clean_record():
    """Seeded 100-beat synthetic record without noise or P-absent beats."""
    return gen_record(100, fs=250.0, rr_mean=0.8, rr_jitter=0.1, seed=3, record_id="clean")


@pytest.fixture(scope="session")
def noisy_record():
    """The clean rhythm with additive noise at 10 dB SNR."""
    return gen_record(100, fs=250.0, rr_mean=0.8, rr_jitter=0.1, noise_snr_db=10.0, seed=3, record_id="noisy")


@pytest.fixture(scope="session")
def afib_record():
    """Record whose beats 10..40 have fibrillatory activity instead of P waves."""
    return gen_record(60, fs=250.0, rr_mean=0.8, rr_jitter=0.05, p_dropout_episodes=[(10, 40)], seed=5,
                      record_id="afib")


def pytest_generate_tests(metafunc):
    """Auto-parametrize fixtures based on discovered payload files."""
    for name, kind_dir in _KINDS.items():
        payload_param = f"{name}_payload"
        expected_param = f"{name}_expected"
        has_payload = payload_param in metafunc.fixturenames
        has_expected = expected_param in metafunc.fixturenames
        if not has_payload and not has_expected:
            continue
        pairs = discover_payloads(kind_dir)
        if not pairs:
            # Mark with skip so tests are collected but clearly indicate no fixtures
            metafunc.parametrize(
                f"{payload_param},{expected_param}" if has_expected else payload_param,
                [pytest.param(*((None, None) if has_expected else (None,)), marks=pytest.mark.skip(
                    reason=f"No fixtures in {kind_dir}/"))],
                ids=["no_fixtures"],
            )
            continue
        if has_payload and has_expected:
            metafunc.parametrize(
                f"{payload_param},{expected_param}",
                [(p, e) for p, e, _ in pairs],
                ids=[fid for _, _, fid in pairs],
            )
        elif has_payload:
            metafunc.parametrize(
                payload_param,
                [p for p, _, _ in pairs],
                ids=[fid for _, _, fid in pairs],
            )
