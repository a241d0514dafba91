"""
テスト共通設定

ログと出力はテストごとの一時ディレクトリに逃がす (src をインポートする前に環境変数を設定する)。
"""

import os
import tempfile

os.environ.setdefault("CIMA_LOG_DIR", tempfile.mkdtemp(prefix="cima-logs-"))
os.environ.setdefault("CIMA_OUTPUT_DIR", tempfile.mkdtemp(prefix="cima-output-"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from src.backend.channel import ArrivalRates  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def asym4() -> ArrivalRates:
    """4ユーザー・λ^tot=0.5 の非対称到着率"""
    return ArrivalRates.asymmetric(4, 0.5)
