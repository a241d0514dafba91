"""
ロギング機能 - アプリケーション全体でのログ記録
- 標準logging + ローテーション出力
- Rich によるコンソール表示
"""

import logging
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler, TimedRotatingFileHandler

from rich.logging import RichHandler

# 共通関数をインポート
from src.utils.path_utils import get_app_root, env_path

# アプリケーションルートとログディレクトリを定義 (CIMA_LOG_DIR で変更可能)
APP_ROOT = get_app_root()
LOG_DIR = env_path("CIMA_LOG_DIR", APP_ROOT / "logs")

# ログフォーマット
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logger(name: str = "cima_sim",
                 console_level: int = logging.INFO,
                 file_level: int = logging.INFO) -> logging.Logger:
    """
    アプリケーションロガーのセットアップ

    Args:
        name: ロガー名
        console_level: コンソール出力のログレベル
        file_level: ファイル出力のログレベル

    Returns:
        設定済みのロガーインスタンス
    """
    logger = logging.getLogger(name)

    # 既に設定済みの場合は何もしない
    if logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    # 1. コンソールハンドラの設定（Rich利用）
    console_handler = RichHandler(level=console_level,
                                  show_time=False,
                                  show_path=False)
    console_handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(console_handler)

    try:
        LOG_DIR.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        # 書き込めない環境ではコンソールのみで動作させる
        logger.warning(f"ログディレクトリを作成できません ({LOG_DIR}): {e}")
        return logger

    # 2. 通常ログファイルハンドラの設定（日次ローテーション、最大30日）
    file_handler = TimedRotatingFileHandler(
        filename=LOG_DIR / "app.log",
        when="midnight",
        interval=1,
        backupCount=30,
        encoding="utf-8",
        delay=True,
    )
    file_handler.setLevel(file_level)
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    logger.addHandler(file_handler)

    # 3. デバッグログファイルハンドラの設定（サイズローテーション）
    debug_handler = RotatingFileHandler(
        filename=LOG_DIR / "debug.log",
        maxBytes=10 * 1024 * 1024,  # 10MB
        backupCount=5,
        encoding="utf-8",
        delay=True,
    )
    debug_handler.setLevel(logging.DEBUG)
    debug_handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    logger.addHandler(debug_handler)

    logger.debug(f"===== ロガー初期化: {datetime.now().strftime(DATE_FORMAT)} =====")
    logger.debug(f"OS: {sys.platform}, Python: {sys.version}")

    return logger


def set_console_level(level: int) -> None:
    """
    コンソール (Rich) ハンドラのログレベルだけを変更する。

    Args:
        level: 新しいログレベル (logging.DEBUG など)
    """
    for handler in app_logger.handlers:
        if isinstance(handler, RichHandler):
            handler.setLevel(level)


# アプリケーション全体で使うロガーインスタンス
app_logger = setup_logger()
