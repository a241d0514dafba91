"""
パス関連のユーティリティ関数
"""
import os
from pathlib import Path
from typing import Optional


def get_app_root() -> Path:
    """
    アプリケーションのルートディレクトリを取得します。

    Returns:
        Path: プロジェクトのルートディレクトリ (src/ の親)
    """
    # このファイルの親の親の親がプロジェクトルートになる想定
    return Path(__file__).resolve().parent.parent.parent


def env_path(name: str, default: Path) -> Path:
    """
    環境変数で上書き可能なディレクトリパスを返す。

    Args:
        name: 環境変数名 (例: "CIMA_OUTPUT_DIR")
        default: 環境変数が未設定の場合のパス

    Returns:
        Path: 解決済みのパス
    """
    value: Optional[str] = os.environ.get(name)
    if value:
        return Path(value).expanduser()
    return default
