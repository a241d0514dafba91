"""
実験プリセット読み込みモジュール - config/presets.yaml から名前付きの実験設定を読み込む
"""

from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

# 共通関数とロガーをインポート
from src.utils.path_utils import get_app_root
from src.utils.logger import app_logger

# アプリケーションルートと設定パスを定義
APP_ROOT = get_app_root()
PRESETS_CONFIG_PATH = APP_ROOT / "config" / "presets.yaml"


class ExperimentPreset:
    """プリセット情報を保持するクラス"""

    def __init__(self, name: str, description: str = "", base: Optional[Dict[str, Any]] = None,
                 axis: Optional[str] = None, values: Optional[List[Any]] = None,
                 protocols: Optional[List[str]] = None):
        self.name = name
        self.description = description
        self.base = dict(base or {})
        self.axis = axis
        self.values = list(values or [])
        self.protocols = list(protocols or [])

    @property
    def is_sweep(self) -> bool:
        return self.axis is not None

    def __str__(self) -> str:
        return f"{self.name} - {self.description}" if self.description else self.name


def load_presets(path: Path = PRESETS_CONFIG_PATH) -> List[ExperimentPreset]:
    """
    presets.yaml からプリセット一覧を読み込む

    Returns:
        List[ExperimentPreset]: 読み込みに失敗した場合は空リスト。
    """
    try:
        if not path.exists():
            app_logger.warning(f"Preset configuration file not found: {path}")
            return []

        app_logger.debug(f"Loading presets from: {path}")
        with open(path, "r", encoding="utf-8") as f:
            yaml_data = yaml.safe_load(f) or {}

        presets = []
        for entry in yaml_data.get("presets", []):
            if not isinstance(entry, dict) or not entry.get("name"):
                app_logger.warning(f"不正なプリセット定義をスキップします: {entry}")
                continue
            sweep = entry.get("sweep") or {}
            presets.append(ExperimentPreset(
                name=entry["name"],
                description=entry.get("description", ""),
                base=entry.get("config", {}),
                axis=sweep.get("axis"),
                values=sweep.get("values", []),
                protocols=entry.get("protocols", []),
            ))
        return presets

    except (yaml.YAMLError, OSError) as e:
        app_logger.error(f"Failed to load presets from {path}: {e}", exc_info=True)
        return []


def get_preset(name: str, path: Path = PRESETS_CONFIG_PATH) -> Optional[ExperimentPreset]:
    """
    名前でプリセットを取得する

    Returns:
        Optional[ExperimentPreset]: 見つからない場合は None。
    """
    for preset in load_presets(path):
        if preset.name == name:
            return preset
    return None


def get_preset_names(path: Path = PRESETS_CONFIG_PATH) -> List[str]:
    """利用可能なプリセット名のリストを取得"""
    return [preset.name for preset in load_presets(path)]
