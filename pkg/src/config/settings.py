"""
設定管理モジュール - pydanticを使用した設定のバリデーションと保存

設定の優先度:
1. コマンドライン引数
2. 実験設定ファイル (--config で指定した JSON)
3. 環境変数 (CIMA_OUTPUT_DIR)
4. アプリ設定ファイル (config/settings.json)
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.backend.channel import ArrivalRates
from src.utils.path_utils import get_app_root
from src.utils.logger import app_logger

# アプリケーションルートを取得
APP_ROOT = get_app_root()
CONFIG_DIR = APP_ROOT / "config"
OUTPUT_DIR = APP_ROOT / "output"
SETTINGS_PATH = CONFIG_DIR / "settings.json"

OUTPUT_DIR_ENV = "CIMA_OUTPUT_DIR"


class ConfigurationError(ValueError):
    """設定値が不正 (CLI では終了コード 2)"""
    pass


class SimulationSettings(BaseModel):
    """シミュレーション関連の既定値"""
    horizon: int = Field(100_000, description="1回の実行のスロット数 T")
    replications: int = Field(5, description="1設定あたりの反復回数")
    seed: int = Field(0, description="マスターシード")
    burn_in: int = Field(0, description="指標計算から除外する先頭スロット数")
    workers: int = Field(1, description="反復を並列実行するプロセス数")
    audit_interval: int = Field(1, description="上界複製を監査するスロット間隔 (0 で無効)")

    @field_validator("horizon", "replications", "workers")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("1以上の整数を指定してください")
        return v

    @field_validator("seed", "burn_in", "audit_interval")
    @classmethod
    def validate_non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("0以上の整数を指定してください")
        return v


class OutputSettings(BaseModel):
    """出力関連の設定"""
    output_directory: Path = Field(OUTPUT_DIR, description="CSV・図の保存先ディレクトリ")
    csv_float_format: Optional[str] = Field(None, description="CSV の浮動小数点書式 (None なら repr)")


class Settings(BaseModel):
    """アプリケーション全体の設定"""
    simulation: SimulationSettings = Field(default_factory=SimulationSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)


class ExperimentConfig(BaseModel):
    """
    1つの実験 (プロトコル × ユーザー数 × 到着率) の設定

    到着率は rates (明示ベクトル) か lambda_tot + pattern のどちらかで指定する。
    """
    protocol: Literal["cima", "tdma", "backoff"] = "cima"
    n_users: int = Field(4, alias="N")
    rates: Optional[List[float]] = None
    lambda_tot: Optional[float] = None
    pattern: Literal["asymmetric", "symmetric"] = "asymmetric"
    horizon: int = 100_000
    seed: int = 0
    replications: int = 5
    burn_in: int = 0
    output_path: Optional[Path] = None

    model_config = {"populate_by_name": True, "extra": "forbid"}

    @field_validator("n_users", "horizon", "replications")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("1以上の整数を指定してください")
        return v

    @field_validator("seed", "burn_in")
    @classmethod
    def validate_non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("0以上の整数を指定してください")
        return v

    @model_validator(mode="after")
    def validate_rates(self) -> "ExperimentConfig":
        if self.rates is not None:
            if len(self.rates) != self.n_users:
                raise ValueError(f"rates の長さ {len(self.rates)} が N={self.n_users} と一致しません")
            if any(not 0.0 <= r <= 1.0 for r in self.rates):
                raise ValueError("rates の各要素は [0, 1] の範囲で指定してください")
        else:
            if self.lambda_tot is None:
                raise ValueError("rates か lambda_tot のどちらかを指定してください")
            if self.lambda_tot < 0:
                raise ValueError("lambda_tot は0以上で指定してください")
            if self.pattern == "asymmetric":
                if self.n_users % 2 != 0:
                    raise ValueError(f"asymmetric パターンには偶数の N が必要です: N={self.n_users}")
                if 1.4 * self.lambda_tot / self.n_users > 1.0:
                    raise ValueError("asymmetric パターンの高い方の到着率が 1 を超えます")
            elif self.lambda_tot / self.n_users > 1.0:
                raise ValueError("1ユーザーあたりの到着率が 1 を超えます")
        if self.burn_in >= self.horizon:
            raise ValueError(f"burn_in={self.burn_in} は horizon={self.horizon} 未満にしてください")
        return self

    def arrival_rates(self) -> ArrivalRates:
        """設定から到着率ベクトルを導出する"""
        if self.rates is not None:
            return ArrivalRates(tuple(self.rates))
        if self.pattern == "asymmetric":
            return ArrivalRates.asymmetric(self.n_users, self.lambda_tot)
        return ArrivalRates.symmetric(self.n_users, self.lambda_tot)

    @property
    def total_rate(self) -> float:
        return self.arrival_rates().total

    @property
    def pattern_label(self) -> str:
        return "explicit" if self.rates is not None else self.pattern


def load_settings(settings_path: Path = SETTINGS_PATH) -> Settings:
    """
    設定を読み込む

    優先度:
    1. 環境変数 (CIMA_OUTPUT_DIR)
    2. 設定ファイル (settings.json)
    """
    app_logger.debug(f"Attempting to load settings from: {settings_path}")
    settings_dict: Dict[str, Any] = {}

    if settings_path.exists():
        try:
            with open(settings_path, "r", encoding="utf-8") as f:
                settings_dict = json.load(f)
            app_logger.debug(f"Successfully loaded settings from {settings_path}")
        except (json.JSONDecodeError, IOError) as e:
            app_logger.error(f"Failed to load settings file {settings_path}: {e}", exc_info=True)

    output_env = os.environ.get(OUTPUT_DIR_ENV)
    if output_env:
        settings_dict.setdefault("output", {})["output_directory"] = output_env

    try:
        return Settings(**settings_dict)
    except ValidationError as e:
        app_logger.error(f"設定の検証に失敗しました: {e}")
        app_logger.warning("Settings validation failed. Falling back to default settings.")
        return Settings()


def save_settings(settings: Settings, settings_path: Path = SETTINGS_PATH) -> bool:
    """
    設定をファイルに保存する

    Args:
        settings: 保存する設定
        settings_path: 保存先

    Returns:
        bool: 保存に成功したかどうか
    """
    try:
        settings_path.parent.mkdir(parents=True, exist_ok=True)
        with open(settings_path, "w", encoding="utf-8") as f:
            f.write(settings.model_dump_json(indent=2))
        app_logger.info(f"Successfully saved settings to {settings_path}")
        return True
    except OSError as e:
        app_logger.error(f"Error occurred while saving settings to {settings_path}: {e}",
                         exc_info=True)
        return False


def _normalize_keys(values: Dict[str, Any]) -> Dict[str, Any]:
    # ファイルやプリセットでは "N" 表記も受け付ける
    result = dict(values)
    if "N" in result:
        result["n_users"] = result.pop("N")
    return result


def build_experiment_config(file_path: Optional[Union[str, Path]] = None,
                            overrides: Optional[Dict[str, Any]] = None,
                            base: Optional[Dict[str, Any]] = None,
                            defaults: Optional[Settings] = None) -> ExperimentConfig:
    """
    既定値 < base (プリセット) < JSON ファイル < overrides (CLI) の順に重ねて ExperimentConfig を作る。

    Args:
        file_path: 実験設定 JSON のパス
        overrides: コマンドライン引数由来の値 (None の値は無視)
        base: プリセット由来の値
        defaults: 既定値を与える Settings (省略時はモジュールの settings)

    Returns:
        ExperimentConfig

    Raises:
        ConfigurationError: ファイルが読めない、または検証に失敗した場合
    """
    sim = (defaults or settings).simulation
    merged: Dict[str, Any] = {
        "horizon": sim.horizon,
        "replications": sim.replications,
        "seed": sim.seed,
        "burn_in": sim.burn_in,
    }
    merged.update(_normalize_keys(base or {}))

    if file_path is not None:
        path = Path(file_path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                from_file = json.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"設定ファイルが見つかりません: {path}")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"設定ファイルの JSON が不正です ({path}): {e}")
        if not isinstance(from_file, dict):
            raise ConfigurationError(f"設定ファイルはオブジェクトである必要があります: {path}")
        merged.update(_normalize_keys(from_file))

    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    # CLI で lambda_tot だけを与えた場合はファイル側の rates を捨てる
    if (overrides or {}).get("lambda_tot") is not None and (overrides or {}).get("rates") is None:
        merged.pop("rates", None)

    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigurationError(f"実験設定が不正です: {e}") from e


# デフォルト設定インスタンス (起動時に読み込み)
settings = load_settings()
