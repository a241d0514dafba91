"""
共通ユーティリティ - ロギング・ファイル操作・乱数ストリーム
"""
