"""
バックエンド処理 - チャネル・プロトコル・信念オラクル・安定性解析・実験ワーカー
"""
