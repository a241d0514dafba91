"""
設定管理 - 設定読み込み・検証・保存
""" 