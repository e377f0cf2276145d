# 模拟设备与界面模型
