# 实验控制器、计划与指标
