# 策略、执行循环、匹配与回放
