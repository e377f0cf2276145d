# GUI技能编译与回放系统
