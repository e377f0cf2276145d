# 技能模板、编译器与技能库
