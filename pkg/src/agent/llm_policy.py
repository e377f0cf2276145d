"""
基于LLM的策略
通过 OpenAI 兼容接口实现四种策略角色，提示词模板位于 prompts/roles/<role>.md
"""
import json
import os
import time
from typing import Dict, List, Optional

from ..config import PROMPTS_DIR
from ..device.ui_model import UITree, flatten_tree
from ..errors import PolicyParseError
from ..log import get_logger
from .policy import CallCounter, Policy, PolicyRequest, PolicyResponse, parse_response

logger = get_logger(__name__)

try:
    from openai import OpenAI
    LLM_AVAILABLE = True
except ImportError:
    LLM_AVAILABLE = False
    logger.warning("openai_not_installed")

CONNECTION_ERROR_KEYWORDS = ["connection", "connect", "network", "timeout", "timed out", "10054"]


def build_client(api_provider: str, api_key: Optional[str] = None):
    """按提供商选择密钥和 base_url；配置不完整时返回 None"""
    if not LLM_AVAILABLE:
        return None
    provider = api_provider.lower()
    if provider == "deepseek":
        api_key = api_key or os.getenv("DEEPSEEK_API_KEY") or os.getenv("OPENAI_API_KEY")
        base_url = "https://api.deepseek.com"
    elif provider == "qwen":
        # 本地部署的Qwen通常不校验key
        api_key = api_key or os.getenv("QWEN_API_KEY", "not-needed")
        base_url = os.getenv("QWEN_BASE_URL") or "http://localhost:8000/v1"
    elif provider == "openai":
        api_key = api_key or os.getenv("OPENAI_API_KEY")
        base_url = None
    else:
        api_key = api_key or os.getenv(f"{provider.upper()}_API_KEY") or os.getenv("OPENAI_API_KEY")
        base_url = os.getenv(f"{provider.upper()}_BASE_URL")

    if provider == "qwen":
        can_init = bool(base_url)
    elif provider == "openai":
        can_init = bool(api_key)
    else:
        can_init = bool(api_key or base_url)
    if not can_init:
        logger.warning("llm_not_configured", provider=provider)
        return None
    if base_url:
        return OpenAI(api_key=api_key, base_url=base_url)
    return OpenAI(api_key=api_key)


def strip_code_fence(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        lines = text.split("\n")
        text = "\n".join(lines[1:-1])
    return text.strip()


def render_tree(tree: Optional[UITree]) -> str:
    """按展平下标列出节点，策略用下标指定目标元素"""
    if tree is None:
        return "(无界面)"
    lines = [f"app={tree.foreground_app} activity={tree.activity}"]
    for index, node in enumerate(flatten_tree(tree)):
        parts = [f"[{index}]", node.class_name.split(".")[-1]]
        if node.resource_id:
            parts.append(f"id={node.resource_id}")
        if node.text:
            parts.append(f"text={node.text!r}")
        if node.content_desc:
            parts.append(f"desc={node.content_desc!r}")
        if node.clickable:
            parts.append("clickable")
        lines.append(" ".join(parts))
    return "\n".join(lines)


class OpenAIPolicy(Policy):
    """调用大模型的策略；输出无法解析时抛出 PolicyParseError（仍计一次调用）"""

    def __init__(self, api_provider: str = "openai", model: str = "gpt-4o-mini",
                 api_key: Optional[str] = None, counter: Optional[CallCounter] = None,
                 prompts_dir: str = PROMPTS_DIR, client=None, max_retries: int = 3):
        super().__init__(counter)
        self.api_provider = api_provider.lower()
        self.model = model
        self.prompts_dir = prompts_dir
        self.max_retries = max_retries
        self.client = client if client is not None else build_client(self.api_provider, api_key)
        self._templates: Dict[str, str] = {}

    def _load_prompt_template(self, role_name: str) -> str:
        if role_name not in self._templates:
            path = os.path.join(self.prompts_dir, "roles", f"{role_name}.md")
            try:
                with open(path, "r", encoding="utf-8") as f:
                    self._templates[role_name] = f.read()
            except OSError as e:
                logger.warning("prompt_template_missing", path=path, error=str(e))
                self._templates[role_name] = ""
        return self._templates[role_name]

    def _build_user_prompt(self, request: PolicyRequest) -> str:
        history: List[str] = [f"{i + 1}. {action.describe()} ({reasoning})"
                              for i, (action, reasoning) in enumerate(request.history)]
        sections = [
            f"指令: {request.instruction}",
            "当前界面:\n" + render_tree(request.tree),
            "已执行步骤:\n" + ("\n".join(history) if history else "(无)"),
        ]
        if request.feedback:
            sections.append(f"反馈: {request.feedback}")
        if request.context:
            sections.append("附加信息:\n" + json.dumps(request.context, ensure_ascii=False, sort_keys=True))
        sections.append("只返回JSON，不要其他内容。")
        return "\n\n".join(sections)

    def _call_llm(self, prompt: str, system_prompt: Optional[str] = None) -> str:
        """调用LLM，连接类错误等待更久后重试"""
        if not self.client:
            raise RuntimeError("LLM客户端未初始化")
        messages = []
        if system_prompt:
            messages.append({"role": "system", "content": system_prompt})
        messages.append({"role": "user", "content": prompt})

        for attempt in range(self.max_retries + 1):
            try:
                response = self.client.chat.completions.create(
                    model=self.model,
                    messages=messages,
                    temperature=0.0,
                    max_tokens=500,
                    timeout=60,
                )
                return (response.choices[0].message.content or "").strip()
            except Exception as e:
                error_str = str(e).lower()
                is_connection_error = any(k in error_str for k in CONNECTION_ERROR_KEYWORDS)
                if attempt < self.max_retries:
                    wait_time = 2.0 if is_connection_error else 0.5 * (attempt + 1)
                    logger.warning("llm_call_retry", attempt=attempt + 1, wait=wait_time,
                                   error_type=type(e).__name__, connection=is_connection_error)
                    time.sleep(wait_time)
                    continue
                error_msg = f"LLM调用失败 (已重试 {self.max_retries + 1} 次): {type(e).__name__} - {str(e)[:200]}"
                logger.error("llm_call_failed", error=error_msg)
                raise RuntimeError(error_msg) from e
        raise RuntimeError("LLM调用失败")

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        system_prompt = self._load_prompt_template(request.role.value.lower())
        raw = self._call_llm(self._build_user_prompt(request), system_prompt or None)
        logger.debug("llm_raw_output", role=request.role.value, raw=raw[:500])
        try:
            payload = json.loads(strip_code_fence(raw))
        except json.JSONDecodeError as e:
            raise PolicyParseError(f"LLM输出不是合法JSON: {raw[:200]!r}") from e
        return parse_response(payload, request.role)
