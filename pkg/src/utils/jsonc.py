import json
import re

from ..core.errors import ConfigError, IoFailure


_COMMENT_RE = re.compile(
    r"//.*?$|/\*.*?\*/|\'(?:\\.|[^\\\'])*\'|\"(?:\\.|[^\\\"])*\"",
    re.DOTALL | re.MULTILINE,
)


def loads_jsonc(content, source="<string>"):
    def replacer(match):
        s = match.group(0)
        if s.startswith("/"):
            return ""
        return s

    try:
        return json.loads(_COMMENT_RE.sub(replacer, content))
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON 解析失败: {source} ({e})") from e


def load_jsonc(file_path):
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            content = f.read()
    except OSError as e:
        raise IoFailure(f"无法读取文件: {file_path} ({e})") from e
    return loads_jsonc(content, source=file_path)
