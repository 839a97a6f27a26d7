import sys


def get_log_prefix(log_type):
    if log_type == "error":
        return "❌ "
    if log_type == "success":
        return "✅ "
    if log_type == "dir":
        return "📁 "
    if log_type == "step":
        return "▶ "
    if log_type == "warning":
        return "⚠️ "
    return ""


class ConsoleLog:
    def __init__(self, stream=None, quiet=False):
        self.stream = stream
        self.quiet = quiet

    def __call__(self, message, log_type="info"):
        if self.quiet and log_type not in ("error", "warning"):
            return
        stream = self.stream or sys.stderr
        stream.write(f"{get_log_prefix(log_type)}{message}\n")
        stream.flush()


def null_log(message, log_type="info"):
    pass
