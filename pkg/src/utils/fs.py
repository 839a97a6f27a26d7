import hashlib
import json
import os
import re
import tempfile

from ..core.errors import IoFailure


def atomic_write_bytes(path, data):
    try:
        target_dir = os.path.dirname(os.path.abspath(path))
        os.makedirs(target_dir, exist_ok=True)

        fd, tmp_path = tempfile.mkstemp(
            prefix=os.path.basename(path) + ".",
            suffix=".tmp",
            dir=target_dir,
        )
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_path, path)
        finally:
            try:
                if os.path.exists(tmp_path):
                    os.remove(tmp_path)
            except OSError:
                pass
    except OSError as e:
        raise IoFailure(f"无法写入文件: {path} ({e})") from e


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path, data):
    atomic_write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def read_bytes(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise IoFailure(f"无法读取文件: {path} ({e})") from e


def natural_key(name):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name)]


def list_files(directory, suffix):
    if not os.path.isdir(directory):
        raise IoFailure(f"目录不存在: {directory}")
    names = [n for n in os.listdir(directory) if n.endswith(suffix)]
    return [os.path.join(directory, n) for n in sorted(names, key=natural_key)]


def list_sequences(directory, suffix):
    """Sub-directories holding frame files; a flat directory is one sequence named after itself."""
    if not os.path.isdir(directory):
        raise IoFailure(f"目录不存在: {directory}")
    subdirs = [
        n
        for n in os.listdir(directory)
        if os.path.isdir(os.path.join(directory, n))
    ]
    sequences = []
    for name in sorted(subdirs, key=natural_key):
        path = os.path.join(directory, name)
        if list_files(path, suffix):
            sequences.append((name, path))
    if not sequences and list_files(directory, suffix):
        sequences.append((os.path.basename(os.path.normpath(directory)), directory))
    return sequences


def calculate_dir_hash(directory):
    if not os.path.exists(directory):
        return None
    sha256 = hashlib.sha256()
    for root, dirs, files in os.walk(directory):
        dirs.sort()
        files.sort()
        rel_root = os.path.relpath(root, directory).replace("\\", "/")
        sha256.update(rel_root.encode("utf-8"))
        for f in files:
            sha256.update(f.encode("utf-8"))
            with open(os.path.join(root, f), "rb") as f_obj:
                while True:
                    data = f_obj.read(65536)
                    if not data:
                        break
                    sha256.update(data)
    return sha256.hexdigest()
