"""Confinement runner copied into sandbox workdirs as _lads_guard.py.

Runs the solution script under an audit hook that denies writes, deletions
and renames outside the workdir, plus process spawning and (optionally)
network access. Reads are unrestricted so pipelines can load datasets from
anywhere. Must stay stdlib-only and import nothing from lads.
"""

import os
import runpy
import sys

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC

_FS_EVENTS = (
    "os.remove",
    "os.rename",
    "os.rmdir",
    "os.mkdir",
    "os.link",
    "os.symlink",
    "os.truncate",
    "os.chmod",
    "shutil.rmtree",
    "shutil.move",
)

_SPAWN_EVENTS = ("subprocess.Popen", "os.posix_spawn", "os.exec", "os.spawn", "os.fork", "os.forkpty")

_NET_EVENTS = ("socket.connect", "socket.bind", "socket.sendto")


def _install(root, allow_subproc, allow_net):
    root = os.path.realpath(root)
    prefix = root + os.sep
    allowed_exact = {root, os.devnull, "/dev/null", "/dev/stdout", "/dev/stderr"}

    def resolve(candidate):
        if isinstance(candidate, int) or candidate is None:
            return None
        if isinstance(candidate, bytes):
            try:
                candidate = os.fsdecode(candidate)
            except (ValueError, UnicodeDecodeError):
                return None
        if not isinstance(candidate, (str, os.PathLike)):
            return None
        try:
            return os.path.realpath(os.path.join(os.getcwd(), os.fspath(candidate)))
        except (ValueError, OSError):
            return None

    def outside(path):
        return path is not None and path not in allowed_exact and not path.startswith(prefix)

    def hook(event, args):
        if event == "open":
            path, mode, flags = args[0], args[1], args[2]
            if isinstance(mode, str):
                writing = any(c in mode for c in "wax+")
            else:
                writing = bool(flags & _WRITE_FLAGS) if mode is None else False
            if writing:
                rp = resolve(path)
                if outside(rp):
                    raise PermissionError(f"sandbox: write outside workdir denied: {rp}")
        elif event in _FS_EVENTS:
            for arg in args:
                rp = resolve(arg)
                if outside(rp):
                    raise PermissionError(f"sandbox: {event} outside workdir denied: {rp}")
        elif event == "os.system" or event in _SPAWN_EVENTS:
            if not allow_subproc:
                raise PermissionError(f"sandbox: {event} denied")
        elif event in _NET_EVENTS:
            if not allow_net:
                raise PermissionError(f"sandbox: network access denied ({event})")

    sys.addaudithook(hook)


def main():
    if len(sys.argv) < 2:
        print("usage: _lads_guard.py <script.py> [args...]", file=sys.stderr)
        return 2
    script = sys.argv[1]
    _install(
        root=os.environ.get("LADS_GUARD_ROOT") or os.getcwd(),
        allow_subproc=os.environ.get("LADS_GUARD_ALLOW_SUBPROC") == "1",
        allow_net=os.environ.get("LADS_GUARD_NO_NET") != "1",
    )
    sys.argv = sys.argv[1:]
    runpy.run_path(script, run_name="__main__")
    return 0


if __name__ == "__main__":
    sys.exit(main())
