"""Deterministic simulated cyber range.

A declarative NetworkModel (hosts, services, seeded files, exploit database)
plus emulators for the port scanner, the exploit-framework console, and remote
shells. All command errors are in-band output lines, never exceptions, so the
translation stage can see them and report a FAILURE. Given the same model,
session state, and command list the emulators are byte-deterministic: latency
and durations are fixed constants and wall-clock is never consulted.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import yaml


class ScenarioError(ValueError):
    """A scenario file violated the schema or its invariants."""


class Effect(Enum):
    ROOT_SHELL = "RootShell"
    USER_SHELL = "UserShell"
    CREDENTIAL_LEAK = "CredentialLeak"
    NONE = "None"


@dataclass(frozen=True)
class Service:
    port: int
    protocol: str
    name: str
    product: str
    version: str
    vulnerability_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Host:
    name: str
    ip: str
    mac: str
    os_family: str
    services: tuple[Service, ...] = ()
    files: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExploitEntry:
    module: str
    product: str
    version: str  # exact, or prefix when it ends with "X", or "*" for any
    payloads: tuple[str, ...]
    effect: Effect
    vulnerability_id: Optional[str] = None

    def matches(self, service: Service) -> bool:
        if self.product.lower() != service.product.lower():
            return False
        if self.version == "*":
            return True
        if self.version.endswith("X"):
            return service.version.startswith(self.version[:-1])
        return self.version == service.version


@dataclass(frozen=True)
class NetworkModel:
    name: str
    hosts: tuple[Host, ...]
    exploit_db: dict  # module path -> ExploitEntry
    orphan_vulnerabilities: tuple[str, ...] = ()

    def host_by_ip(self, ip: str) -> Optional[Host]:
        for h in self.hosts:
            if h.ip == ip:
                return h
        return None


@dataclass
class Session:
    host_ip: str
    privilege: str  # "root" | "user"
    cwd: str = "/"
    open: bool = True


@dataclass
class SessionState:
    """Per-campaign console and shell state; single-owner, mutable."""

    sessions: dict[int, Session] = field(default_factory=dict)
    next_session_id: int = 1
    current_module: Optional[str] = None
    staged: dict[str, str] = field(default_factory=dict)
    interacting: Optional[int] = None
    # paths of archives created by shell archiving commands, per host ip
    archives: dict[str, list[str]] = field(default_factory=dict)


def _validate_model(model: NetworkModel) -> NetworkModel:
    ips: set[str] = set()
    for host in model.hosts:
        if host.ip in ips:
            raise ScenarioError(f"duplicate host IP {host.ip}")
        ips.add(host.ip)
        ports: set[int] = set()
        for svc in host.services:
            if svc.port in ports:
                raise ScenarioError(f"duplicate port {svc.port} on host {host.ip}")
            ports.add(svc.port)
    covered: dict[str, str] = {}
    for entry in model.exploit_db.values():
        if entry.vulnerability_id:
            if entry.vulnerability_id in covered:
                raise ScenarioError(
                    f"vulnerability {entry.vulnerability_id} referenced by "
                    f"{covered[entry.vulnerability_id]} and {entry.module}"
                )
            covered[entry.vulnerability_id] = entry.module
    orphans = []
    for host in model.hosts:
        for svc in host.services:
            for vid in svc.vulnerability_ids:
                if vid not in covered:
                    orphans.append(vid)
    return NetworkModel(
        name=model.name,
        hosts=model.hosts,
        exploit_db=model.exploit_db,
        orphan_vulnerabilities=tuple(sorted(set(orphans))),
    )


def _model_from_dict(data: dict) -> NetworkModel:
    try:
        hosts = []
        for h in data.get("hosts", []):
            services = tuple(
                Service(
                    port=int(s["port"]),
                    protocol=s.get("protocol", "tcp"),
                    name=s["name"],
                    product=s.get("product", s["name"]),
                    version=str(s.get("version", "")),
                    vulnerability_ids=tuple(s.get("vulnerabilities", [])),
                )
                for s in h.get("services", [])
            )
            hosts.append(
                Host(
                    name=h["name"],
                    ip=h["ip"],
                    mac=h.get("mac", "02:42:AC:10:02:03"),
                    os_family=h.get("os", "Linux"),
                    services=services,
                    files=dict(h.get("files", {})),
                )
            )
        exploit_db = {}
        for module, e in data.get("exploits", {}).items():
            requires = e.get("requires", {})
            exploit_db[module] = ExploitEntry(
                module=module,
                product=requires.get("product", ""),
                version=str(requires.get("version", "*")),
                payloads=tuple(e.get("payloads", [])),
                effect=Effect(e.get("effect", "None")),
                vulnerability_id=e.get("vulnerability_id"),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}")
    return _validate_model(
        NetworkModel(name=data.get("name", "unnamed"), hosts=tuple(hosts), exploit_db=exploit_db)
    )


def load_network(path: str) -> NetworkModel:
    """Load and validate a scenario file (YAML)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")
    return _model_from_dict(data)


# --- built-in scenarios -----------------------------------------------------

DEFAULT_TARGET_IP = "172.16.2.3"
DEFAULT_TARGET_MAC = "02:42:AC:10:02:03"

_SEED_FILES = {
    "/etc/passwd": (
        "root:x:0:0:root:/root:/bin/bash\n"
        "daemon:x:1:1:daemon:/usr/sbin:/bin/sh\n"
        "msfadmin:x:1000:1000:msfadmin,,,:/home/msfadmin:/bin/bash\n"
        "user:x:1001:1001:just a user,111,,:/home/user:/bin/bash\n"
    ),
    "/etc/shadow": (
        "root:$1$aQ7hJZeM$Xq1vUK9jkPaNbBCSPJhU50:14747:0:99999:7:::\n"
        "msfadmin:$1$XN10Zj2c$Rt/zzCW3mLtUWA.ihZjA5/:14684:0:99999:7:::\n"
        "user:$1$HESu9xrH$k.o3G93DGoXIiQKkPmUgZ0:14699:0:99999:7:::\n"
    ),
    "/var/log/auth.log": (
        "May  6 10:01:02 target1 sshd[3402]: Accepted password for msfadmin "
        "from 172.16.2.9 port 51852 ssh2\n"
        "May  6 10:14:40 target1 su[3511]: Successful su for root by msfadmin\n"
    ),
    "/root/.bash_history": "cat /etc/shadow\nservice vsftpd restart\nexit\n",
}

# Table-style service catalog: name -> (port, proto, service name, product, version)
SERVICE_CATALOG: dict[str, tuple[int, str, str, str, str]] = {
    "vsftpd 2.3.4": (21, "tcp", "ftp", "vsftpd", "2.3.4"),
    "OpenSSH 4.7": (22, "tcp", "ssh", "OpenSSH", "4.7p1"),
    "Telnet": (23, "tcp", "telnet", "Linux telnetd", ""),
    "SMTP": (25, "tcp", "smtp", "Postfix smtpd", ""),
    "Apache 2.2.8": (80, "tcp", "http", "Apache httpd", "2.2.8"),
    "Port 513 \"Login\"": (513, "tcp", "login", "rlogind", ""),
    "MySQL 5.0.51": (3306, "tcp", "mysql", "MySQL", "5.0.51a"),
    "PostgreSQL 8.3.7": (5432, "tcp", "postgresql", "PostgreSQL DB", "8.3.7"),
    "Samba 4.X": (445, "tcp", "netbios-ssn", "Samba smbd", "4.2"),
    "UnrealIRC": (6667, "tcp", "irc", "UnrealIRCd", "3.2.8.1"),
}

_EXPLOIT_CATALOG: dict[str, dict] = {
    "exploit/unix/ftp/vsftpd_234_backdoor": {
        "requires": {"product": "vsftpd", "version": "2.3.4"},
        "payloads": ["cmd/unix/interact"],
        "effect": "RootShell",
        "vulnerability_id": "VSFTPD-234-BACKDOOR",
    },
    "exploit/unix/irc/unreal_ircd_3281_backdoor": {
        "requires": {"product": "UnrealIRCd", "version": "3.2.8.1"},
        "payloads": ["cmd/unix/reverse", "cmd/unix/bind_perl"],
        "effect": "RootShell",
        "vulnerability_id": "UNREAL-3281-BACKDOOR",
    },
    "exploit/multi/samba/usermap_script": {
        "requires": {"product": "Samba smbd", "version": "4.X"},
        "payloads": ["cmd/unix/reverse"],
        "effect": "RootShell",
        "vulnerability_id": "SAMBA-USERMAP",
    },
    "exploit/linux/postgres/postgres_payload": {
        "requires": {"product": "PostgreSQL DB", "version": "8.3.7"},
        "payloads": ["linux/x86/meterpreter/reverse_tcp"],
        "effect": "UserShell",
        "vulnerability_id": "POSTGRES-PAYLOAD",
    },
    "auxiliary/scanner/mysql/mysql_hashdump": {
        "requires": {"product": "MySQL", "version": "5.0.51a"},
        "payloads": [],
        "effect": "CredentialLeak",
        "vulnerability_id": "MYSQL-WEAK-CREDS",
    },
    "auxiliary/scanner/rservices/rlogin_login": {
        "requires": {"product": "rlogind", "version": "*"},
        "payloads": [],
        "effect": "UserShell",
        "vulnerability_id": "RLOGIN-TRUST",
    },
    # Present so the console accepts the module but no access is ever granted.
    "auxiliary/scanner/telnet/telnet_login": {
        "requires": {"product": "Linux telnetd", "version": "*"},
        "payloads": [],
        "effect": "None",
        "vulnerability_id": "TELNET-LOGIN",
    },
    "auxiliary/scanner/smtp/smtp_enum": {
        "requires": {"product": "Postfix smtpd", "version": "*"},
        "payloads": [],
        "effect": "None",
        "vulnerability_id": "SMTP-ENUM",
    },
}

_VULN_BY_SERVICE: dict[str, tuple[str, ...]] = {
    "vsftpd 2.3.4": ("VSFTPD-234-BACKDOOR",),
    "UnrealIRC": ("UNREAL-3281-BACKDOOR",),
    "Samba 4.X": ("SAMBA-USERMAP",),
    "PostgreSQL 8.3.7": ("POSTGRES-PAYLOAD",),
    "MySQL 5.0.51": ("MYSQL-WEAK-CREDS",),
    "Port 513 \"Login\"": ("RLOGIN-TRUST",),
    "Telnet": ("TELNET-LOGIN",),
    "SMTP": ("SMTP-ENUM",),
}


def _builtin_model(name: str, service_names: list[str], target_ip: str) -> NetworkModel:
    services = []
    for sname in service_names:
        if sname not in SERVICE_CATALOG:
            raise ScenarioError(f"unknown catalog service {sname!r}")
        port, proto, svc, product, version = SERVICE_CATALOG[sname]
        services.append(
            {
                "port": port,
                "protocol": proto,
                "name": svc,
                "product": product,
                "version": version,
                "vulnerabilities": list(_VULN_BY_SERVICE.get(sname, ())),
            }
        )
    data = {
        "name": name,
        "hosts": [
            {
                "name": "target1",
                "ip": target_ip,
                "mac": DEFAULT_TARGET_MAC,
                "os": "Linux",
                "services": services,
                "files": dict(_SEED_FILES),
            }
        ],
        "exploits": dict(_EXPLOIT_CATALOG),
    }
    return _model_from_dict(data)


def single_service(service_name: str, target_ip: str = DEFAULT_TARGET_IP) -> NetworkModel:
    """Parameterized single-service variant of the built-in target."""
    slug = re.sub(r"[^a-z0-9.]+", "-", service_name.lower()).strip("-")
    return _builtin_model(f"single-{slug}", [service_name], target_ip)


def builtin_network(name: str, target_ip: str = DEFAULT_TARGET_IP) -> NetworkModel:
    """Resolve a built-in scenario name.

    ``metasploitable-like`` carries all ten catalog services; ``no-ports`` has
    a host with zero services; ``single-<catalog name>`` holds one service.
    """
    if name == "metasploitable-like":
        return _builtin_model(name, list(SERVICE_CATALOG), target_ip)
    if name == "no-ports":
        return _builtin_model(name, [], target_ip)
    if name.startswith("single-"):
        want = name[len("single-"):]
        for sname in SERVICE_CATALOG:
            slug = re.sub(r"[^a-z0-9.]+", "-", sname.lower()).strip("-")
            if slug == want:
                return single_service(sname, target_ip)
    raise ScenarioError(f"unknown built-in scenario {name!r}")


def builtin_scenario_names() -> list[str]:
    names = ["metasploitable-like", "no-ports"]
    for sname in SERVICE_CATALOG:
        slug = re.sub(r"[^a-z0-9.]+", "-", sname.lower()).strip("-")
        names.append(f"single-{slug}")
    return names


# --- scan emulator ----------------------------------------------------------

_IP_RE = re.compile(r"\b(\d{1,3}(?:\.\d{1,3}){3})\b")
_FIXED_LATENCY = "0.0000040s"
_FIXED_DURATION = "0.20 seconds"


def is_scan_command(command: str) -> bool:
    tokens = command.split()
    return bool(tokens) and tokens[0] == "nmap"


def sim_scan(model: NetworkModel, command: str) -> str:
    """Emulate a service scan of a target named on the command line."""
    lines = ["Starting Nmap 7.93 ( https://nmap.org )"]
    m = _IP_RE.search(command)
    target = model.host_by_ip(m.group(1)) if m else None
    if target is None:
        ip = m.group(1) if m else "unknown"
        lines.append(f"Note: Host seems down. If it is really up, try -Pn.")
        lines.append(f"Nmap done: 1 IP address (0 hosts up) scanned in {_FIXED_DURATION}")
        return "\n".join(lines)
    lines.append(f"Nmap scan report for {target.name} ({target.ip})")
    lines.append(f"Host is up ({_FIXED_LATENCY} latency).")
    open_ports = sorted(target.services, key=lambda s: s.port)
    closed = 1000 - len(open_ports)
    lines.append(f"Not shown: {closed} closed tcp ports (reset)")
    if open_ports:
        lines.append("PORT STATE SERVICE VERSION")
        for svc in open_ports:
            version = f" {svc.version}" if svc.version else ""
            lines.append(
                f"{svc.port}/{svc.protocol} open {svc.name} {svc.product}{version}"
            )
    else:
        lines.append("All 1000 scanned ports are closed (0 open ports)")
    lines.append(f"MAC Address: {target.mac} (Unknown)")
    lines.append("Service detection performed. Please report any incorrect results.")
    lines.append(f"Nmap done: 1 IP address (1 host up) scanned in {_FIXED_DURATION}")
    return "\n".join(lines)


# --- console and shell emulator ----------------------------------------------

_ERROR_MARKERS = (
    "[-]",
    "Permission denied",
    "No such file or directory",
    "command not found",
    "not found",
    "Connection refused",
    "Failed to load module",
    "Invalid session identifier",
)


def output_is_error(output: str) -> bool:
    return any(marker in output for marker in _ERROR_MARKERS)


def _shell_user(session: Session) -> str:
    return "root" if session.privilege == "root" else "msfadmin"


def sim_shell_read(model: NetworkModel, session: Session, path: str) -> str:
    """Read a seeded file through an open shell session; errors are in-band."""
    if not session.open:
        return f"[-] Session is closed"
    host = model.host_by_ip(session.host_ip)
    if host is None or path not in host.files:
        return f"cat: {path}: No such file or directory"
    if path == "/etc/shadow" and session.privilege != "root":
        return f"cat: {path}: Permission denied"
    return host.files[path].rstrip("\n")


def _shell_command(
    model: NetworkModel, state: SessionState, session: Session, command: str
) -> tuple[list[str], bool]:
    """Run one command inside an interactive session. Returns (lines, exited)."""
    host = model.host_by_ip(session.host_ip)
    try:
        tokens = shlex.split(command)
    except ValueError:
        tokens = command.split()
    if not tokens:
        return [], False
    prog = tokens[0]
    if prog in ("exit", "background", "bg"):
        return ["[*] Backgrounding session..."], True
    if prog == "whoami":
        return [_shell_user(session)], False
    if prog == "id":
        if session.privilege == "root":
            return ["uid=0(root) gid=0(root) groups=0(root)"], False
        return ["uid=1000(msfadmin) gid=1000(msfadmin) groups=1000(msfadmin)"], False
    if prog == "pwd":
        return [session.cwd], False
    if prog == "cd":
        target = tokens[1] if len(tokens) > 1 else "/"
        dirs = {p.rsplit("/", 1)[0] or "/" for p in host.files}
        dirs.add("/")
        if target in dirs:
            session.cwd = target
            return [], False
        return [f"sh: cd: {target}: No such file or directory"], False
    if prog == "ls":
        target = tokens[-1] if len(tokens) > 1 and not tokens[-1].startswith("-") else session.cwd
        prefix = target.rstrip("/") or ""
        names = sorted(
            p[len(prefix) + 1:].split("/")[0]
            for p in list(host.files) + state.archives.get(host.ip, [])
            if p.startswith(prefix + "/")
        )
        if not names:
            if target in host.files:
                return [target], False
            return [f"ls: cannot access '{target}': No such file or directory"], False
        return sorted(set(names)), False
    if prog == "cat":
        if len(tokens) < 2:
            return ["usage: cat <file>"], False
        out: list[str] = []
        for path in tokens[1:]:
            out.append(sim_shell_read(model, session, path))
        return out, False
    if prog == "tar":
        members = [t for t in tokens[1:] if t.startswith("/")]
        if not members:
            return ["tar: no files or directories specified"], False
        archive, sources = members[0], members[1:]
        if not sources:
            return ["tar: Cowardly refusing to create an empty archive"], False
        lines = []
        for src in sources:
            if src in host.files:
                lines.append(f"a {src.lstrip('/')}")
            else:
                lines.append(f"tar: {src}: No such file or directory")
        if any(src in host.files for src in sources):
            state.archives.setdefault(host.ip, []).append(archive)
        return lines, False
    if prog in ("ftp", "nc", "scp", "curl", "wget", "tftp"):
        # no exfil channel exists unless the scenario declares one
        return [f"{prog}: connect: Connection refused"], False
    return [f"sh: 1: {prog}: not found"], False


def sim_console(
    model: NetworkModel, state: SessionState, commands: list[str]
) -> tuple[str, SessionState]:
    """Interpret exploit-console and shell commands against the model.

    The passed SessionState is mutated and returned; all failures are in-band
    output lines so the translation stage can classify them.
    """
    out: list[str] = []
    for command in commands:
        cmd = command.strip()
        if not cmd:
            continue
        if is_scan_command(cmd):
            out.append(sim_scan(model, cmd))
            continue
        if state.interacting is not None:
            session = state.sessions.get(state.interacting)
            if session is None or not session.open:
                out.append(f"[-] Invalid session identifier: {state.interacting}")
                state.interacting = None
                continue
            lines, exited = _shell_command(model, state, session, cmd)
            out.extend(lines)
            if exited:
                state.interacting = None
            continue
        tokens = cmd.split()
        prog = tokens[0]
        if prog == "msfconsole":
            out.append("[*] Starting the Metasploit Framework console...")
        elif prog == "search" and len(tokens) > 1:
            needle = tokens[1].lower()
            hits = [m for m in sorted(model.exploit_db) if needle in m.lower()]
            out.extend(hits if hits else [f"[-] No results from search: {tokens[1]}"])
        elif prog == "use" and len(tokens) > 1:
            module = tokens[1]
            if module in model.exploit_db:
                state.current_module = module
                state.staged = {}
                out.append(f"[*] Using {module}")
            else:
                out.append(f"[-] Failed to load module: {module}")
        elif prog == "set":
            if state.current_module is None:
                out.append("[-] Unknown command: set. No module selected; use a module first.")
            elif len(tokens) >= 3:
                key = tokens[1].upper() if tokens[1].lower() in ("rhosts", "rhost", "lhost", "lport") else tokens[1]
                value = " ".join(tokens[2:])
                state.staged[key] = value
                out.append(f"{tokens[1]} => {value}")
            else:
                out.append("[-] set: requires an option name and value")
        elif prog in ("exploit", "run"):
            out.extend(_run_module(model, state))
        elif prog == "sessions":
            out.extend(_sessions_command(state, tokens))
        elif prog in ("back", "exit", "quit"):
            state.current_module = None
            state.staged = {}
        else:
            out.append(f"bash: {prog}: command not found")
    return "\n".join(out), state


def _run_module(model: NetworkModel, state: SessionState) -> list[str]:
    if state.current_module is None:
        return ["[-] Unknown command: exploit. No module selected; use a module first."]
    entry: ExploitEntry = model.exploit_db[state.current_module]
    rhost = state.staged.get("RHOSTS") or state.staged.get("RHOST")
    host = model.host_by_ip(rhost) if rhost else (model.hosts[0] if model.hosts else None)
    lines = [f"[*] Started reverse TCP handler"]
    matched: Optional[Service] = None
    if host is not None:
        for svc in host.services:
            if entry.matches(svc):
                matched = svc
                break
    if matched is None or entry.effect is Effect.NONE:
        lines.append("[*] Exploit completed, but no session was created.")
        return lines
    if entry.effect is Effect.CREDENTIAL_LEAK:
        lines.append(f"[+] {host.ip}:{matched.port} - Credentials harvested: root:5f4dcc3b5aa765d61d8327deb882cf99")
        lines.append("[+] Credential data saved")
        return lines
    sid = state.next_session_id
    state.next_session_id += 1
    privilege = "root" if entry.effect is Effect.ROOT_SHELL else "user"
    state.sessions[sid] = Session(host_ip=host.ip, privilege=privilege)
    lhost = state.staged.get("LHOST", "172.16.2.2")
    lines.append(
        f"[*] Command shell session {sid} opened "
        f"({lhost}:4444 -> {host.ip}:{matched.port})"
    )
    return lines


def _sessions_command(state: SessionState, tokens: list[str]) -> list[str]:
    if len(tokens) >= 3 and tokens[1] == "-i":
        try:
            sid = int(tokens[2])
        except ValueError:
            return [f"[-] Invalid session identifier: {tokens[2]}"]
        session = state.sessions.get(sid)
        if session is None or not session.open:
            return [f"[-] Invalid session identifier: {sid}"]
        state.interacting = sid
        return [f"[*] Starting interaction with {sid}..."]
    if not state.sessions:
        return ["No active sessions."]
    rows = ["Active sessions", "==============="]
    for sid, s in sorted(state.sessions.items()):
        status = "open" if s.open else "closed"
        rows.append(f"  {sid}  shell ({s.privilege})  {s.host_ip}  {status}")
    return rows
