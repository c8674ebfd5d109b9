from __future__ import annotations

import pytest

from evalserve.cli import main
from evalserve.config import ConfigError, ServerConfig, parse_config_file


def write(tmp_path, text):
    path = tmp_path / "server.conf"
    path.write_text(text)
    return path


class TestParse:
    def test_full_config(self, tmp_path):
        path = write(
            tmp_path,
            """
            # grading service
            [server]
            host = 0.0.0.0
            port = 9000
            store = /tmp/x.snap

            [auth]
            backend = directory
            host = ldap.uni.example
            port = 636
            bind_dn_template = uid={user_id},ou=people,dc=uni
            tls = true

            [llm]
            base_url = http://gpu-box:8080
            model = large-model
            request_timeout_s = 120
            max_retries = 5

            [grading]
            concurrency = 2
            timeout_s = 300
            relay_timeout_s = 30
            """,
        )
        config = parse_config_file(path)
        assert config.port == 9000
        assert config.auth_backend == "directory"
        assert config.directory_tls is True
        assert config.directory_port == 636
        assert config.llm_max_retries == 5
        assert config.grading_concurrency == 2
        assert config.relay_timeout_s == 30.0

    def test_unknown_key_reports_line(self, tmp_path):
        path = write(tmp_path, "[server]\nhost = x\nbogus = 1\n")
        with pytest.raises(ConfigError) as err:
            parse_config_file(path)
        assert f"{path}:3" in str(err.value)

    def test_unknown_section_reports_line(self, tmp_path):
        path = write(tmp_path, "[server]\nhost = x\n[nope]\n")
        with pytest.raises(ConfigError) as err:
            parse_config_file(path)
        assert f"{path}:3" in str(err.value)

    def test_key_outside_section_reports_line(self, tmp_path):
        path = write(tmp_path, "host = x\n")
        with pytest.raises(ConfigError) as err:
            parse_config_file(path)
        assert f"{path}:1" in str(err.value)

    def test_bad_number_reports_line(self, tmp_path):
        path = write(tmp_path, "[server]\nport = many\n")
        with pytest.raises(ConfigError) as err:
            parse_config_file(path)
        assert f"{path}:2" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(tmp_path / "absent.conf")


class TestValidate:
    def test_file_backend_requires_existing_user_file(self, tmp_path):
        config = ServerConfig(store_path=str(tmp_path / "s.snap"), auth_file=str(tmp_path / "nope"))
        with pytest.raises(ConfigError):
            config.validate()

    def test_directory_backend_requires_host(self, tmp_path):
        config = ServerConfig(store_path=str(tmp_path / "s.snap"), auth_backend="directory")
        with pytest.raises(ConfigError):
            config.validate()

    def test_missing_template_dir_rejected(self, tmp_path):
        userfile = tmp_path / "u.auth"
        userfile.write_text("")
        config = ServerConfig(
            store_path=str(tmp_path / "s.snap"),
            auth_file=str(userfile),
            prompt_template_dir=str(tmp_path / "missing"),
        )
        with pytest.raises(ConfigError):
            config.validate()

    def test_valid_config_passes(self, tmp_path):
        userfile = tmp_path / "u.auth"
        userfile.write_text("")
        ServerConfig(store_path=str(tmp_path / "s.snap"), auth_file=str(userfile)).validate()


class TestCli:
    def test_bad_config_aborts_with_line_message(self, tmp_path, capsys):
        path = write(tmp_path, "[server]\nmystery = 1\n")
        assert main(["--config", str(path)]) == 2
        err = capsys.readouterr().err
        assert f"{path}:2" in err

    def test_enroll_then_stats(self, tmp_path, capsys):
        store = tmp_path / "state.snap"
        assert main(["enroll", "--store", str(store), "--course", "numerics",
                     "--user", "ada", "--roles", "admin,tutor"]) == 0
        assert main(["stats", "--store", str(store), "--out", str(tmp_path / "reports"),
                     "--salt", "s"]) == 0
        assert (tmp_path / "reports" / "agreement.csv").exists()
        assert (tmp_path / "reports" / "report.json").exists()

    def test_enroll_rejects_unknown_role(self, tmp_path):
        assert main(["enroll", "--store", str(tmp_path / "s.snap"), "--course", "c",
                     "--user", "u", "--roles", "professor"]) == 2

    def test_export_writes_jsonl(self, tmp_path):
        store = tmp_path / "state.snap"
        main(["enroll", "--store", str(store), "--course", "c", "--user", "u", "--roles", "student"])
        out = tmp_path / "data.jsonl"
        assert main(["export", "--store", str(store), "--out", str(out), "--salt", "s"]) == 0
        assert out.exists()
