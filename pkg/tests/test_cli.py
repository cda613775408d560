import json

import pytest

from webqa import cli
from webqa.fixtures import FixtureServer
from webqa.lmbackend import CachedBackend, HTTPBackend, MockBackend
from webqa.pipeline import ConfigError
from webqa.websearch import FixtureSearchClient, GoogleCustomSearchClient


def _args(*argv):
    return cli.build_parser().parse_args(list(argv))


BASE = ("run", "--dataset", "d.jsonl", "--workdir", "w")


class TestEffectiveConfig:
    def test_defaults_applied(self):
        config = cli.effective_config(_args(*BASE))
        assert config["evidence"] == "search"
        assert config["scorer"] == "poe"
        assert config["num_urls"] == 20
        assert config["chunk_sentences"] == 6
        assert config["top_paragraphs"] == 50
        assert config["samples_per_paragraph"] == 4
        assert config["closed_book_samples"] == 200
        assert config["nucleus_p"] == 0.8
        assert config["temperature"] == 1.0
        assert config["heldout_fraction"] == 0.1
        assert config["backend"] == "mock"

    def test_dataset_id_defaults_to_basename(self):
        config = cli.effective_config(
            _args("run", "--dataset", "/tmp/nq.open.jsonl", "--workdir", "w"))
        assert config["dataset_id"] == "nq"

    def test_flag_overrides_default(self):
        config = cli.effective_config(_args(*BASE, "--paragraphs", "7"))
        assert config["top_paragraphs"] == 7

    def test_config_file_between_defaults_and_flags(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"top_paragraphs": 9, "seed": 4}),
                        encoding="utf-8")
        config = cli.effective_config(
            _args(*BASE, "--config", str(path), "--paragraphs", "7"))
        assert config["top_paragraphs"] == 7  # flag wins
        assert config["seed"] == 4            # file beats default

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"paragraphz": 9}), encoding="utf-8")
        with pytest.raises(ConfigError):
            cli.effective_config(_args(*BASE, "--config", str(path)))

    def test_weights_parse(self):
        config = cli.effective_config(
            _args(*BASE, "--weights", "1,0.5,0,2,1"))
        assert config["weights"] == (1.0, 0.5, 0.0, 2.0, 1.0)

    def test_weights_need_five(self):
        with pytest.raises(ConfigError):
            cli.effective_config(_args(*BASE, "--weights", "1,2,3"))

    def test_cost_points_parse(self):
        config = cli.effective_config(
            _args(*BASE, "--cost-points", "0,1,3"))
        assert config["cost_points"] == (0, 1, 3)

    def test_stop_is_newline(self):
        config = cli.effective_config(_args(*BASE))
        assert config["stop"] == ("\n",)


class TestMakeBackend:
    def test_mock_is_cached(self, tmp_path):
        config = cli.effective_config(
            _args("run", "--dataset", "d", "--workdir", str(tmp_path)))
        backend = cli.make_backend(config)
        assert isinstance(backend, CachedBackend)
        assert isinstance(backend.inner, MockBackend)

    def test_http_backend_from_url(self, tmp_path):
        config = cli.effective_config(
            _args("run", "--dataset", "d", "--workdir", str(tmp_path),
                  "--backend", "http://127.0.0.1:9"))
        backend = cli.make_backend(config)
        assert isinstance(backend.inner, HTTPBackend)

    def test_param_count_reaches_mock(self, tmp_path):
        config = cli.effective_config(
            _args("run", "--dataset", "d", "--workdir", str(tmp_path),
                  "--param-count", "7000000000"))
        backend = cli.make_backend(config)
        assert backend.describe().param_count == 7_000_000_000


class TestMakeSearchClient:
    def test_none_for_gold_and_closed(self):
        for mode in ("gold", "closed"):
            config = cli.effective_config(_args(*BASE, "--evidence", mode))
            assert cli.make_search_client(config) is None

    def test_fixture_endpoint(self):
        config = cli.effective_config(
            _args(*BASE, "--search-endpoint", "http://127.0.0.1:8123"))
        client = cli.make_search_client(config)
        assert isinstance(client, FixtureSearchClient)

    def test_google_needs_credentials(self, monkeypatch):
        monkeypatch.delenv(cli.GOOGLE_API_KEY_VAR, raising=False)
        monkeypatch.delenv(cli.GOOGLE_CSE_ID_VAR, raising=False)
        config = cli.effective_config(_args(*BASE))
        with pytest.raises(ConfigError):
            cli.make_search_client(config)

    def test_google_with_credentials(self, monkeypatch):
        monkeypatch.setenv(cli.GOOGLE_API_KEY_VAR, "k")
        monkeypatch.setenv(cli.GOOGLE_CSE_ID_VAR, "c")
        config = cli.effective_config(_args(*BASE))
        assert isinstance(cli.make_search_client(config),
                          GoogleCustomSearchClient)

    def test_offline_allows_unconfigured_google(self, monkeypatch):
        monkeypatch.delenv(cli.GOOGLE_API_KEY_VAR, raising=False)
        monkeypatch.delenv(cli.GOOGLE_CSE_ID_VAR, raising=False)
        config = cli.effective_config(_args(*BASE, "--offline"))
        client = cli.make_search_client(config)
        assert client is not None  # placeholder that fails only on cache miss


class TestMainExitCodes:
    def test_config_error_is_1(self, tmp_path, capsys):
        rc = cli.main(["run", "--dataset", str(tmp_path / "absent.jsonl"),
                       "--workdir", str(tmp_path / "w"),
                       "--evidence", "gold"])
        assert rc == 1
        assert "error" in capsys.readouterr().err.lower()

    def test_offline_cache_miss_is_3(self, tmp_path, qa_dataset_path,
                                     banks_dir, capsys):
        rc = cli.main(["run", "--dataset", str(qa_dataset_path),
                       "--workdir", str(tmp_path / "w"),
                       "--search-endpoint", "http://127.0.0.1:9",
                       "--banks-dir", str(banks_dir),
                       "--offline"])
        assert rc == 3

    def test_gold_run_exits_0(self, tmp_path, qa_dataset_path, banks_dir,
                              capsys):
        rc = cli.main(["run", "--dataset", str(qa_dataset_path),
                       "--workdir", str(tmp_path / "w"),
                       "--evidence", "gold",
                       "--banks-dir", str(banks_dir),
                       "--paragraphs", "3",
                       "--samples-per-paragraph", "2",
                       "--closed-book-samples", "4",
                       "--max-new-tokens", "16",
                       "--cost-points", "0,1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "exact_match" in out

    def test_staged_commands_compose(self, tmp_path, qa_dataset_path,
                                     banks_dir, web_root):
        """retrieve / answer / rerank / eval run as separate invocations
        against one workdir, matching what `run` produces."""
        workdir = tmp_path / "w"
        with FixtureServer(web_root) as server:
            common = ["--dataset", str(qa_dataset_path),
                      "--workdir", str(workdir),
                      "--search-endpoint", server.base_url,
                      "--banks-dir", str(banks_dir),
                      "--top-urls", "3",
                      "--paragraphs", "3",
                      "--samples-per-paragraph", "2",
                      "--closed-book-samples", "4",
                      "--max-new-tokens", "16",
                      "--scorer", "answer_prob",
                      "--cost-points", "0,1"]
            for command in ("retrieve", "answer", "rerank", "eval", "cost"):
                assert cli.main([command] + common) == 0, command
        report = json.loads(
            (workdir / "reports" / "search_answer_prob.json").read_text(
                encoding="utf-8"))
        assert report["n_questions"] == 9
