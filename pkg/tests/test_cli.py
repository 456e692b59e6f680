"""CLI round trip over the bundled demo fixture."""

import json

from litloop.cli import main


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    out = capsys.readouterr().out if capsys else ""
    return code, out


class TestCliFlow:
    def test_demo_run_review_refine_report(self, tmp_path, capsys):
        demo_dir = tmp_path / "demo"
        data_dir = str(tmp_path / "data")

        code, out = run_cli("demo", "--out", str(demo_dir), capsys=capsys)
        assert code == 0
        config_path = demo_dir / "config.json"
        assert config_path.exists()

        code, out = run_cli(
            "--data-dir", data_dir, "run", "--config", str(config_path),
            "--interactive", "--session", "s-cli", capsys=capsys,
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["status"] == "awaiting_review"

        code, out = run_cli(
            "--data-dir", data_dir, "review", "list", "--session", "s-cli",
            capsys=capsys,
        )
        assert code == 0
        queue = json.loads(out)
        assert len(queue) == 2

        for item in queue:
            code, _ = run_cli(
                "--data-dir", data_dir, "review", "approve", "--session", "s-cli",
                "--point", item["point_id"], capsys=capsys,
            )
            assert code == 0

        code, out = run_cli(
            "--data-dir", data_dir, "run", "--config", str(config_path),
            "--session", "s-cli", capsys=capsys,
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["status"] == "completed"
        assert payload["dataset_rows"] == 14

        code, out = run_cli(
            "--data-dir", data_dir, "refine", "--session", "s-cli",
            "--flag-upto", "7", capsys=capsys,
        )
        assert code == 0
        refined = json.loads(out)
        assert refined["index"] == 2
        # widening the flag band surfaces the score-6 and score-7 points,
        # so the interactive session pauses again
        assert refined["status"] == "awaiting_review"

        code, out = run_cli(
            "--data-dir", data_dir, "report", "--session", "s-cli",
            "--iteration", "1", capsys=capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert report["schema_version"] == 1

    def test_synth_eval_command(self, tmp_path, capsys):
        out_dir = tmp_path / "eval"
        code, out = run_cli(
            "synth-eval", "--materials", "2", "--targeted", "4",
            "--untargeted", "1", "--seed", "3", "--noise", "0.0",
            "--out", str(out_dir), capsys=capsys,
        )
        assert code == 0
        assert "| full |" in out
        assert (out_dir / "eval.json").exists()

    def test_error_paths_exit_2(self, tmp_path, capsys):
        code, _ = run_cli(
            "--data-dir", str(tmp_path), "review", "list", "--session", "missing",
            capsys=capsys,
        )
        assert code == 2
