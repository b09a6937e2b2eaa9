import json
import subprocess
import sys

import pytest

from mtn.cli import main
from mtn.config import RunConfig, RunConfigError

TINY = ["--model.n_layers", "1", "--model.heads", "2", "--model.d_model", "16",
        "--model.d_ff", "32", "--model.modalities", "audio:8,visual:16", "--model.dropout", "0.1",
        "--model.max_history", "2", "--train.max_steps", "4", "--train.warmup_steps", "10",
        "--train.batch_size", "8", "--data.min_freq", "1"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(out), "--synth.n_dialogues", "3", "--synth.seed", "5"]) == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    ck = tmp_path_factory.mktemp("run")
    rc = main(["train", "--dataset", str(corpus / "dialogs.json"), "--features",
               str(corpus / "features"), "--train.checkpoint_dir", str(ck), *TINY])
    assert rc == 0
    return ck


def test_train_writes_log_and_checkpoint(trained):
    lines = (trained / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert {"step", "lr", "loss", "response", "query", "seed"} <= set(rec)
    manifest = json.loads((trained / "final" / "manifest.json").read_text())
    assert manifest["step"] == 4 and manifest["config"]["d_model"] == 16
    cfg = json.loads((trained / "run_config.json").read_text())
    assert cfg["train.seed"] == 0


def test_missing_dataset_exits_2(tmp_path, capsys):
    assert main(["train", "--train.checkpoint_dir", str(tmp_path)]) == 2
    assert "paths.dataset" in capsys.readouterr().err


def test_bad_value_exits_2(capsys):
    assert main(["synth", "--out", "x", "--synth.seed", "abc"]) == 2
    assert "synth.seed" in capsys.readouterr().err


def test_missing_feature_dir_exits_3(corpus, tmp_path):
    rc = main(["train", "--dataset", str(corpus / "dialogs.json"), "--features",
               str(tmp_path / "nowhere"), "--train.checkpoint_dir", str(tmp_path), *TINY])
    assert rc == 3


def test_variant_override_reaches_checkpoint(corpus, tmp_path):
    rc = main(["train", "--dataset", str(corpus / "dialogs.json"), "--features",
               str(corpus / "features"), "--train.checkpoint_dir", str(tmp_path), *TINY,
               "--variant", "no_qae", "--train.max_steps", "1"])
    assert rc == 0
    manifest = json.loads((tmp_path / "final" / "manifest.json").read_text())
    assert manifest["config"]["variant"] == "no_qae"


def test_train_is_byte_reproducible(corpus, trained, tmp_path):
    rc = main(["train", "--dataset", str(corpus / "dialogs.json"), "--features",
               str(corpus / "features"), "--train.checkpoint_dir", str(tmp_path), *TINY])
    assert rc == 0
    for f in ("manifest.json", "params.bin"):
        assert (tmp_path / "final" / f).read_bytes() == (trained / "final" / f).read_bytes()


def test_generate_beam_one_equals_greedy(corpus, trained, tmp_path):
    common = ["--checkpoint", str(trained / "final"), "--dataset", str(corpus / "dialogs.json"),
              "--features", str(corpus / "features"), "--decode.max_len", "6"]
    assert main(["generate", *common, "--beam", "1", "--output", str(tmp_path / "b.jsonl")]) == 0
    assert main(["generate", *common, "--greedy", "--output", str(tmp_path / "g.jsonl")]) == 0
    b = (tmp_path / "b.jsonl").read_text()
    assert b == (tmp_path / "g.jsonl").read_text()
    rows = [json.loads(line) for line in b.splitlines()]
    assert len(rows) == 15
    assert all(len(r["response"].split()) <= 6 for r in rows)
    assert main(["generate", *common, "--output", str(tmp_path / "b5.jsonl")]) == 0
    assert len((tmp_path / "b5.jsonl").read_text().splitlines()) == 15


def test_rank_outputs_permutations(corpus, trained, tmp_path):
    assert main(["rank", "--checkpoint", str(trained / "final"), "--dataset",
                 str(corpus / "dialogs.json"), "--features", str(corpus / "features"),
                 "--output", str(tmp_path / "r.jsonl")]) == 0
    dialogs = json.loads((corpus / "dialogs.json").read_text())["dialogs"]
    sizes = [len(t["candidates"]) for d in dialogs for t in d["dialog"]]
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(lines) == len(sizes)
    for line, k in zip(lines, sizes):
        assert sorted(json.loads(line)["ranking"]) == list(range(k))


def test_rank_without_candidates_exits_3(trained, tmp_path):
    data = {"dialogs": [{"video_id": "vid0000", "caption": "", "summary": "",
                         "dialog": [{"question": "what ?", "answer": "no"}]}]}
    (tmp_path / "d.json").write_text(json.dumps(data))
    rc = main(["rank", "--checkpoint", str(trained / "final"), "--dataset",
               str(tmp_path / "d.json"), "--features", str(trained.parent / "nowhere"),
               "--output", str(tmp_path / "r.jsonl")])
    assert rc == 3


def test_evaluate_identical_files(tmp_path, capsys):
    rows = "".join(json.dumps({"dialogue_id": i, "turn": 1, "response": "one two three four five"})
                   + "\n" for i in range(3))
    (tmp_path / "h.jsonl").write_text(rows)
    assert main(["evaluate", "--hyp", str(tmp_path / "h.jsonl"), "--ref", str(tmp_path / "h.jsonl"),
                 "--report", str(tmp_path / "rep.json")]) == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["bleu4"] == pytest.approx(1.0) and rep["count"] == 3
    assert json.loads(capsys.readouterr().out) == rep


def test_synth_twice_gives_identical_trees(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--synth.n_dialogues", "2"]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*")
                           if p.is_file())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"synth.seed": 3, "synth.n_dialogues": 2}))
    assert main(["synth", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o"),
                 "--set", "synth.seed=4"]) == 0
    cfg = json.loads((tmp_path / "o" / "synth_config.json").read_text())
    assert cfg["synth.seed"] == 4 and cfg["synth.n_dialogues"] == 2


def test_run_config_fixpoint():
    cfg = RunConfig()
    cfg.set("model.modalities", "audio:4,visual:6")
    cfg.set("train.max_steps", "12")
    cfg.set("paths.dataset", "d.json")
    again = RunConfig.from_flat(json.loads(cfg.dumps()))
    assert again == cfg and again.dumps() == cfg.dumps()
    with pytest.raises(RunConfigError):
        cfg.set("model.nonexistent", 1)


def test_run_config_defaults_are_base_setting():
    flat = RunConfig().to_flat()
    assert (flat["model.n_layers"], flat["model.heads"], flat["model.d_model"]) == (6, 8, 512)
    assert flat["train.sim_probability"] == 0.5 and flat["train.batch_size"] == 32
    assert (flat["decode.beam_size"], flat["decode.length_penalty"], flat["decode.max_len"]) == \
        (5, 1.0, 30)


def test_module_help_runs():
    out = subprocess.run([sys.executable, "-m", "mtn.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for cmd in ("train", "generate", "rank", "evaluate", "synth"):
        assert cmd in out
