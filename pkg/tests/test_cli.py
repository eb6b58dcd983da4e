"""End-to-end CLI tests on a miniature pipeline.

The full toolchain (make-toy -> train-ae -> train-diff -> sample -> eval)
runs with deliberately tiny settings so the whole module stays fast.
"""

import numpy as np
import pytest

from lmdm.checkpoint import load_checkpoint
from lmdm.cli import main
from lmdm.data import read_xyz

TINY = ["--set", "T=8", "--set", "max_steps=5", "--set", "hidden_dim=8",
        "--set", "n_layers=1", "--set", "n_conv=1", "--set", "batch_size=2"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the training commands once and share the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "toy.xyz"
    ae = root / "ae.ckpt"
    diff = root / "diff.ckpt"
    assert main(["make-toy", "--kind", "chains", "--n", "12",
                 "--out", str(data)]) == 0
    assert main(["train-ae", "--data", str(data), "--out", str(ae)] + TINY) == 0
    assert main(["train-diff", "--data", str(data), "--ae", str(ae),
                 "--out", str(diff)] + TINY) == 0
    return root, data, ae, diff


class TestMakeToyAndIngest:
    def test_make_toy_writes_xyz(self, tmp_path):
        out = tmp_path / "toy.xyz"
        assert main(["make-toy", "--kind", "mixed", "--n", "5",
                     "--out", str(out)]) == 0
        assert len(read_xyz(out)) == 5

    def test_ingest_centers_molecules(self, tmp_path):
        src = tmp_path / "src.xyz"
        dst = tmp_path / "dst.xyz"
        main(["make-toy", "--kind", "chains", "--n", "3", "--out", str(src)])
        assert main(["ingest", "--data", str(src), "--out", str(dst)]) == 0
        for mol in read_xyz(dst):
            assert np.abs(mol.coords.mean(axis=0)).max() <= 1e-5

    def test_ingest_missing_file_exit_1(self, tmp_path, capsys):
        rc = main(["ingest", "--data", str(tmp_path / "nope.xyz"),
                   "--out", str(tmp_path / "o.xyz")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestTrainCheckpoints:
    def test_ae_checkpoint_contents(self, pipeline):
        _, _, ae, _ = pipeline
        stage, arrays, config, seed = load_checkpoint(ae)
        assert stage == "ae"
        assert config["T"] == "8" and config["hidden_dim"] == "8"
        assert any(name.startswith("encoder") for name in arrays)
        assert any(name.startswith("decoder") for name in arrays)

    def test_diff_checkpoint_has_node_histogram(self, pipeline):
        _, _, _, diff = pipeline
        stage, arrays, config, _ = load_checkpoint(diff)
        assert stage == "diffusion"
        assert "node_hist_sizes" in arrays and "node_hist_counts" in arrays
        assert arrays["node_hist_counts"].sum() == 12

    def test_training_log_written(self, pipeline, tmp_path):
        root, data, ae, _ = pipeline
        log = tmp_path / "train.jsonl"
        out = tmp_path / "ae2.ckpt"
        assert main(["train-ae", "--data", str(data), "--out", str(out),
                     "--log", str(log)] + TINY) == 0
        lines = log.read_text().splitlines()
        assert len(lines) >= 5 and '"stage": "ae"' in lines[0]

    def test_config_mismatch_rejected(self, pipeline, tmp_path):
        _, data, ae, _ = pipeline
        out = tmp_path / "diff2.ckpt"
        rc = main(["train-diff", "--data", str(data), "--ae", str(ae),
                   "--out", str(out)] + TINY + ["--set", "hidden_dim=16"])
        assert rc == 1

    def test_wrong_stage_checkpoint_rejected(self, pipeline, tmp_path):
        _, data, ae, diff = pipeline
        out = tmp_path / "x.ckpt"
        rc = main(["train-diff", "--data", str(data), "--ae", str(diff),
                   "--out", str(out)] + TINY)
        assert rc == 1


class TestSampleAndEval:
    def test_sample_histogram_sizes(self, pipeline, tmp_path):
        _, data, ae, diff = pipeline
        out = tmp_path / "gen.xyz"
        assert main(["sample", "--ae", str(ae), "--diff", str(diff),
                     "--n", "4", "--seed", "1", "--out", str(out)]) == 0
        mols = read_xyz(out)
        assert len(mols) == 4
        train_sizes = {m.n_atoms for m in read_xyz(data)}
        assert {m.n_atoms for m in mols} <= train_sizes

    def test_sample_fixed_n(self, pipeline, tmp_path):
        _, _, ae, diff = pipeline
        out = tmp_path / "gen.xyz"
        assert main(["sample", "--ae", str(ae), "--diff", str(diff),
                     "--n", "2", "--fixed-n", "5", "--out", str(out)]) == 0
        assert all(m.n_atoms == 5 for m in read_xyz(out))

    def test_sample_reproducible(self, pipeline, tmp_path):
        _, _, ae, diff = pipeline
        a, b = tmp_path / "a.xyz", tmp_path / "b.xyz"
        for out in (a, b):
            main(["sample", "--ae", str(ae), "--diff", str(diff),
                  "--n", "2", "--seed", "7", "--out", str(out)])
        assert a.read_text() == b.read_text()

    def test_eval_prints_metrics(self, pipeline, tmp_path, capsys):
        _, data, _, _ = pipeline
        records = tmp_path / "metrics.txt"
        assert main(["eval", "--generated", str(data),
                     "--reference", str(data),
                     "--records", str(records)]) == 0
        out = capsys.readouterr().out
        assert "validity" in out and "novelty" in out
        recs = records.read_text()
        assert "metric=validity value=100.0000" in recs
        assert "metric=novelty value=0.0000" in recs  # same set: nothing novel

    def test_eval_allow_fragments(self, tmp_path, capsys):
        frag = tmp_path / "frag.xyz"
        frag.write_text("4\nfragments\nH 0 0 0\nH 0.74 0 0\n"
                        "H 9 0 0\nH 9.74 0 0\n")
        main(["eval", "--generated", str(frag)])
        strict = capsys.readouterr().out
        main(["eval", "--generated", str(frag), "--allow-fragments"])
        loose = capsys.readouterr().out
        assert "0.00" in strict.splitlines()[0]
        assert "100.00" in loose.splitlines()[0]


class TestUsageErrors:
    def test_unknown_command_exit_2(self):
        assert main(["squash"]) == 2

    def test_missing_required_arg_exit_2(self):
        assert main(["make-toy", "--out", "x.xyz"]) == 2

    def test_bad_set_syntax_exit_1(self, tmp_path):
        rc = main(["train-ae", "--data", str(tmp_path / "d.xyz"),
                   "--out", str(tmp_path / "o.ckpt"), "--set", "badpair"])
        assert rc == 1


class TestConditioning:
    def test_sidecar_end_to_end(self, tmp_path):
        data = tmp_path / "toy.xyz"
        side = tmp_path / "props.txt"
        ae = tmp_path / "ae.ckpt"
        diff = tmp_path / "diff.ckpt"
        out = tmp_path / "gen.xyz"
        main(["make-toy", "--kind", "chains", "--n", "6", "--out", str(data)])
        side.write_text("gap\n" + "\n".join(str(0.1 * i) for i in range(6)) + "\n")
        assert main(["train-ae", "--data", str(data), "--out", str(ae),
                     "--sidecar", str(side)] + TINY) == 0
        assert main(["train-diff", "--data", str(data), "--ae", str(ae),
                     "--out", str(diff), "--sidecar", str(side)] + TINY) == 0
        assert main(["sample", "--ae", str(ae), "--diff", str(diff),
                     "--n", "2", "--condition", "0.5",
                     "--out", str(out)]) == 0
        assert len(read_xyz(out)) == 2

    def test_sidecar_shape_mismatch(self, tmp_path):
        data = tmp_path / "toy.xyz"
        side = tmp_path / "props.txt"
        main(["make-toy", "--kind", "chains", "--n", "4", "--out", str(data)])
        side.write_text("gap\n1.0\n2.0\n")  # only two rows for four molecules
        rc = main(["train-ae", "--data", str(data),
                   "--out", str(tmp_path / "ae.ckpt"),
                   "--sidecar", str(side)] + TINY)
        assert rc == 1
