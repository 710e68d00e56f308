import pytest

from headblend.cli import EXIT_DATA, EXIT_USAGE, main


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def trained(tmp_path_factory, toy_dir):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--corpus", str(toy_dir / "corpus"), "--out", str(out), "--hair", str(toy_dir / "hair"),
                 "--set", "steps=2", "--set", "resolution=32", "--seed", "3"])
    assert code == 0
    return out


def test_train_outputs(trained):
    assert (trained / "checkpoint.bin").is_file()
    assert (trained / "losses.csv").read_text().count("\n") == 3
    assert "seed = 3" in (trained / "config.txt").read_text()


def test_infer_writes_outputs(tmp_path, trained, toy_dir):
    c = toy_dir / "corpus"
    code = main(["infer", "--source", str(c / "0000"), "--target", str(c / "0001"),
                 "--ckpt", str(trained / "checkpoint.bin"), "--out", str(tmp_path)])
    assert code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"Y.png", "M.png", "attn_colorizer.png", "attn_fpat.png"} <= names


def test_viz_attn(tmp_path, trained, toy_dir):
    c = toy_dir / "corpus"
    assert main(["viz-attn", "--source", str(c / "0002"), "--target", str(c / "0002"),
                 "--ckpt", str(trained / "checkpoint.bin"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "patch_labels.png").is_file() and (tmp_path / "M.png").is_file()


def test_metrics_same_dir(toy_dir, capsys):
    assert main(["metrics", str(toy_dir / "corpus"), str(toy_dir / "corpus")]) == 0
    out = capsys.readouterr().out
    assert "PSNR 100.00 dB" in out and "SSIM 1.0000" in out and "L1 0.000000" in out


def test_augment_is_deterministic(tmp_path, toy_dir):
    args = ["augment", "--corpus", str(toy_dir / "corpus"), "--hair", str(toy_dir / "hair"), "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 8 * 3


def test_synth(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--n", "2", "--resolution", "32", "--hair", "1"]) == 0
    assert (tmp_path / "corpus" / "0001" / "parsing.png").is_file()


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["metrics", "--bogus", "a", "b"])
    assert exc.value.code == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_missing_files_are_data_errors(tmp_path, capsys):
    assert main(["metrics", str(tmp_path / "x"), str(tmp_path / "y")]) == EXIT_DATA
    assert main(["infer", "--source", str(tmp_path), "--target", str(tmp_path),
                 "--ckpt", str(tmp_path / "none.bin")]) == EXIT_DATA
    assert "usage" in capsys.readouterr().err


def test_bad_override_is_usage_error(tmp_path, toy_dir):
    assert main(["augment", "--corpus", str(toy_dir / "corpus"), "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_USAGE
