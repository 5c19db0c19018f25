import numpy as np
import pytest

from stegocrypt.cli import main
from stegocrypt.imaging import ImageBuffer, mse_per_pixel, read_ppm, write_ppm
from stegocrypt.pipeline import TrainConfig, format_train_config, train

TINY_CFG = TrainConfig(epochs=2, pairs=4, batch_size=4, image_size=8, grid_side=2)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    for name in ("cover", "secret"):
        img = ImageBuffer(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
        (root / f"{name}.ppm").write_bytes(write_ppm(img))
    (root / "toy.cfg").write_text(format_train_config(TINY_CFG))
    return root


@pytest.fixture(scope="module")
def checkpoint(workdir):
    path = workdir / "toy.sgn"
    path.write_bytes(train(TINY_CFG).checkpoint)
    return path


class TestKeygen:
    def test_writes_exact_file(self, tmp_path):
        out = tmp_path / "k.key"
        assert main(["keygen", "--seed", "42", "--grid", "14", "--out", str(out)]) == 0
        assert out.read_text() == "SGKEY1 42 14\n"

    def test_missing_seed_is_usage_error(self, tmp_path, capsys):
        assert main(["keygen", "--grid", "2", "--out", str(tmp_path / "k")]) == 2
        capsys.readouterr()

    def test_grid_zero_names_flag(self, tmp_path, capsys):
        code = main(["keygen", "--seed", "1", "--grid", "0", "--out", str(tmp_path / "k")])
        assert code == 2
        assert "--grid" in capsys.readouterr().err

    def test_unwritable_path(self, capsys):
        assert main(["keygen", "--seed", "1", "--grid", "2",
                     "--out", "/nonexistent-dir/k.key"]) == 2
        capsys.readouterr()


class TestEncryptDecrypt:
    def test_roundtrip_byte_identical(self, workdir, tmp_path):
        key = tmp_path / "k.key"
        enc = tmp_path / "enc.ppm"
        dec = tmp_path / "dec.ppm"
        assert main(["keygen", "--seed", "9", "--grid", "4", "--out", str(key)]) == 0
        assert main(["encrypt", "--in", str(workdir / "cover.ppm"), "--key", str(key),
                     "--out", str(enc)]) == 0
        assert main(["decrypt", "--in", str(enc), "--key", str(key),
                     "--out", str(dec)]) == 0
        assert dec.read_bytes() == (workdir / "cover.ppm").read_bytes()

    def test_identity_key_copies_image(self, workdir, tmp_path):
        key = tmp_path / "k.key"
        out = tmp_path / "out.ppm"
        main(["keygen", "--seed", "3", "--grid", "1", "--out", str(key)])
        assert main(["encrypt", "--in", str(workdir / "cover.ppm"), "--key", str(key),
                     "--out", str(out)]) == 0
        assert out.read_bytes() == (workdir / "cover.ppm").read_bytes()

    def test_indivisible_dims_exit_3_with_suggestion(self, tmp_path, capsys):
        img = ImageBuffer(np.zeros((9, 9, 3), dtype=np.uint8))
        src = tmp_path / "odd.ppm"
        src.write_bytes(write_ppm(img))
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "3", "--grid", "2", "--out", str(key)])
        code = main(["encrypt", "--in", str(src), "--key", str(key),
                     "--out", str(tmp_path / "x.ppm")])
        assert code == 3
        assert "8x8" in capsys.readouterr().err

    def test_malformed_ppm_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n2 2\n255\n\x00")
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "3", "--grid", "2", "--out", str(key)])
        assert main(["encrypt", "--in", str(bad), "--key", str(key),
                     "--out", str(tmp_path / "x.ppm")]) == 3
        capsys.readouterr()

    def test_histogram_csv_identical_before_and_after(self, workdir, tmp_path):
        key = tmp_path / "k.key"
        enc = tmp_path / "enc.ppm"
        main(["keygen", "--seed", "9", "--grid", "4", "--out", str(key)])
        main(["encrypt", "--in", str(workdir / "cover.ppm"), "--key", str(key),
              "--out", str(enc)])
        csv_a = tmp_path / "a.csv"
        csv_b = tmp_path / "b.csv"
        assert main(["report", "--what", "histogram", "--in", str(workdir / "cover.ppm"),
                     "--out-csv", str(csv_a)]) == 0
        assert main(["report", "--what", "histogram", "--in", str(enc),
                     "--out-csv", str(csv_b)]) == 0
        assert csv_a.read_text() == csv_b.read_text()


class TestTrain:
    def test_smoke_run_writes_outputs(self, workdir, tmp_path):
        cfg = tmp_path / "one.cfg"
        cfg.write_text(format_train_config(
            TrainConfig(epochs=1, pairs=1, batch_size=1, image_size=8, grid_side=2)))
        ckpt = tmp_path / "m.sgn"
        csv = tmp_path / "m.csv"
        assert main(["train", "--config", str(cfg), "--out-checkpoint", str(ckpt),
                     "--metrics-csv", str(csv)]) == 0
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "epoch,encode_loss,reveal_loss,cover_mse,secret_mse"
        assert len(lines) == 2

    def test_rerun_identical_checkpoint(self, workdir, tmp_path):
        ckpt_a = tmp_path / "a.sgn"
        ckpt_b = tmp_path / "b.sgn"
        for out in (ckpt_a, ckpt_b):
            assert main(["train", "--config", str(workdir / "toy.cfg"),
                         "--out-checkpoint", str(out)]) == 0
        assert ckpt_a.read_bytes() == ckpt_b.read_bytes()

    def test_bad_config_key_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("quantum_flux=9\n")
        assert main(["train", "--config", str(cfg),
                     "--out-checkpoint", str(tmp_path / "m.sgn")]) == 2
        capsys.readouterr()


class TestHideReveal:
    def test_roundtrip_finite_error(self, workdir, checkpoint, tmp_path):
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "42", "--grid", "2", "--out", str(key)])
        container = tmp_path / "container.ppm"
        assert main(["hide", "--checkpoint", str(checkpoint), "--key", str(key),
                     "--cover", str(workdir / "cover.ppm"),
                     "--secret", str(workdir / "secret.ppm"),
                     "--out", str(container)]) == 0
        revealed = tmp_path / "revealed.ppm"
        secret_out = tmp_path / "secret_out.ppm"
        assert main(["reveal", "--checkpoint", str(checkpoint), "--key", str(key),
                     "--container", str(container),
                     "--out-revealed", str(revealed),
                     "--out-secret", str(secret_out)]) == 0
        got = read_ppm(secret_out.read_bytes())
        err = mse_per_pixel(got, read_ppm((workdir / "secret.ppm").read_bytes()))
        assert np.isfinite(err)

    def test_hide_deterministic(self, workdir, checkpoint, tmp_path):
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "42", "--grid", "2", "--out", str(key)])
        outs = []
        for name in ("c1.ppm", "c2.ppm"):
            out = tmp_path / name
            assert main(["hide", "--checkpoint", str(checkpoint), "--key", str(key),
                         "--cover", str(workdir / "cover.ppm"),
                         "--secret", str(workdir / "secret.ppm"),
                         "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_shape_mismatch_exit_3(self, workdir, checkpoint, tmp_path):
        small = tmp_path / "small.ppm"
        small.write_bytes(write_ppm(ImageBuffer(np.zeros((4, 4, 3), dtype=np.uint8))))
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "42", "--grid", "2", "--out", str(key)])
        assert main(["hide", "--checkpoint", str(checkpoint), "--key", str(key),
                     "--cover", str(workdir / "cover.ppm"), "--secret", str(small),
                     "--out", str(tmp_path / "x.ppm")]) == 3


class TestAttack:
    def test_writes_residual_and_csv(self, workdir, checkpoint, tmp_path):
        key = tmp_path / "k.key"
        main(["keygen", "--seed", "42", "--grid", "2", "--out", str(key)])
        residual = tmp_path / "res.ppm"
        csv = tmp_path / "res.csv"
        assert main(["attack", "--checkpoint", str(checkpoint), "--key", str(key),
                     "--cover", str(workdir / "cover.ppm"),
                     "--secret", str(workdir / "secret.ppm"),
                     "--out-residual", str(residual), "--out-csv", str(csv)]) == 0
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "encrypted,similarity"
        assert lines[1].startswith("1,")
        assert read_ppm(residual.read_bytes()).height == 8

    def test_without_key_flags_unencrypted(self, workdir, checkpoint, tmp_path):
        csv = tmp_path / "res.csv"
        assert main(["attack", "--checkpoint", str(checkpoint),
                     "--cover", str(workdir / "cover.ppm"),
                     "--secret", str(workdir / "secret.ppm"),
                     "--out-residual", str(tmp_path / "r.ppm"),
                     "--out-csv", str(csv)]) == 0
        assert csv.read_text().strip().splitlines()[1].startswith("0,")


class TestReport:
    def test_keyspace_row(self, tmp_path):
        csv = tmp_path / "ks.csv"
        assert main(["report", "--what", "keyspace", "--blocks", "196",
                     "--ops-per-second", "1e16", "--out-csv", str(csv)]) == 0
        header, row = csv.read_text().strip().splitlines()
        assert header == "blocks,log10_permutations,log2_permutations,log10_years"
        fields = row.split(",")
        assert fields[0] == "196"
        assert abs(float(fields[1]) - 365.7) < 0.1
        assert abs(float(fields[3]) - 342.2) < 0.2

    def test_histogram_constant_image_single_bin(self, tmp_path):
        img = tmp_path / "c.ppm"
        img.write_bytes(write_ppm(ImageBuffer(np.full((4, 4, 3), 77, dtype=np.uint8))))
        csv = tmp_path / "h.csv"
        heat = tmp_path / "h.ppm"
        assert main(["report", "--what", "histogram", "--in", str(img),
                     "--out-csv", str(csv), "--out-heatmap", str(heat)]) == 0
        rows = [line.split(",") for line in csv.read_text().strip().splitlines()[1:]]
        nonzero = [(c, b, n) for c, b, n in rows if int(n) > 0]
        assert nonzero == [(c, "77", "16") for c in "012"]
        assert read_ppm(heat.read_bytes()).width == 256

    def test_correlation_trend_monotone(self, tmp_path):
        from stegocrypt.imaging import synth_dataset
        paths = []
        for i, img in enumerate(synth_dataset(42, 8, 56, "gradients")):
            p = tmp_path / f"g{i}.ppm"
            p.write_bytes(write_ppm(img))
            paths.append(str(p))
        csv = tmp_path / "corr.csv"
        assert main(["report", "--what", "correlation", "--in", *paths,
                     "--grids", "2,4,8,14", "--out-csv", str(csv)]) == 0
        rows = csv.read_text().strip().splitlines()[1:]
        values = [float(r.split(",")[2]) for r in rows]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_unknown_kind_usage_error(self, tmp_path, capsys):
        assert main(["report", "--what", "sparkle",
                     "--out-csv", str(tmp_path / "x.csv")]) == 2
        capsys.readouterr()

    def test_sweep_csv(self, workdir, tmp_path):
        csv = tmp_path / "sweep.csv"
        assert main(["report", "--what", "sweep", "--config", str(workdir / "toy.cfg"),
                     "--betas", "0.25,1", "--out-csv", str(csv)]) == 0
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "beta,cover_mse,secret_mse"
        assert len(lines) == 3
