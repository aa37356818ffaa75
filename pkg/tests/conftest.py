import pytest

from digitasr.cli import run_cli

SMALL_WORDS = "WAHID,SIFR,SITTA"


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """Tiny synthetic corpus plus a model trained on it through the CLI."""
    root = tmp_path_factory.mktemp("small")
    assert run_cli(["synth-corpus", "--out", str(root / "train"), "--words", SMALL_WORDS,
                    "--speakers", "2", "--repetitions", "2", "--seed", "3"]) == 0
    assert run_cli(["synth-corpus", "--out", str(root / "test"), "--words", SMALL_WORDS,
                    "--speakers", "2", "--repetitions", "1", "--seed", "4",
                    "--speaker-prefix", "H"]) == 0
    cfg = root / "train.cfg"
    cfg.write_text("codebook_size = 16\nmax_iters = 6  # keep it quick\n")
    assert run_cli(["train", "--manifest", str(root / "train/manifest.tsv"),
                    "--out", str(root / "model.aam"), "--config", str(cfg)]) == 0
    return root


CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
