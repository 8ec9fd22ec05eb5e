"""
CLI Test Fixtures

ARCHITECTURE:
- Commands run in-process through main.main(argv)
- Real stores write into pytest's tmp_path
- Tiny overrides keep every command to a few seconds

PATTERN: Dependency Injection
- Same entry point as production
- Only difference: the configuration is shrunk with --set
"""

import pytest

import main

TINY_OVERRIDES = [
    "data.n_train=6",
    "data.n_eval=3",
    "data.frames=4",
    "data.height=8",
    "data.width=8",
    "data.patch=4",
    "encoder.d_semantic=3",
    "encoder.d_detail=2",
    "ahbs.pathways=2",
    "ahbs.spatial_pool=1",
    "ahbs.d_model=8",
    "model.d=8",
    "model.layers=1",
    "model.state_dim=2",
    "model.conv_width=2",
    "train.epochs=1",
    "train.batch=4",
    "eval.max_len=4",
    "ablate.seeds=[0]",
    "bench.lengths=[8, 16]",
    "bench.trials=3",
    "bench.d=8",
    "bench.decode_tokens=4",
    "bench.decode_context=8",
    "bench.memory_steps=5",
    "bench.warmup=0",
]


@pytest.fixture
def out_dir(tmp_path):
    """Output directory for one CLI session."""
    return tmp_path / "run"


@pytest.fixture
def run_cli(out_dir, capsys):
    """
    Run one scancap command and capture its result.

    RETURNS: callable(command, *extra) -> (exit_code, stdout)
    USAGE:
        code, out = run_cli("train")
        code, out = run_cli("eval", "--set", "eval.max_len=3")
    """

    def _run(command: str, *extra: str, tiny: bool = True) -> tuple[int, str]:
        argv = [command, "--out", str(out_dir)]
        if tiny:
            for override in TINY_OVERRIDES:
                argv += ["--set", override]
        code = main.main(argv + list(extra))
        return code, capsys.readouterr().out

    return _run


@pytest.fixture
def trained(run_cli, out_dir):
    """Output directory holding manifests and a checkpoint from one tiny training run."""
    code, _ = run_cli("train")
    assert code == 0
    return out_dir
