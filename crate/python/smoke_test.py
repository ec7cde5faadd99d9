"""Smoke test for the pucknet_py extension.

Build with `cargo build --release -p pucknet-python`, then run
`python python/smoke_test.py` from the repository root. The script copies
target/release/libpucknet_py.so next to itself as pucknet_py.so if needed.
"""
import json
import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def load():
    built = ROOT / "target" / "release" / "libpucknet_py.so"
    local = HERE / "pucknet_py.so"
    if built.exists() and (not local.exists() or built.stat().st_mtime > local.stat().st_mtime):
        shutil.copyfile(built, local)
    sys.path.insert(0, str(HERE))
    import pucknet_py

    return pucknet_py


def main():
    pk = load()

    net = pk.PuckNet(seed=3)
    assert net.input_size == (128, 96)
    assert net.parameter_count == 33602, net.parameter_count

    world = pk.World(seed=5)
    assert len(world.karts) == 4
    for _ in range(10):
        world.step([(1.0, 0.0, False)] * 4)
    assert world.tick == 10
    rgb, mask = world.render(0, 128, 96)
    assert len(rgb) == 128 * 96 * 3 and len(mask) == 128 * 96

    preds = net.predict([rgb, rgb], 128, 96)
    assert len(preds) == 2 and preds[0] == preds[1]
    logit, x, y = preds[0]
    assert 0.0 <= x <= 400.0 and 0.0 <= y <= 300.0

    tx, ty = pk.compute_target((0.0, 0.0), (100.0, 0.0), 20.0)
    assert abs(tx + 20.0) < 1e-9 and abs(ty) < 1e-9

    assert pk.roc_auc([0.1, 0.9, 0.8, 0.2], [False, True, True, False]) == 1.0
    assert abs(pk.mae([1.0, 2.0], [2.0, 4.0]) - 1.5) < 1e-12
    try:
        pk.roc_auc([0.5], [True])
    except ValueError:
        pass
    else:
        raise AssertionError("single-class ROC should fail")

    report = json.loads(pk.play_match("oracle", "noop", seed=1, ticks=300))
    assert report["seed"] == 1 and report["ticks"] == 300
    print("smoke test ok:", net, report["goals_for"], "-", report["goals_against"])


if __name__ == "__main__":
    main()
