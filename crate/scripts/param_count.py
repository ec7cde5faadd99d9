"""Layer-by-layer parameter count of the default detector."""
import json
import sys


def count(down=(8, 16, 32), up=(32, 16, 8), convs=3, k=3, up_k=2, cin=3):
    total = 0
    for cout in down:
        for _ in range(convs):
            total += cout * cin * k * k + cout  # conv weight + bias
            total += 2 * cout  # bn gamma + beta
            cin = cout
    for i, c in enumerate(up):
        nxt = up[i + 1] if i + 1 < len(up) else c
        total += c * nxt * up_k * up_k + nxt
        total += 2 * nxt
    feat = up[-1]
    total += feat + 1  # classifier
    total += feat + 1  # 1x1 heatmap conv
    return total


if __name__ == "__main__":
    cfg = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}
    print(count(**cfg))
