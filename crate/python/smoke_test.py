"""Smoke test for the cvnn Python extension.

Build and install first:

    pip install --no-build-isolation -e crates/python
"""

import cmath
import math

import cvnn


def check_activations():
    z = 0.3 - 0.7j
    assert abs(cvnn.activate("ctanh", z) - cmath.tanh(z)) < 1e-15
    d_dz, d_dzbar = cvnn.activation_partials("ctanh", z)
    assert abs(d_dz - (1 - cmath.tanh(z) ** 2)) < 1e-12
    assert d_dzbar == 0
    assert cvnn.holomorphy_residual("ctanh", z) < 1e-6
    assert cvnn.holomorphy_residual("crelu", -0.5 + 0.8j) >= 0.5


def check_losses():
    o, d = [1 + 1j, -0.5j], [0.5 + 0j, 1j]
    expected = 0.5 * sum(abs(a - b) ** 2 for a, b in zip(d, o))
    assert abs(cvnn.loss("quadratic", o, d) - expected) < 1e-15
    for d_dz, d_dzbar in cvnn.loss_partials("log", o, d):
        assert d_dzbar == d_dz.conjugate()


def check_training():
    theta = math.pi / 3
    data = cvnn.Dataset.generate("rotation", n=128, seed=4, theta=theta)
    assert len(data) == 128
    net = cvnn.Network.random(1, [1], activation="identity", mode="fully_complex", bias=False, seed=4)
    rows = net.train(data, eta=0.1, epochs=100, batch=16, seed=4)
    assert len(rows) == 100
    loss, accuracy = net.evaluate(data)
    assert loss < 1e-6 and accuracy is None
    w = net.weights(0)[0][0]
    assert abs(cmath.phase(w) - theta) < 1e-3

    back = cvnn.Network.from_json(net.to_json())
    assert back == net


def check_grad_check():
    net = cvnn.Network.random(2, [4, 2], activation="cardioid", output_activation="identity", seed=7)
    report = net.grad_check([0.3 + 0.1j, -0.2 + 0.4j], [1 + 0j, -1j])
    assert report["status"] == "pass", report
    loss, grads = net.gradient([0.3 + 0.1j, -0.2 + 0.4j], [1 + 0j, -1j])
    assert loss >= 0 and len(grads) == 2 and len(grads[0]) == 4 and len(grads[0][0]) == 3


def check_mvn():
    data = cvnn.Dataset.generate("arcs", n=20, seed=2)
    net = cvnn.Network.random(1, [1], activation="mvn", seed=2)
    rows = net.train_mvn(data, max_epochs=50)
    assert rows[-1]["accuracy"] == 1.0


def check_errors():
    try:
        cvnn.Network.random(1, [1], activation="nope")
    except cvnn.CvnnError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("bad activation accepted")


if __name__ == "__main__":
    check_activations()
    check_losses()
    check_training()
    check_grad_check()
    check_mvn()
    check_errors()
    print("python smoke test passed")
